"""Procedural histology-like samples.

A sample is built from two independent factors. The anatomy is a grayscale structure field
whose texture depends only on the class label: faint elongated fibers for class 0, dense small
nuclei for class 1. The characteristic is the domain's stain: an affine color map of the field,
a hue rotation about the gray axis and a low-frequency noise texture on top.
"""

import math

from typing import Tuple

import numpy as np

from . import errors, imaging, settings
from .essentials import DomainSample

Vector = Tuple[float, float, float]

NUM_CLASSES = 2


class Domain:
    def __init__(
        self,
        domain_id: int,
        name: str,
        offset: Vector,
        gain: Vector,
        hue_deg: float,
        noise_amplitude: float,
        noise_scale: int = 8,
    ) -> None:
        self.domain_id = domain_id
        self.name = name
        self.offset = np.array(offset, dtype=np.float64)
        self.gain = np.array(gain, dtype=np.float64)
        self.hue_deg = hue_deg
        self.noise_amplitude = noise_amplitude
        self.noise_scale = noise_scale

    def rotation(self) -> np.ndarray:
        """Rotation of RGB space about the gray axis by the domain's hue angle."""

        theta = math.radians(self.hue_deg)
        k = np.ones(3) / math.sqrt(3.0)
        cross = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        return (
            math.cos(theta) * np.eye(3)
            + math.sin(theta) * cross
            + (1.0 - math.cos(theta)) * np.outer(k, k)
        )

    def parameters(self) -> np.ndarray:
        """Flat parameter vector of the color transform."""

        return np.concatenate([self.offset, self.gain, [self.hue_deg]])

    def __repr__(self) -> str:
        return f"Domain({self.domain_id}, {self.name}, hue={self.hue_deg})"


def domain(domain_id: int) -> Domain:
    if domain_id not in settings.DOMAINS:
        known = ", ".join(str(d) for d in sorted(settings.DOMAINS))
        raise errors.CorpusError(f"Unknown domain {domain_id}, expected one of: {known}")
    return settings.DOMAINS[domain_id]


def _gaussian(
    ys: np.ndarray,
    xs: np.ndarray,
    center: Tuple[float, float],
    angle: float,
    sigma_long: float,
    sigma_short: float,
) -> np.ndarray:
    dy, dx = ys - center[0], xs - center[1]
    u = dx * math.cos(angle) + dy * math.sin(angle)
    v = -dx * math.sin(angle) + dy * math.cos(angle)
    return np.exp(-0.5 * ((u / sigma_long) ** 2 + (v / sigma_short) ** 2))


def generate_structure(label: int, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """Draws the size×size anatomy field in [0,1] for one class."""

    if label not in range(NUM_CLASSES):
        raise errors.CorpusError(f"Unknown anatomy class {label}")

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    scale = size / 32.0
    field = np.zeros((size, size))
    if label == 0:
        for _ in range(rng.integers(2, 5)):
            center = (rng.uniform(0, size), rng.uniform(0, size))
            angle = rng.uniform(0.0, math.pi)
            amplitude = rng.uniform(0.35, 0.55)
            sigma_short = rng.uniform(2.5, 3.5) * scale
            sigma_long = rng.uniform(6.0, 10.0) * scale
            field += amplitude * _gaussian(ys, xs, center, angle, sigma_long, sigma_short)
    else:
        for _ in range(rng.integers(16, 25)):
            center = (rng.uniform(0, size), rng.uniform(0, size))
            amplitude = rng.uniform(0.75, 1.0)
            sigma = rng.uniform(1.0, 1.6) * scale
            field += amplitude * _gaussian(ys, xs, center, 0.0, sigma, sigma)
    return np.clip(field, 0.0, 1.0)


def structure_statistic(field: np.ndarray) -> float:
    """Mean absolute gradient of a grayscale field; high for nuclei, low for fibers."""

    return float(np.abs(np.diff(field, axis=1)).mean() + np.abs(np.diff(field, axis=0)).mean())


def noise_texture(dom: Domain, rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth per-channel noise: a coarse uniform grid upsampled bicubically."""

    coarse = max(2, size // dom.noise_scale)
    grid = rng.uniform(-1.0, 1.0, (3, coarse, coarse)) * dom.noise_amplitude
    return imaging.resize_bicubic(grid, size, size)


def stain(field: np.ndarray, dom: Domain) -> np.ndarray:
    """Noise-free color map of a structure field, 3×H×W."""

    colors = dom.offset[:, None, None] + dom.gain[:, None, None] * field[None]
    return np.einsum("ij,jhw->ihw", dom.rotation(), colors)


def invert(image: np.ndarray, domain_id: int) -> np.ndarray:
    """Recovers the structure field from a noise-free, unclipped stained image."""

    dom = domain(domain_id)
    colors = np.einsum("ij,jhw->ihw", dom.rotation().T, image)
    return ((colors - dom.offset[:, None, None]) / dom.gain[:, None, None]).mean(axis=0)


def generate_sample(
    label: int,
    domain_id: int,
    rng: np.random.Generator,
    split: settings.Split = settings.Split.TRAIN,
    labeled: bool = True,
    size: int = 32,
    texture: bool = True,
) -> DomainSample:
    """Draws one sample. The structure is drawn from `rng` first, so equal generator states
    give equal structure in every domain."""

    dom = domain(domain_id)
    field = generate_structure(label, rng, size)
    image = stain(field, dom)
    if texture:
        image = image + noise_texture(dom, rng, size)
    return DomainSample(np.clip(image, 0.0, 1.0), label, domain_id, split, labeled)


def outside_hull(candidate: np.ndarray, points: np.ndarray) -> bool:
    """Tells whether some coordinate of `candidate` lies outside the range spanned by `points`,
    which is sufficient for being outside their convex hull."""

    return bool(np.any(candidate < points.min(axis=0)) or np.any(candidate > points.max(axis=0)))


for dom in [
    Domain(0, "he_a", (0.90, 0.76, 0.86), (-0.45, -0.52, -0.28), 0.0, 0.020),
    Domain(1, "he_b", (0.86, 0.70, 0.84), (-0.40, -0.48, -0.22), 10.0, 0.025),
    Domain(2, "he_c", (0.88, 0.74, 0.80), (-0.50, -0.55, -0.30), 20.0, 0.030),
    Domain(3, "he_faded", (0.84, 0.72, 0.78), (-0.42, -0.46, -0.26), 40.0, 0.030),
    Domain(4, "ihc_like", (0.85, 0.82, 0.80), (-0.35, -0.45, -0.55), 150.0, 0.035),
]:
    settings.DOMAINS[dom.domain_id] = dom

