"""Reconstruction metrics and image dumps of trained encoders."""

import logging, math

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import errors, geometry, imaging, settings, tensor, utils
from .encoder import Encoder, split
from .essentials import Corpus, DomainSample, images_of
from .synthesizer import reconstruct, synthesize
from .tensor import Tensor

METRIC_HEADER = ("metric", "split", "domain", "mean", "std", "n")
ALL_DOMAINS = "all"


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0,1]; identical images give infinity."""

    if x.shape != y.shape:
        raise errors.DimensionError(f"Can not compare images of shapes {x.shape} and {y.shape}")
    mse = float(np.mean(np.square(np.asarray(x, np.float64) - np.asarray(y, np.float64))))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    array = np.asarray(values, dtype=np.float64)
    if np.isinf(array).any():
        return math.inf, math.inf
    return float(array.mean()), float(array.std())


class MetricReport:
    """Per-sample PSNR of one split with the domain of every sample."""

    def __init__(self, split: str, values: Sequence[float], domains: Sequence[int]) -> None:
        self.split = split
        self.values = list(values)
        self.domains = list(domains)

    @property
    def mean(self) -> float:
        return mean_std(self.values)[0]

    @property
    def std(self) -> float:
        return mean_std(self.values)[1]

    def per_domain(self) -> Dict[int, List[float]]:
        result: Dict[int, List[float]] = dict()
        for value, domain_id in zip(self.values, self.domains):
            result.setdefault(domain_id, list()).append(value)
        return result

    def rows(self) -> List[List[object]]:
        groups: List[Tuple[str, List[float]]] = [(ALL_DOMAINS, self.values)]
        groups.extend((str(d), v) for d, v in sorted(self.per_domain().items()))
        rows = list()
        for domain, values in groups:
            mean, std = mean_std(values)
            rows.append(
                ["psnr", self.split, domain, utils.format_float(mean), utils.format_float(std)]
                + [len(values)]
            )
        return rows

    def __repr__(self) -> str:
        return f"MetricReport({self.split}: {utils.format_float(self.mean, 2)} dB, n={len(self)})"

    def __len__(self) -> int:
        return len(self.values)


def embed(encoder: Encoder, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Embeddings `N×P×L` of an image array, computed without recording a graph."""

    patch_size = encoder.config.patch_size
    chunks = list()
    with tensor.no_grad():
        for start in range(0, len(images), batch_size):
            batch = Tensor(images[start : start + batch_size])
            chunks.append(encoder(geometry.patchify(batch, patch_size)).numpy())
    return np.concatenate(chunks)


def reconstruct_images(encoder: Encoder, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    chunks = list()
    with tensor.no_grad():
        for start in range(0, len(images), batch_size):
            chunks.append(reconstruct(Tensor(images[start : start + batch_size]), encoder).numpy())
    return np.concatenate(chunks)


def eval_reconstruction(
    encoder: Encoder, samples: Sequence[DomainSample], split_name: str
) -> MetricReport:
    """PSNR of every sample against its self-reconstruction, clamped to [0,1] as when exported."""

    if len(samples) == 0:
        raise errors.CorpusError(f"Split '{split_name}' is empty")
    images = images_of(samples)
    if images.shape[1:] != encoder.config.geometry().image_shape:
        raise errors.ConfigError(
            f"Encoder geometry {encoder.config.geometry()} does not match images {images.shape[1:]}"
        )
    restored = np.clip(reconstruct_images(encoder, images), 0.0, 1.0)
    values = [psnr(x, y) for x, y in zip(images, restored)]
    report = MetricReport(split_name, values, [s.domain_id for s in samples])
    logging.info(f"Reconstruction on {report}")
    return report


def eval_splits(
    encoder: Encoder, corpus: Corpus, splits: Sequence[settings.Split]
) -> List[MetricReport]:
    return [
        eval_reconstruction(encoder, corpus.get(split), split.value)
        for split in splits
        if len(corpus.get(split)) > 0
    ]


def write_metrics(path: str, reports: Sequence[MetricReport]) -> None:
    utils.write_csv(path, METRIC_HEADER, (row for r in reports for row in r.rows()))
    logging.info(f"Metrics written to '{path}'")


class MixGrid:
    """Synthetic images of every (donor row, anatomy column) pair plus the originals."""

    def __init__(
        self,
        anatomy: np.ndarray,
        donors: np.ndarray,
        cells: np.ndarray,
        patches: np.ndarray,
    ) -> None:
        self.anatomy = anatomy
        self.donors = donors
        self.cells = cells
        self.patches = patches

    def image(self) -> np.ndarray:
        """Tiles the grid: the header row shows the anatomy sources, the header column the donors;
        the corner stays black."""

        rows, cols = self.cells.shape[:2]
        c, h, w = self.anatomy.shape[1:]
        canvas = np.zeros((c, (rows + 1) * h, (cols + 1) * w))
        for col in range(cols):
            canvas[:, :h, (col + 1) * w : (col + 2) * w] = self.anatomy[col]
        for row in range(rows):
            top = (row + 1) * h
            canvas[:, top : top + h, :w] = self.donors[row]
            for col in range(cols):
                canvas[:, top : top + h, (col + 1) * w : (col + 2) * w] = self.cells[row, col]
        return np.clip(canvas, 0.0, 1.0)


def mix_grid(
    encoder: Encoder,
    anatomy_images: np.ndarray,
    donor_images: np.ndarray,
    rng: np.random.Generator,
) -> MixGrid:
    """Cell (r, c) combines the anatomy of column source c with one random patch
    characteristic of donor r."""

    geo = encoder.config.geometry()
    z_a, _ = split(Tensor(embed(encoder, anatomy_images)))
    _, z_c = split(Tensor(embed(encoder, donor_images)))
    patches = rng.integers(0, geo.num_patches, size=len(donor_images))

    cells = np.zeros((len(donor_images), len(anatomy_images)) + geo.image_shape)
    with tensor.no_grad():
        for row, patch in enumerate(patches):
            donor = z_c[row : row + 1, int(patch) : int(patch) + 1]
            cells[row] = synthesize(z_a, donor, geo).numpy()
    return MixGrid(anatomy_images, donor_images, cells, patches)


def dump_mix_grid(
    encoder: Encoder,
    anatomy_images: np.ndarray,
    donor_images: np.ndarray,
    path: str,
    rng: np.random.Generator,
) -> MixGrid:
    grid = mix_grid(encoder, anatomy_images, donor_images, rng)
    imaging.write_image(path, grid.image())
    logging.info(f"Mix grid {grid.cells.shape[0]}x{grid.cells.shape[1]} written to '{path}'")
    return grid


def row_color_agreement(grid: MixGrid) -> float:
    """Fraction of cells whose channel means are closer to their donor than to their anatomy
    source."""

    def channel_means(images: np.ndarray) -> np.ndarray:
        return images.mean(axis=(-2, -1))

    cells = channel_means(np.clip(grid.cells, 0.0, 1.0))
    donors = channel_means(grid.donors)[:, None, :]
    sources = channel_means(grid.anatomy)[None, :, :]
    to_donor = np.linalg.norm(cells - donors, axis=-1)
    to_source = np.linalg.norm(cells - sources, axis=-1)
    return float((to_donor < to_source).mean())


def anatomy_preservation_rate(
    encoder: Encoder, images: np.ndarray, rng: np.random.Generator, count: int = 200
) -> float:
    """Fraction of random mixes whose re-encoded anatomy is closer to the anatomy source than to
    the donor's anatomy."""

    if len(images) < 2:
        raise errors.MixingError("Mixing needs at least two images")
    geo = encoder.config.geometry()
    z_a, z_c = split(Tensor(embed(encoder, images)))

    sources = rng.integers(0, len(images), size=count)
    offsets = rng.integers(1, len(images), size=count)
    donors = (sources + offsets) % len(images)
    patches = rng.integers(0, geo.num_patches, size=count)

    with tensor.no_grad():
        anatomy = z_a[sources]
        donor = z_c[donors, patches].reshape(count, 1, -1)
        synthetic = synthesize(anatomy, donor, geo).numpy()
    z_s_a, _ = split(Tensor(embed(encoder, synthetic)))

    to_source = np.square(z_s_a.numpy() - anatomy.numpy()).mean(axis=(1, 2))
    to_donor = np.square(z_s_a.numpy() - z_a.numpy()[donors]).mean(axis=(1, 2))
    return float((to_source < to_donor).mean())


def dump_reconstructions(
    encoder: Encoder,
    samples: Sequence[DomainSample],
    path: str,
    per_domain: int = 8,
) -> Optional[np.ndarray]:
    """Writes one strip per domain: originals on top of their reconstructions."""

    by_domain: Dict[int, List[DomainSample]] = dict()
    for sample in samples:
        group = by_domain.setdefault(sample.domain_id, list())
        if len(group) < per_domain:
            group.append(sample)
    if not by_domain:
        logging.warning("No samples to dump reconstructions of")
        return None

    c, h, w = encoder.config.geometry().image_shape
    canvas = np.zeros((c, 2 * h * len(by_domain), w * per_domain))
    for row, domain_id in enumerate(sorted(by_domain)):
        originals = images_of(by_domain[domain_id])
        restored = np.clip(reconstruct_images(encoder, originals), 0.0, 1.0)
        top = 2 * h * row
        for col, (x, y) in enumerate(zip(originals, restored)):
            canvas[:, top : top + h, col * w : (col + 1) * w] = x
            canvas[:, top + h : top + 2 * h, col * w : (col + 1) * w] = y
    imaging.write_image(path, canvas)
    logging.info(f"Reconstructions of {len(by_domain)} domains written to '{path}'")
    return canvas
