"""Mixing plans and the three-term training objective.

Every squared norm is divided by its element count (per-element mean squared error), so the
three terms stay on comparable scales for any geometry. Gradients flow through both encoder
passes: the one producing the embeddings and the re-encoding of the synthetic images.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np

from . import errors, geometry, tensor
from .encoder import Encoder, split
from .synthesizer import synthesize
from .tensor import Tensor

MixEntry = Tuple[int, int, int]


class MixPlan:
    """(anatomy source i, characteristic donor m, donor patch p) triples, M per sample."""

    def __init__(
        self, entries: List[MixEntry], batch_size: int, mixes: int, num_patches: int
    ) -> None:
        self.entries = entries
        self.batch_size = batch_size
        self.mixes = mixes
        self.num_patches = num_patches

    def __len__(self) -> int:
        return len(self.entries)

    def anatomy_indices(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=np.int64)

    def donor_indices(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=np.int64)

    def patch_indices(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=np.int64)

    def validate(self) -> None:
        if len(self.entries) != self.batch_size * self.mixes:
            raise errors.MixingError(
                f"Plan has {len(self.entries)} entries, expected {self.batch_size * self.mixes}"
            )
        for i, m, p in self.entries:
            if not (0 <= i < self.batch_size and 0 <= m < self.batch_size and m != i):
                raise errors.MixingError(f"Invalid source pair ({i}, {m})")
            if not 0 <= p < self.num_patches:
                raise errors.MixingError(f"Patch index {p} outside [0, {self.num_patches})")


def build_mix_plan(
    batch_size: int, mixes: int, num_patches: int, rng: np.random.Generator
) -> MixPlan:
    """Draws, for every sample, `mixes` donors among the other samples and one patch per donor.

    Donors are drawn without replacement while the batch has enough other samples and with
    replacement otherwise.
    """

    if batch_size < 2:
        raise errors.MixingError(f"Mixing needs at least two samples per batch, got {batch_size}")
    if mixes < 1:
        raise errors.MixingError(f"Number of mixes must be positive, got {mixes}")

    entries: List[MixEntry] = list()
    replace = mixes > batch_size - 1
    for i in range(batch_size):
        others = np.array([m for m in range(batch_size) if m != i])
        donors = rng.choice(others, size=mixes, replace=replace)
        patches = rng.integers(0, num_patches, size=mixes)
        entries.extend((i, int(m), int(p)) for m, p in zip(donors, patches))

    return MixPlan(entries, batch_size, mixes, num_patches)


class LossWeights:
    def __init__(
        self, anatomy: float = 1.0, characteristic: float = 1.0, reconstruction: float = 1.0
    ) -> None:
        if min(anatomy, characteristic, reconstruction) < 0:
            raise errors.ConfigError(
                f"Loss weights must be nonnegative, got "
                f"({anatomy}, {characteristic}, {reconstruction})"
            )
        self.anatomy = anatomy
        self.characteristic = characteristic
        self.reconstruction = reconstruction

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(
            self.anatomy * factor, self.characteristic * factor, self.reconstruction * factor
        )


class LossReport:
    """Loss components of one batch.

    `total` is the weighted sum of the reported components, so the identity holds exactly for
    the logged values. `objective` is the differentiable tensor the optimizer steps on.
    """

    def __init__(
        self,
        anatomy: float,
        characteristic: float,
        reconstruction: float,
        weights: LossWeights,
        objective: Tensor,
    ) -> None:
        self.anatomy = anatomy
        self.characteristic = characteristic
        self.reconstruction = reconstruction
        self.weights = weights
        self.total = (
            weights.anatomy * anatomy
            + weights.characteristic * characteristic
            + weights.reconstruction * reconstruction
        )
        self.objective = objective

    def as_dict(self) -> Dict[str, float]:
        return {
            "L_C_a": self.anatomy,
            "L_C_c": self.characteristic,
            "L_R": self.reconstruction,
            "L_total": self.total,
        }

    def is_finite(self) -> bool:
        return bool(np.isfinite(list(self.as_dict().values())).all())


class MixingPass:
    """Embeddings, synthetic images and their re-encodings for one batch and plan."""

    def __init__(self, images: Tensor, plan: MixPlan, encoder: Encoder) -> None:
        plan.validate()
        geo = encoder.config.geometry()
        if images.shape[0] != plan.batch_size:
            raise errors.MixingError(
                f"Plan is for {plan.batch_size} samples, batch has {images.shape[0]}"
            )

        self.images = images
        self.z = encoder(geometry.patchify(images, geo.patch_size))
        self.z_a, self.z_c = split(self.z)

        half = self.z_c.shape[-1]
        self.anatomy = self.z_a[plan.anatomy_indices()]
        self.donor = self.z_c[plan.donor_indices(), plan.patch_indices()].reshape(-1, 1, half)
        self.synthetic = synthesize(self.anatomy, self.donor, geo)

        z_s = encoder(geometry.patchify(self.synthetic, geo.patch_size))
        self.z_s_a, self.z_s_c = split(z_s)
        self.reconstruction = synthesize(self.z_a, self.z_c, geo)


def _mse(a: Tensor, b: Tensor) -> Tensor:
    return tensor.square(a - b).mean()


def anatomical_consistency_loss(
    images: Tensor, plan: MixPlan, encoder: Encoder, mixing: Optional[MixingPass] = None
) -> Tensor:
    """Anatomy of each synthetic image against the anatomy it was built from."""

    mixing = mixing if mixing is not None else MixingPass(images, plan, encoder)
    return _mse(mixing.anatomy, mixing.z_s_a)


def characteristic_consistency_loss(
    images: Tensor, plan: MixPlan, encoder: Encoder, mixing: Optional[MixingPass] = None
) -> Tensor:
    """Donor characteristic row against every patch characteristic of the synthetic image."""

    mixing = mixing if mixing is not None else MixingPass(images, plan, encoder)
    return _mse(mixing.donor, mixing.z_s_c)


def reconstruction_loss(
    images: Tensor, encoder: Encoder, mixing: Optional[MixingPass] = None
) -> Tensor:
    if mixing is not None:
        return _mse(images, mixing.reconstruction)
    geo = encoder.config.geometry()
    z_a, z_c = split(encoder(geometry.patchify(images, geo.patch_size)))
    return _mse(images, synthesize(z_a, z_c, geo))


def total_loss(
    images: Tensor, plan: MixPlan, encoder: Encoder, weights: LossWeights
) -> LossReport:
    """Weighted sum of the three terms over one shared forward pass."""

    mixing = MixingPass(images, plan, encoder)
    anatomy = anatomical_consistency_loss(images, plan, encoder, mixing)
    characteristic = characteristic_consistency_loss(images, plan, encoder, mixing)
    reconstruction = reconstruction_loss(images, encoder, mixing)

    objective = (
        tensor.scale(anatomy, weights.anatomy)
        + tensor.scale(characteristic, weights.characteristic)
        + tensor.scale(reconstruction, weights.reconstruction)
    )
    return LossReport(
        anatomy.item(), characteristic.item(), reconstruction.item(), weights, objective
    )
