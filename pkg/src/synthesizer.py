"""Parameter-free image synthesizer.

Each patch is rebuilt as the product of its anatomy matrix (C×PS×V, row-major reshape of the
anatomy half) and a characteristic matrix (C×V×PS, row-major reshape of the characteristic
half). The product is linear in both halves; clamping happens only at image export.
"""

from . import errors, geometry
from .encoder import Encoder, split
from .geometry import PatchGeometry
from .tensor import Tensor


def hidden_dim_for(half: int, geo: PatchGeometry) -> int:
    block = geo.channels * geo.patch_size
    if half % block != 0:
        raise errors.DimensionError(
            f"Embedding half of size {half} does not reshape into C×PS×V with C·PS = {block}"
        )
    return half // block


def anatomy_matrix(z_a: Tensor, geo: PatchGeometry) -> Tensor:
    """Reshapes `…×P×L/2` into `…×P×C×PS×V`."""

    v = hidden_dim_for(z_a.shape[-1], geo)
    return z_a.reshape(*z_a.shape[:-1], geo.channels, geo.patch_size, v)


def characteristic_matrix(z_c: Tensor, geo: PatchGeometry) -> Tensor:
    """Reshapes `…×R×L/2` into `…×R×C×V×PS`."""

    v = hidden_dim_for(z_c.shape[-1], geo)
    return z_c.reshape(*z_c.shape[:-1], geo.channels, v, geo.patch_size)


def synthesize(z_a: Tensor, z_c: Tensor, geo: PatchGeometry) -> Tensor:
    """Builds `…×C×H×W` images from anatomy `…×P×L/2` and characteristics `…×P×L/2`.

    The characteristic source may also hold a single row (`…×1×L/2`); it is then applied to
    every patch, which is how a single donor patch is mixed into a whole image.
    """

    if z_a.shape[-1] != z_c.shape[-1]:
        raise errors.DimensionError(
            f"Anatomy {z_a.shape} and characteristic {z_c.shape} halves differ in size"
        )
    if z_a.shape[-2] != geo.num_patches:
        raise errors.DimensionError(
            f"Anatomy {z_a.shape} has {z_a.shape[-2]} rows, geometry needs {geo.num_patches}"
        )
    if z_c.shape[-2] not in (1, geo.num_patches):
        raise errors.DimensionError(
            f"Characteristic source {z_c.shape} must have 1 or {geo.num_patches} rows"
        )

    patches = anatomy_matrix(z_a, geo) @ characteristic_matrix(z_c, geo)
    return geometry.unpatchify(patches, geo)


def reconstruct(images: Tensor, encoder: Encoder) -> Tensor:
    """Self-reconstruction: both halves come from the same image."""

    geo = encoder.config.geometry()
    z = encoder(geometry.patchify(images, geo.patch_size))
    z_a, z_c = split(z)
    return synthesize(z_a, z_c, geo)
