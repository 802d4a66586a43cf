from typing import Tuple

from . import errors
from .tensor import Tensor


class PatchGeometry:
    """Image shape C×H×W together with the side length of the square patches."""

    def __init__(self, channels: int, height: int, width: int, patch_size: int) -> None:
        if min(channels, height, width, patch_size) < 1:
            raise errors.GeometryError(
                f"Non-positive geometry: C={channels}, H={height}, W={width}, PS={patch_size}"
            )
        if height % patch_size != 0 or width % patch_size != 0:
            raise errors.GeometryError(
                f"Image {height}x{width} is not divisible into {patch_size}x{patch_size} patches"
            )
        self.channels = channels
        self.height = height
        self.width = width
        self.patch_size = patch_size

    @property
    def grid(self) -> Tuple[int, int]:
        return self.height // self.patch_size, self.width // self.patch_size

    @property
    def num_patches(self) -> int:
        rows, cols = self.grid
        return rows * cols

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return self.channels, self.height, self.width

    @property
    def patch_shape(self) -> Tuple[int, int, int, int]:
        ps = self.patch_size
        return self.num_patches, self.channels, ps, ps

    def __eq__(self, other) -> bool:
        return isinstance(other, PatchGeometry) and self.as_tuple() == other.as_tuple()

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return self.channels, self.height, self.width, self.patch_size

    def __repr__(self) -> str:
        c, h, w, ps = self.as_tuple()
        return f"PatchGeometry(C={c}, H={h}, W={w}, PS={ps})"


def patchify(image: Tensor, patch_size: int) -> Tensor:
    """Splits `...×C×H×W` images into `...×P×C×PS×PS` patches, row-major over the patch grid."""

    if image.ndim < 3:
        raise errors.GeometryError(f"Expected C×H×W images, got shape {image.shape}")
    *lead, c, h, w = image.shape
    geometry = PatchGeometry(c, h, w, patch_size)
    rows, cols = geometry.grid
    n = len(lead)

    blocks = image.reshape(*lead, c, rows, patch_size, cols, patch_size)
    order = list(range(n)) + [n + 1, n + 3, n, n + 2, n + 4]
    return blocks.transpose(order).reshape(*lead, rows * cols, c, patch_size, patch_size)


def unpatchify(patches: Tensor, geometry: PatchGeometry) -> Tensor:
    """Exact inverse of `patchify` for the given geometry."""

    if patches.ndim < 4 or tuple(patches.shape[-4:]) != geometry.patch_shape:
        raise errors.GeometryError(
            f"Patches of shape {patches.shape} do not match {geometry} (expected "
            f"trailing shape {geometry.patch_shape})"
        )
    *lead, _, c, ps, _ = patches.shape
    rows, cols = geometry.grid
    n = len(lead)

    blocks = patches.reshape(*lead, rows, cols, c, ps, ps)
    order = list(range(n)) + [n + 2, n, n + 3, n + 1, n + 4]
    return blocks.transpose(order).reshape(*lead, c, rows * ps, cols * ps)
