import math

from typing import Tuple

import numpy as np

from . import errors, settings, tensor
from .geometry import PatchGeometry
from .modules import LayerNorm, Linear, Module
from .tensor import Tensor


def derive_hidden_dim(embed_dim: int, channels: int, patch_size: int) -> int:
    """Returns V such that L/2 = C·PS·V, the contraction size of the image synthesizer."""

    if embed_dim <= 0 or embed_dim % 2 != 0:
        raise errors.ConfigError(f"Embedding dimension {embed_dim} must be positive and even")
    half = embed_dim // 2
    if half % (channels * patch_size) != 0:
        raise errors.ConfigError(
            f"Embedding dimension {embed_dim} is not usable: L/2 = {half} must be a multiple of "
            f"C·PS = {channels}·{patch_size} = {channels * patch_size} so that each half reshapes "
            f"into C×PS×V matrices"
        )
    return half // (channels * patch_size)


class EncoderConfig:
    """Geometry and size of the patch encoder."""

    def __init__(
        self,
        channels: int = 3,
        image_size: int = 32,
        patch_size: int = 4,
        embed_dim: int = 96,
        depth: int = 4,
        heads: int = 4,
        mlp_ratio: int = 4,
        name: str = "base",
    ) -> None:
        self.channels = channels
        self.image_size = image_size
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.depth = depth
        self.heads = heads
        self.mlp_ratio = mlp_ratio
        self.name = name
        self.validate()

    def validate(self) -> None:
        if min(self.depth, self.heads, self.mlp_ratio) < 1:
            raise errors.ConfigError("Depth, heads and MLP ratio must be positive")
        if self.embed_dim % self.heads != 0:
            raise errors.ConfigError(
                f"Embedding dimension {self.embed_dim} is not divisible by {self.heads} heads"
            )
        try:
            self.geometry()
        except errors.GeometryError as e:
            raise errors.ConfigError(str(e))
        derive_hidden_dim(self.embed_dim, self.channels, self.patch_size)

    @property
    def hidden_dim(self) -> int:
        return derive_hidden_dim(self.embed_dim, self.channels, self.patch_size)

    @property
    def num_patches(self) -> int:
        return self.geometry().num_patches

    def geometry(self) -> PatchGeometry:
        return PatchGeometry(self.channels, self.image_size, self.image_size, self.patch_size)

    def geometry_key(self) -> Tuple[int, ...]:
        return (
            self.channels,
            self.image_size,
            self.patch_size,
            self.embed_dim,
            self.hidden_dim,
            self.depth,
            self.heads,
            self.mlp_ratio,
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, EncoderConfig) and self.geometry_key() == other.geometry_key()

    def __repr__(self) -> str:
        return (
            f"EncoderConfig({self.name}: C={self.channels}, H=W={self.image_size}, "
            f"PS={self.patch_size}, L={self.embed_dim}, V={self.hidden_dim}, "
            f"depth={self.depth}, heads={self.heads})"
        )


class PatchEmbeddings:
    """Per-patch embeddings `z` (…×P×L) with views on the anatomy and characteristic halves."""

    def __init__(self, z: Tensor) -> None:
        self.z = z
        self.anatomy, self.characteristic = split(z)


def split(z: Tensor) -> Tuple[Tensor, Tensor]:
    """Bisects the last axis: anatomy is columns [0, L/2), characteristic is [L/2, L)."""

    length = z.shape[-1]
    if length % 2 != 0:
        raise errors.DimensionError(f"Can not split odd embedding dimension {length}")
    half = length // 2
    return z[..., :half], z[..., half:]


class Attention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = self.add_module("qkv", Linear(dim, 3 * dim, rng))
        self.proj = self.add_module("proj", Linear(dim, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        batch, count, dim = x.shape
        qkv = self.qkv(x).reshape(batch, count, 3, self.heads, self.head_dim)
        qkv = qkv.transpose(2, 0, 3, 1, 4)
        query, key, value = qkv[0], qkv[1], qkv[2]

        scores = tensor.scale(query @ key.transpose(0, 1, 3, 2), 1.0 / math.sqrt(self.head_dim))
        mixed = tensor.softmax(scores, -1) @ value
        return self.proj(mixed.transpose(0, 2, 1, 3).reshape(batch, count, dim))


class Block(Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.norm1 = self.add_module("norm1", LayerNorm(dim))
        self.attention = self.add_module("attention", Attention(dim, heads, rng))
        self.norm2 = self.add_module("norm2", LayerNorm(dim))
        self.fc1 = self.add_module("fc1", Linear(dim, mlp_ratio * dim, rng))
        self.fc2 = self.add_module("fc2", Linear(mlp_ratio * dim, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attention(self.norm1(x))
        return x + self.fc2(tensor.gelu(self.fc1(self.norm2(x))))


class Encoder(Module):
    """Vision transformer mapping P patches to P embeddings of size L; no class token."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        c, ps, dim = config.channels, config.patch_size, config.embed_dim

        self.patch_embed = self.add_module("patch_embed", Linear(c * ps * ps, dim, rng))
        self.position = self.add_parameter(
            "position", rng.normal(0.0, 0.02, (config.num_patches, dim))
        )
        self.blocks = [
            self.add_module(f"block{i}", Block(dim, config.heads, config.mlp_ratio, rng))
            for i in range(config.depth)
        ]
        self.norm = self.add_module("norm", LayerNorm(dim))

    def __call__(self, patches: Tensor) -> Tensor:
        """Encodes `B×P×C×PS×PS` (or a single `P×C×PS×PS`) into `B×P×L` (or `P×L`)."""

        expected = self.config.geometry().patch_shape
        if patches.ndim not in (4, 5) or tuple(patches.shape[-4:]) != expected:
            raise errors.GeometryError(
                f"Patches of shape {patches.shape} do not match encoder geometry {expected}"
            )
        single = patches.ndim == 4
        if single:
            patches = patches.reshape(1, *patches.shape)

        batch, count = patches.shape[0], patches.shape[1]
        x = self.patch_embed(patches.reshape(batch, count, -1)) + self.position
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        return x.reshape(count, -1) if single else x

    def encode(self, patches: Tensor) -> PatchEmbeddings:
        return PatchEmbeddings(self(patches))


for config in [
    EncoderConfig(embed_dim=96, depth=4, heads=4, name="base"),
    EncoderConfig(embed_dim=144, depth=8, heads=4, name="deep"),
    EncoderConfig(image_size=8, embed_dim=24, depth=1, heads=2, mlp_ratio=2, name="tiny"),
]:
    settings.ARCHITECTURES[config.name] = config


def architecture(name: str) -> EncoderConfig:
    if name not in settings.ARCHITECTURES:
        known = ", ".join(sorted(settings.ARCHITECTURES))
        raise errors.ConfigError(f"Unknown architecture '{name}', expected one of: {known}")
    return settings.ARCHITECTURES[name]
