"""Binary PPM (P6, 8 bit) reading and writing, quantization and bicubic resizing."""

from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from . import errors

MAXVAL = 255


def quantize(image: np.ndarray) -> np.ndarray:
    """Maps [0,1] floats to bytes with round-half-up; values outside the range are clamped."""

    return np.clip(np.floor(np.asarray(image, dtype=np.float64) * MAXVAL + 0.5), 0, MAXVAL).astype(
        np.uint8
    )


def dequantize(data: np.ndarray) -> np.ndarray:
    return data.astype(np.float64) / MAXVAL


def encode_ppm(image: np.ndarray) -> bytes:
    """Serializes a 3×H×W image in [0,1]."""

    if image.ndim != 3 or image.shape[0] != 3:
        raise errors.CorpusError(f"PPM needs a 3×H×W image, got shape {image.shape}")
    _, height, width = image.shape
    header = f"P6\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + quantize(image).transpose(1, 2, 0).tobytes()


def _header_tokens(data: bytes) -> Tuple[List[bytes], int]:
    """Reads magic, width, height and maxval, skipping comments. Returns tokens and data offset."""

    tokens: List[bytes] = list()
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise errors.CorpusError("Truncated PPM header")
        char = data[pos : pos + 1]
        if char == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif char.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])

    # Exactly one whitespace byte separates the header from the raster.
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise errors.CorpusError("PPM header is not terminated by whitespace")
    return tokens, pos + 1


def decode_ppm(data: bytes, expected: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Parses P6 bytes into a 3×H×W float image. `expected` is an optional (H, W) check."""

    tokens, offset = _header_tokens(data)
    if tokens[0] != b"P6":
        raise errors.CorpusError(f"Unsupported PPM magic {tokens[0]!r}, expected b'P6'")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise errors.CorpusError(f"Malformed PPM header {tokens!r}")
    if maxval != MAXVAL or width <= 0 or height <= 0:
        raise errors.CorpusError(f"Unsupported PPM geometry {width}x{height}, maxval {maxval}")
    if expected is not None and (height, width) != tuple(expected):
        raise errors.CorpusError(f"Image is {height}x{width}, expected {expected[0]}x{expected[1]}")

    raster = data[offset:]
    if len(raster) != width * height * 3:
        raise errors.CorpusError(
            f"PPM raster has {len(raster)} bytes, expected {width * height * 3}"
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return dequantize(pixels.transpose(2, 0, 1))


def write_image(path: str, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(image))


def read_image(path: str, expected: Optional[Tuple[int, int]] = None) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise errors.CorpusError(f"Can not read image '{path}': {e}")
    try:
        return decode_ppm(data, expected)
    except errors.CorpusError as e:
        raise errors.CorpusError(f"{path}: {e}")


def resize_bicubic(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resizes every channel with Pillow's bicubic kernel (a = -0.5) in float precision."""

    if image.shape[1:] == (height, width):
        return image.copy()
    channels = [
        np.asarray(
            Image.fromarray(channel.astype(np.float32), mode="F").resize(
                (width, height), Image.Resampling.BICUBIC
            ),
            dtype=np.float64,
        )
        for channel in image
    ]
    return np.stack(channels)
