"""Binary checkpoint files.

Layout: magic, format version (uint32 LE), header length (uint32 LE), header, data blocks,
SHA-256 of everything before it. The header is `key = <json>` text, one key per line in sorted
order; its `blocks` entry lists the names and shapes of the little-endian arrays that follow,
stored in the precision named by `precision`.
"""

import hashlib, json, logging, struct

from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import errors, schemas, settings
from .encoder import Encoder, EncoderConfig
from .essentials import ClassifierConfig, TrainConfig

DTYPES = {"f32": "<f4", "f64": "<f8"}
DIGEST_SIZE = 32


class EncoderCheckpoint:
    """Everything needed to use a trained encoder or to resume its training."""

    def __init__(
        self,
        config: EncoderConfig,
        train: TrainConfig,
        parameters: Dict[str, np.ndarray],
        moments: Dict[str, np.ndarray],
        step: int,
        epoch: int,
        rng_state: Dict[str, Any],
        best_loss: Optional[float] = None,
        precision: str = "f32",
    ) -> None:
        self.config = config
        self.train = train
        self.parameters = parameters
        self.moments = moments
        self.step = step
        self.epoch = epoch
        self.rng_state = rng_state
        self.best_loss = best_loss
        self.precision = precision

    def build_encoder(self) -> Encoder:
        encoder = Encoder(self.config, np.random.default_rng(0))
        encoder.load_state_dict(self.parameters)
        return encoder


class ClassifierCheckpoint:
    def __init__(
        self,
        config: ClassifierConfig,
        image_size: int,
        parameters: Dict[str, np.ndarray],
        step: int,
        epoch: int,
        val_accuracy: Optional[float] = None,
        test_accuracy: Optional[float] = None,
        precision: str = "f32",
    ) -> None:
        self.config = config
        self.image_size = image_size
        self.parameters = parameters
        self.step = step
        self.epoch = epoch
        self.val_accuracy = val_accuracy
        self.test_accuracy = test_accuracy
        self.precision = precision


Checkpoint = Any  # EncoderCheckpoint or ClassifierCheckpoint


def _header_of(ckpt: Checkpoint, blocks: List[Tuple[str, np.ndarray]]) -> Dict[str, Any]:
    block_list = [{"name": name, "shape": list(array.shape)} for name, array in blocks]
    if isinstance(ckpt, EncoderCheckpoint):
        header = {
            "kind": "encoder",
            "precision": ckpt.precision,
            "step": ckpt.step,
            "epoch": ckpt.epoch,
            "best_loss": ckpt.best_loss,
            "encoder": ckpt.config,
            "train": ckpt.train,
            "rng_state": ckpt.rng_state,
            "blocks": block_list,
        }
    elif isinstance(ckpt, ClassifierCheckpoint):
        header = {
            "kind": "classifier",
            "precision": ckpt.precision,
            "step": ckpt.step,
            "epoch": ckpt.epoch,
            "classifier": ckpt.config,
            "image_size": ckpt.image_size,
            "val_accuracy": ckpt.val_accuracy,
            "test_accuracy": ckpt.test_accuracy,
            "blocks": block_list,
        }
    else:
        raise errors.CheckpointError(f"Can not store object of type {type(ckpt).__name__}")
    return schemas.dump(schemas.CheckpointHeaderSchema, header)


def _blocks_of(ckpt: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    blocks = list(ckpt.parameters.items())
    if isinstance(ckpt, EncoderCheckpoint):
        blocks.extend(ckpt.moments.items())
    return blocks


def encode(ckpt: Checkpoint) -> bytes:
    if ckpt.precision not in DTYPES:
        raise errors.CheckpointError(f"Unknown precision '{ckpt.precision}'")
    dtype = np.dtype(DTYPES[ckpt.precision])

    blocks = _blocks_of(ckpt)
    header = _header_of(ckpt, blocks)
    text = "".join(f"{key} = {json.dumps(header[key], sort_keys=True)}\n" for key in sorted(header))
    header_bytes = text.encode("utf-8")

    parts = [
        settings.CHECKPOINT_MAGIC,
        struct.pack("<II", settings.CHECKPOINT_VERSION, len(header_bytes)),
        header_bytes,
    ]
    parts.extend(np.ascontiguousarray(array, dtype=dtype).tobytes() for _, array in blocks)
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def _parse_header(header_bytes: bytes) -> Dict[str, Any]:
    raw = dict()
    try:
        for line in header_bytes.decode("utf-8").splitlines():
            key, sep, value = line.partition(" = ")
            if not sep:
                raise errors.CheckpointError(f"Malformed header line '{line}'")
            raw[key] = json.loads(value)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise errors.CheckpointError(f"Malformed checkpoint header: {e}")

    kind = raw.get("kind")
    try:
        header = schemas.load(schemas.CheckpointHeaderSchema, raw)
    except errors.ConfigError as e:
        raise errors.CheckpointError(f"Invalid checkpoint header: {e}")
    header["kind"] = kind
    return header


def decode(data: bytes) -> Checkpoint:
    prefix = len(settings.CHECKPOINT_MAGIC)
    if len(data) < prefix + 8 + DIGEST_SIZE or data[:prefix] != settings.CHECKPOINT_MAGIC:
        raise errors.CheckpointError("Not a checkpoint file")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise errors.CheckpointError("Checkpoint checksum mismatch, the file is corrupt")

    version, header_length = struct.unpack("<II", body[prefix : prefix + 8])
    if version != settings.CHECKPOINT_VERSION:
        raise errors.CheckpointError(
            f"Checkpoint format version {version}, expected {settings.CHECKPOINT_VERSION}"
        )
    offset = prefix + 8
    header = _parse_header(body[offset : offset + header_length])
    offset += header_length

    dtype = np.dtype(DTYPES[header["precision"]])
    arrays: Dict[str, np.ndarray] = dict()
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + size > len(body):
            raise errors.CheckpointError(f"Block '{block['name']}' is truncated")
        count = size // dtype.itemsize
        array = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        arrays[block["name"]] = array.reshape(shape).copy()
        offset += size
    if offset != len(body):
        raise errors.CheckpointError(f"{len(body) - offset} unexpected bytes after the blocks")

    if header["kind"] == "encoder":
        parameters = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
        moments = {k: v for k, v in arrays.items() if k.startswith("adam.")}
        return EncoderCheckpoint(
            header["encoder"],
            header["train"],
            parameters,
            moments,
            header["step"],
            header["epoch"],
            header["rng_state"],
            header["best_loss"],
            header["precision"],
        )
    return ClassifierCheckpoint(
        header["classifier"],
        header["image_size"],
        arrays,
        header["step"],
        header["epoch"],
        header["val_accuracy"],
        header["test_accuracy"],
        header["precision"],
    )


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    with open(path, "wb") as f:
        f.write(encode(ckpt))
    logging.info(f"Checkpoint (step {ckpt.step}) written to '{path}'")


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise errors.ConfigError(f"Checkpoint '{path}' does not exist")
    try:
        return decode(data)
    except errors.CheckpointError as e:
        raise errors.CheckpointError(f"{path}: {e}")


def load_encoder_checkpoint(
    path: str, expected: Optional[EncoderConfig] = None
) -> EncoderCheckpoint:
    """Loads an encoder checkpoint and checks its geometry against `expected`, if given."""

    ckpt = load_checkpoint(path)
    if not isinstance(ckpt, EncoderCheckpoint):
        raise errors.ConfigError(f"'{path}' is not an encoder checkpoint")
    if expected is not None and ckpt.config != expected:
        raise errors.ConfigError(
            f"Checkpoint '{path}' holds {ckpt.config}, expected {expected}",
            fields={"stored": ckpt.config.geometry_key(), "expected": expected.geometry_key()},
        )
    return ckpt


def check_image_size(ckpt: EncoderCheckpoint, image_size: int) -> None:
    if ckpt.config.image_size != image_size:
        raise errors.ConfigError(
            f"Encoder expects {ckpt.config.image_size}px images, the corpus has {image_size}px"
        )
