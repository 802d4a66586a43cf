from enum import Enum

from typing import Any, Dict


CHECKPOINT_MAGIC = b"PMXCKPT\x00"
CHECKPOINT_VERSION = 1
GENERATOR_VERSION = 1

OUT_ROOT_ENV = "PATCHMIX_OUT_ROOT"

INDEX_FILE = "index.csv"
MANIFEST_FILE = "manifest.txt"
RUN_CONFIG_FILE = "run_config.txt"
LOSS_FILE = "losses.csv"
FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"

UNLABELED_MARK = "-"
PSNR_INFINITE = "inf"


class Stream(Enum):
    """Independent random streams split from the single root seed."""

    DATA = 1
    MIXING = 2
    INIT = 3
    CLASSIFIER = 4


class Split(Enum):
    TRAIN = "train"
    UNLABELED = "unlabeled"
    VAL = "val"
    TEST = "test"


class AugmentMode(Enum):
    NONE = "none"
    MIX = "mix"


# Full-scale recipe the toy defaults are derived from. Deviations are recorded per run.
REFERENCE_RECIPE = {
    "image_size": 224,
    "patch_size": 16,
    "embed_dim": 768,
    "batch_size": 64,
    "epochs": 50,
    "mixes": 4,
    "learning_rate": 1e-3,
}

# Filled by `encoder.py` and `generator.py`.
ARCHITECTURES: Dict[str, Any] = dict()
DOMAINS: Dict[int, Any] = dict()
