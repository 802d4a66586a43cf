"""Scalability trends: a larger self-supervised pool and a deeper, wider encoder."""

import copy, logging, os

from typing import Dict, List, Optional

from . import encoder as encoders
from . import errors, evaluation, settings, trainer, utils
from .checkpoint import EncoderCheckpoint
from .essentials import Corpus, TrainConfig

TREND_HEADER = (
    "run",
    "arch",
    "embed_dim",
    "hidden_dim",
    "epochs",
    "pool",
    "psnr_train",
    "psnr_val",
    "psnr_test",
    "note",
)
TREND_CSV = "trend.csv"
TREND_MARKDOWN = "trend.md"

# Fraction of the base epochs the deep variant is trained for.
DEEP_EPOCH_FRACTION = 0.2
REJECTED_EMBED_DIM = 128
EVAL_SPLITS = (settings.Split.TRAIN, settings.Split.VAL, settings.Split.TEST)
TREND_CAPTION = (
    "Reconstruction PSNR in dB per split. Rows `base` and `unlabeled` compare the size of the "
    "self-supervised pool; rows `base` and `deep` compare encoder capacity, the deep run trained "
    "for a fraction of the base epochs."
)


def width_note(rejected: int, chosen: encoders.EncoderConfig) -> str:
    """Explains why `rejected` can not serve as the embedding dimension of `chosen`'s geometry."""

    try:
        encoders.derive_hidden_dim(rejected, chosen.channels, chosen.patch_size)
    except errors.ConfigError:
        block = chosen.channels * chosen.patch_size
        return (
            f"L={rejected} rejected (L/2={rejected // 2} is not a multiple of C·PS={block}); "
            f"L={chosen.embed_dim} chosen (V={chosen.hidden_dim})"
        )
    return f"L={rejected} would be valid; L={chosen.embed_dim} chosen"


def trend_markdown(rows: List[List[object]]) -> str:
    return f"{TREND_CAPTION}\n\n{utils.markdown_table(TREND_HEADER, rows)}"


class TrendRun:
    def __init__(
        self,
        name: str,
        ckpt: EncoderCheckpoint,
        pool: int,
        psnr: Dict[str, float],
        note: str = "",
    ) -> None:
        self.name = name
        self.ckpt = ckpt
        self.pool = pool
        self.psnr = psnr
        self.note = note

    def row(self) -> List[object]:
        config = self.ckpt.config
        return [
            self.name,
            config.name,
            config.embed_dim,
            config.hidden_dim,
            self.ckpt.epoch,
            self.pool,
            *(utils.format_float(self.psnr.get(s.value, float("nan")), 2) for s in EVAL_SPLITS),
            self.note,
        ]


def _measure(
    name: str, ckpt: EncoderCheckpoint, corpus: Corpus, pool: int, note: str = ""
) -> TrendRun:
    encoder = ckpt.build_encoder()
    reports = evaluation.eval_splits(encoder, corpus, EVAL_SPLITS)
    return TrendRun(name, ckpt, pool, {r.split: r.mean for r in reports}, note)


def _train(corpus: Corpus, config: TrainConfig, out_dir: str, name: str) -> EncoderCheckpoint:
    run_dir = os.path.join(out_dir, name)
    os.makedirs(run_dir, exist_ok=True)
    return trainer.train_encoder(corpus, config, run_dir).checkpoint()


def scalability_experiments(
    corpus: Corpus,
    base_config: TrainConfig,
    out_dir: str,
    base: Optional[EncoderCheckpoint] = None,
) -> List[TrendRun]:
    """Compares the base encoder with one trained on the labeled plus unlabeled pool and with
    the deep variant trained for a fraction of the base epochs; writes the trend table."""

    labeled = len(corpus.encoder_pool(False))
    everything = len(corpus.encoder_pool(True))
    if everything == labeled:
        logging.warning("Corpus has no unlabeled pool, the augmented run repeats the base run")

    if base is None:
        base = _train(corpus, base_config, out_dir, "base")
    runs = [_measure("base", base, corpus, labeled)]

    unlabeled = copy.copy(base_config)
    unlabeled.include_unlabeled = True
    runs.append(
        _measure("unlabeled", _train(corpus, unlabeled, out_dir, "unlabeled"), corpus, everything)
    )

    deep = copy.copy(base_config)
    deep.arch = "deep"
    deep.epochs = max(1, round(DEEP_EPOCH_FRACTION * base_config.epochs))
    deep.schedule_epochs = None
    note = width_note(REJECTED_EMBED_DIM, encoders.architecture("deep"))
    runs.append(_measure("deep", _train(corpus, deep, out_dir, "deep"), corpus, labeled, note))

    rows = [run.row() for run in runs]
    utils.write_csv(os.path.join(out_dir, TREND_CSV), TREND_HEADER, rows)
    with open(os.path.join(out_dir, TREND_MARKDOWN), "w", encoding="utf-8") as f:
        f.write(trend_markdown(rows))
    for run in runs:
        logging.info(f"Trend {run.name}: {run.psnr}")
    return runs
