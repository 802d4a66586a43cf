import copy, logging, os, time

from typing import Dict, Iterator, List, Optional

import numpy as np

from . import encoder as encoders
from . import errors, executor, losses, settings, tensor, utils
from .checkpoint import EncoderCheckpoint, save_checkpoint
from .encoder import Encoder, EncoderConfig
from .essentials import Corpus, TrainConfig, images_of
from .optim import AdamW, AdamWHyper, cosine_lr
from .tensor import Tensor

LOSS_HEADER = ("epoch", "L_C_a", "L_C_c", "L_R", "L_total", "lr", "wall_time")


class BatchProducer(executor.Producer):
    """Full batches of one epoch in the order drawn from (seed, epoch); the remainder is dropped."""

    def __init__(self, images: np.ndarray, seed: int, epoch: int, batch_size: int) -> None:
        self.images = images
        self.order = utils.seed_stream(seed, settings.Stream.DATA, epoch).permutation(len(images))
        self.batch_size = batch_size

    def produce(self) -> Iterator[np.ndarray]:
        for start in range(0, len(self.order) - self.batch_size + 1, self.batch_size):
            indices = self.order[start : start + self.batch_size]
            yield np.ascontiguousarray(self.images[indices], dtype=tensor.get_dtype())


class EpochReport:
    def __init__(self, epoch: int, means: Dict[str, float], lr: float, wall_time: float) -> None:
        self.epoch = epoch
        self.means = means
        self.lr = lr
        self.wall_time = wall_time

    def as_row(self) -> List[object]:
        return [
            self.epoch,
            *(repr(self.means[key]) for key in ("L_C_a", "L_C_c", "L_R", "L_total")),
            repr(self.lr),
            f"{self.wall_time:.3f}",
        ]


class Trainer:
    """Trains one encoder on a fixed image array. Labels never reach the trainer.

    Parameters and optimizer state are owned by the calling thread; batches are prepared by a
    prefetching thread. Everything random derives from `config.seed`: initialisation, the
    per-epoch data order and the mixing plans, so a run resumed from any checkpoint continues
    bit-exactly.
    """

    def __init__(
        self,
        config: TrainConfig,
        images: np.ndarray,
        out_dir: Optional[str] = None,
        encoder_config: Optional[EncoderConfig] = None,
    ) -> None:
        config.validate()
        self.config = config
        self.encoder_config = encoder_config or encoders.architecture(config.arch)
        self.out_dir = out_dir

        if images.ndim != 4 or images.shape[1:] != self.encoder_config.geometry().image_shape:
            raise errors.ConfigError(
                f"Images of shape {images.shape[1:]} do not match encoder geometry "
                f"{self.encoder_config.geometry().image_shape}"
            )
        self.images = images
        self.steps_per_epoch = len(images) // config.batch_size
        if self.steps_per_epoch < 1:
            raise errors.ConfigError(
                f"Dataset of {len(images)} images is smaller than one batch of {config.batch_size}"
            )
        if len(images) % config.batch_size:
            logging.warning(
                f"Skipping {len(images) % config.batch_size} samples per epoch "
                f"that do not fill a batch"
            )
        self.total_steps = config.horizon() * self.steps_per_epoch
        self.weights = losses.LossWeights(
            config.lambda_anatomy, config.lambda_characteristic, config.lambda_reconstruction
        )

        with tensor.precision(config.precision):
            init_rng = utils.seed_stream(config.seed, settings.Stream.INIT)
            self.encoder = Encoder(self.encoder_config, init_rng)
        logging.info(
            f"Encoder {config.arch}: {self.encoder.num_parameters()} parameters, "
            f"{self.steps_per_epoch} steps per epoch"
        )
        self.names = [name for name, _ in self.encoder.named_parameters()]
        hyper = AdamWHyper((config.betas[0], config.betas[1]), config.eps, config.weight_decay)
        self.optimizer = AdamW(self.encoder.parameters(), hyper)
        self.mixing_rng = utils.seed_stream(config.seed, settings.Stream.MIXING)

        self.epoch = 0
        self.step = 0
        self.best_loss: Optional[float] = None
        self.history: List[Dict[str, float]] = list()
        self.epochs: List[EpochReport] = list()

    def restore(self, ckpt: EncoderCheckpoint) -> None:
        """Continues from a checkpoint written by a trainer with the same recipe."""

        if ckpt.config != self.encoder_config:
            raise errors.ConfigError(
                f"Checkpoint holds {ckpt.config}, trainer is configured for {self.encoder_config}"
            )
        if ckpt.precision != self.config.precision:
            raise errors.ConfigError(
                f"Checkpoint precision {ckpt.precision} differs from {self.config.precision}"
            )
        with tensor.precision(self.config.precision):
            self.encoder.load_state_dict(ckpt.parameters)
        self.optimizer.load_moments(self.names, ckpt.moments, ckpt.step)
        self.mixing_rng.bit_generator.state = ckpt.rng_state
        self.epoch = ckpt.epoch
        self.step = ckpt.step
        self.best_loss = ckpt.best_loss
        logging.info(f"Resuming at epoch {self.epoch}, step {self.step}")

    def checkpoint(self) -> EncoderCheckpoint:
        return EncoderCheckpoint(
            self.encoder_config,
            self.config,
            self.encoder.state_dict(),
            self.optimizer.moments(self.names),
            self.step,
            self.epoch,
            copy.deepcopy(self.mixing_rng.bit_generator.state),
            self.best_loss,
            self.config.precision,
        )

    def train_step(self, batch: np.ndarray) -> Dict[str, float]:
        lr = cosine_lr(self.step, self.total_steps, self.config.learning_rate)
        plan = losses.build_mix_plan(
            len(batch), self.config.mixes, self.encoder_config.num_patches, self.mixing_rng
        )
        report = losses.total_loss(Tensor(batch), plan, self.encoder, self.weights)
        if not report.is_finite():
            raise errors.TrainingDivergedError(self.step, report.as_dict())

        self.optimizer.zero_grad()
        report.objective.backward()
        self.optimizer.step(lr)
        self.step += 1

        values = report.as_dict()
        values["lr"] = lr
        logging.debug(f"Step {self.step}: " + ", ".join(f"{k}={v:.6f}" for k, v in values.items()))
        return values

    def train_epoch(self, started: float) -> EpochReport:
        producer = BatchProducer(self.images, self.config.seed, self.epoch, self.config.batch_size)
        steps = list()
        for batch in executor.Prefetcher(producer, self.config.prefetch):
            steps.append(self.train_step(batch))
        self.history.extend(steps)
        self.epoch += 1

        means = {key: float(np.mean([s[key] for s in steps])) for key in LOSS_HEADER[1:5]}
        report = EpochReport(self.epoch, means, steps[-1]["lr"], time.monotonic() - started)
        self.epochs.append(report)
        logging.info(
            f"Epoch {self.epoch}/{self.config.epochs}: "
            + ", ".join(f"{k}={v:.5f}" for k, v in means.items())
            + f", lr={report.lr:.2e}"
        )
        return report

    def run(self) -> EncoderCheckpoint:
        """Trains until `config.epochs` and returns the final checkpoint."""

        started = time.monotonic()
        with tensor.precision(self.config.precision):
            while self.epoch < self.config.epochs:
                report = self.train_epoch(started)
                improved = self.best_loss is None or report.means["L_total"] < self.best_loss
                if improved:
                    self.best_loss = report.means["L_total"]
                if self.out_dir is not None:
                    utils.append_csv(
                        os.path.join(self.out_dir, settings.LOSS_FILE), LOSS_HEADER, report.as_row()
                    )
                    final = self.checkpoint()
                    save_checkpoint(os.path.join(self.out_dir, settings.FINAL_CHECKPOINT), final)
                    if improved:
                        save_checkpoint(os.path.join(self.out_dir, settings.BEST_CHECKPOINT), final)
        return self.checkpoint()


def recipe_deviations(config: TrainConfig, encoder_config: EncoderConfig) -> Dict[str, str]:
    """Differences between this run and the full-scale recipe, as `reference -> used` strings."""

    used = {
        "image_size": encoder_config.image_size,
        "patch_size": encoder_config.patch_size,
        "embed_dim": encoder_config.embed_dim,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "mixes": config.mixes,
        "learning_rate": config.learning_rate,
    }
    return {
        f"deviation.{key}": f"{settings.REFERENCE_RECIPE[key]} -> {value}"
        for key, value in used.items()
        if settings.REFERENCE_RECIPE[key] != value
    }


def train_encoder(
    corpus: Corpus,
    config: TrainConfig,
    out_dir: Optional[str] = None,
    resume: Optional[EncoderCheckpoint] = None,
    encoder_config: Optional[EncoderConfig] = None,
) -> Trainer:
    """Trains on the training pool (plus the unlabeled pool if configured); returns the trainer
    with its history and final state."""

    pool = corpus.encoder_pool(config.include_unlabeled)
    if len(pool) < 2:
        raise errors.ConfigError(f"Encoder training needs at least two images, got {len(pool)}")
    logging.info(
        f"Training encoder '{config.arch}' on {len(pool)} images for {config.epochs} epochs"
    )

    trainer = Trainer(config, images_of(pool), out_dir, encoder_config)
    if resume is not None:
        trainer.restore(resume)
    trainer.run()
    return trainer
