"""Downstream classifier trained with or without mixed synthetic images.

Compared runs share the architecture, initialisation, data order and schedule; only the
augmentation mode differs. In mix mode the frozen encoder produces, for every batch of N
originals, N·M synthetic images that inherit the label of their anatomy source.
"""

import logging

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import errors, evaluation, losses, settings, tensor, utils
from .checkpoint import ClassifierCheckpoint
from .encoder import Encoder, split
from .essentials import ClassifierConfig, Corpus, DomainSample, images_of, labels_of
from .modules import Conv2d, Linear, Module
from .optim import AdamW, AdamWHyper, cosine_lr
from .synthesizer import synthesize
from .tensor import Tensor

COMPARISON_HEADER = ("mode", "seed", "val_acc", "test_acc")

# Keys of the classifier seed stream.
INIT_KEY, ORDER_KEY, MIXING_KEY = 0, 1, 2


def avg_pool2(x: Tensor) -> Tensor:
    batch, channels, height, width = x.shape
    blocks = x.reshape(batch, channels, height // 2, 2, width // 2, 2)
    return blocks.mean(axis=(3, 5))


class SmallCNN(Module):
    """3×3 conv + ReLU blocks, each followed by 2×2 average pooling while the map is even, then
    global average pooling and a linear head."""

    def __init__(
        self, config: ClassifierConfig, in_channels: int, rng: np.random.Generator
    ) -> None:
        super().__init__()
        self.convs = list()
        previous = in_channels
        for i, channels in enumerate(config.channels):
            self.convs.append(self.add_module(f"conv{i}", Conv2d(previous, channels, 3, rng)))
            previous = channels
        self.head = self.add_module("head", Linear(previous, config.num_classes, rng))

    def __call__(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = tensor.relu(conv(x))
            if x.shape[2] % 2 == 0 and x.shape[3] % 2 == 0:
                x = avg_pool2(x)
        return self.head(x.mean(axis=(2, 3)))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    picked = tensor.log_softmax(logits, -1)[np.arange(len(labels)), labels]
    return -picked.mean()


def augment_batch(
    encoder: Encoder,
    images: np.ndarray,
    labels: np.ndarray,
    mixes: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Appends `mixes` synthetic images per sample; the encoder only runs forward."""

    geo = encoder.config.geometry()
    plan = losses.build_mix_plan(len(images), mixes, geo.num_patches, rng)
    z_a, z_c = split(Tensor(evaluation.embed(encoder, images)))
    with tensor.no_grad():
        anatomy = z_a[plan.anatomy_indices()]
        donor = z_c[plan.donor_indices(), plan.patch_indices()].reshape(len(plan), 1, -1)
        synthetic = np.clip(synthesize(anatomy, donor, geo).numpy(), 0.0, 1.0)

    mixed_images = np.concatenate([images, synthetic.astype(images.dtype)])
    mixed_labels = np.concatenate([labels, labels[plan.anatomy_indices()]])
    return mixed_images, mixed_labels


def predict(model: SmallCNN, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
    predictions = list()
    with tensor.no_grad():
        for start in range(0, len(images), batch_size):
            logits = model(Tensor(images[start : start + batch_size])).numpy()
            predictions.append(logits.argmax(axis=-1))
    return np.concatenate(predictions)


def accuracy(model: SmallCNN, samples: Sequence[DomainSample]) -> Optional[float]:
    if len(samples) == 0:
        return None
    return float((predict(model, images_of(samples)) == labels_of(samples)).mean())


class ClassifierResult:
    def __init__(
        self,
        model: SmallCNN,
        checkpoint: ClassifierCheckpoint,
        val_accuracy: Optional[float],
        test_accuracy: Optional[float],
        history: List[float],
    ) -> None:
        self.model = model
        self.checkpoint = checkpoint
        self.val_accuracy = val_accuracy
        self.test_accuracy = test_accuracy
        self.history = history


def train_classifier(
    corpus: Corpus, config: ClassifierConfig, encoder: Optional[Encoder] = None
) -> ClassifierResult:
    config.validate()
    mix = config.augment == settings.AugmentMode.MIX
    if mix and encoder is None:
        raise errors.ConfigError("Mix augmentation needs a trained encoder checkpoint")

    train = corpus.get(settings.Split.TRAIN)
    if len(train) < config.batch_size:
        raise errors.ConfigError(
            f"Labeled training split has {len(train)} samples, batch size is {config.batch_size}"
        )
    images, labels = images_of(train).astype(tensor.get_dtype()), labels_of(train)
    if mix:
        assert encoder is not None
        if images.shape[1:] != encoder.config.geometry().image_shape:
            raise errors.ConfigError(
                f"Encoder geometry {encoder.config.geometry()} does not match the corpus images"
            )

    init_rng = utils.seed_stream(config.seed, settings.Stream.CLASSIFIER, INIT_KEY)
    model = SmallCNN(config, images.shape[1], init_rng)
    optimizer = AdamW(model.parameters(), AdamWHyper(weight_decay=config.weight_decay))
    mixing_rng = utils.seed_stream(config.seed, settings.Stream.CLASSIFIER, MIXING_KEY)
    steps_per_epoch = len(images) // config.batch_size
    total_steps = config.epochs * steps_per_epoch

    step = 0
    history: List[float] = list()
    for epoch in range(config.epochs):
        order_rng = utils.seed_stream(config.seed, settings.Stream.CLASSIFIER, ORDER_KEY, epoch)
        order = order_rng.permutation(len(images))
        epoch_losses = list()
        for start in range(0, steps_per_epoch * config.batch_size, config.batch_size):
            indices = order[start : start + config.batch_size]
            batch, batch_labels = images[indices], labels[indices]
            if mix:
                assert encoder is not None
                batch, batch_labels = augment_batch(
                    encoder, batch, batch_labels, config.mixes, mixing_rng
                )

            loss = cross_entropy(model(Tensor(batch)), batch_labels)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(cosine_lr(step, total_steps, config.learning_rate))
            step += 1
            epoch_losses.append(loss.item())

        history.append(float(np.mean(epoch_losses)))
        logging.info(
            f"Classifier ({config.augment.value}, seed {config.seed}) "
            f"epoch {epoch + 1}/{config.epochs}: loss={history[-1]:.4f}"
        )

    val_accuracy = accuracy(model, corpus.get(settings.Split.VAL))
    test_accuracy = accuracy(model, corpus.get(settings.Split.TEST))
    logging.info(
        f"Classifier ({config.augment.value}, seed {config.seed}): "
        f"val={val_accuracy}, test={test_accuracy}"
    )
    ckpt = ClassifierCheckpoint(
        config,
        images.shape[-1],
        model.state_dict(),
        step,
        config.epochs,
        val_accuracy,
        test_accuracy,
        tensor.get_precision(),
    )
    return ClassifierResult(model, ckpt, val_accuracy, test_accuracy, history)


def compare_augmentation(
    corpus: Corpus,
    config: ClassifierConfig,
    encoder: Encoder,
    seeds: Sequence[int],
    path: Optional[str] = None,
) -> Dict[str, float]:
    """Trains both modes for every seed and returns the mean OOD test accuracy per mode."""

    rows = list()
    results: Dict[str, List[float]] = {mode.value: list() for mode in settings.AugmentMode}
    for seed in seeds:
        for mode in settings.AugmentMode:
            run = ClassifierConfig(
                config.channels,
                config.epochs,
                config.batch_size,
                config.learning_rate,
                config.weight_decay,
                mode,
                config.mixes,
                seed,
                config.num_classes,
            )
            result = train_classifier(corpus, run, encoder)
            rows.append([mode.value, seed, result.val_accuracy, result.test_accuracy])
            if result.test_accuracy is not None:
                results[mode.value].append(result.test_accuracy)

    means = {mode: float(np.mean(values)) for mode, values in results.items() if values}
    for mode, mean in means.items():
        rows.append([f"{mode}_mean", "-", "-", repr(mean)])
    if path is not None:
        utils.write_csv(path, COMPARISON_HEADER, rows)
        logging.info(f"Augmentation comparison written to '{path}'")
    return means
