from typing import Dict, List, Optional, Sequence

import numpy as np

from . import errors, settings


class DomainSample:
    """One image with its anatomy class and the domain it was drawn from.

    `label` is kept for unlabeled samples too when it is known (generated data); `labeled`
    tells whether consumers are allowed to see it.
    """

    def __init__(
        self,
        image: np.ndarray,
        label: Optional[int],
        domain_id: int,
        split: settings.Split,
        labeled: bool = True,
        path: Optional[str] = None,
    ) -> None:
        if image.ndim != 3:
            raise errors.CorpusError(f"Expected a C×H×W image, got shape {image.shape}")
        if labeled and label is None:
            raise errors.CorpusError("A labeled sample needs a label")
        self.image = image
        self.label = label
        self.domain_id = domain_id
        self.split = split
        self.labeled = labeled
        self.path = path

    def visible_label(self) -> Optional[int]:
        return self.label if self.labeled else None

    def __repr__(self) -> str:
        label = self.label if self.labeled else settings.UNLABELED_MARK
        return f"DomainSample(label={label}, domain={self.domain_id}, split={self.split.value})"


class Corpus:
    """Samples grouped by split."""

    def __init__(self, samples: Sequence[DomainSample]) -> None:
        self.splits: Dict[settings.Split, List[DomainSample]] = {s: list() for s in settings.Split}
        for sample in samples:
            self.splits[sample.split].append(sample)

    def get(self, split: settings.Split) -> List[DomainSample]:
        return self.splits[split]

    def encoder_pool(self, include_unlabeled: bool) -> List[DomainSample]:
        """Samples the self-supervised encoder trains on; labels are never consulted."""

        pool = list(self.splits[settings.Split.TRAIN])
        if include_unlabeled:
            pool.extend(self.splits[settings.Split.UNLABELED])
        return pool

    def image_size(self) -> Optional[int]:
        for samples in self.splits.values():
            if samples:
                return int(samples[0].image.shape[-1])
        return None

    def counts(self) -> Dict[str, int]:
        return {split.value: len(samples) for split, samples in self.splits.items()}

    def __len__(self) -> int:
        return sum(len(s) for s in self.splits.values())


def images_of(samples: Sequence[DomainSample]) -> np.ndarray:
    if len(samples) == 0:
        raise errors.CorpusError("Sample list is empty")
    return np.stack([s.image for s in samples])


def labels_of(samples: Sequence[DomainSample]) -> np.ndarray:
    labels = [s.visible_label() for s in samples]
    if any(label is None for label in labels):
        raise errors.CorpusError("Labels requested for unlabeled samples")
    return np.array(labels, dtype=np.int64)


class CorpusManifest:
    """Recipe of a generated corpus: which domains feed which split and how many samples each."""

    def __init__(
        self,
        seed: int = 0,
        image_size: int = 32,
        train_domains: Sequence[int] = (0, 1, 2),
        val_domains: Sequence[int] = (3,),
        test_domains: Sequence[int] = (4,),
        labeled_per_domain: int = 1000,
        unlabeled_per_domain: int = 1000,
        eval_per_domain: int = 500,
        generator_version: int = settings.GENERATOR_VERSION,
    ) -> None:
        self.seed = seed
        self.image_size = image_size
        self.train_domains = list(train_domains)
        self.val_domains = list(val_domains)
        self.test_domains = list(test_domains)
        self.labeled_per_domain = labeled_per_domain
        self.unlabeled_per_domain = unlabeled_per_domain
        self.eval_per_domain = eval_per_domain
        self.generator_version = generator_version

    def validate(self) -> None:
        if not self.train_domains:
            raise errors.ConfigError("Manifest declares no training domains")
        seen = set(self.train_domains)
        for name, domains in (("val", self.val_domains), ("test", self.test_domains)):
            overlap = seen & set(domains)
            if overlap:
                raise errors.ConfigError(
                    f"Domains {sorted(overlap)} are used for training and {name}"
                )
        counts = (self.labeled_per_domain, self.unlabeled_per_domain, self.eval_per_domain)
        if self.image_size <= 0 or min(counts) < 0:
            raise errors.ConfigError(f"Invalid manifest sizes {self.image_size}, {counts}")
        if self.generator_version != settings.GENERATOR_VERSION:
            raise errors.ConfigError(
                f"Manifest targets generator version {self.generator_version}, "
                f"this build provides {settings.GENERATOR_VERSION}"
            )

    def domains_of(self, split: settings.Split) -> List[int]:
        if split in (settings.Split.TRAIN, settings.Split.UNLABELED):
            return self.train_domains
        return self.val_domains if split == settings.Split.VAL else self.test_domains

    def count_of(self, split: settings.Split) -> int:
        if split == settings.Split.TRAIN:
            return self.labeled_per_domain
        if split == settings.Split.UNLABELED:
            return self.unlabeled_per_domain
        return self.eval_per_domain


class TrainConfig:
    """Encoder training recipe. `schedule_epochs` is the cosine horizon; it defaults to `epochs`
    and stays fixed when a run is resumed with a larger `epochs`."""

    def __init__(
        self,
        epochs: int = 50,
        batch_size: int = 16,
        mixes: int = 4,
        learning_rate: float = 1e-3,
        weight_decay: float = 0.01,
        betas: Sequence[float] = (0.9, 0.999),
        eps: float = 1e-8,
        lambda_anatomy: float = 1.0,
        lambda_characteristic: float = 1.0,
        lambda_reconstruction: float = 1.0,
        seed: int = 0,
        schedule_epochs: Optional[int] = None,
        include_unlabeled: bool = False,
        arch: str = "base",
        precision: str = "f32",
        prefetch: int = 2,
    ) -> None:
        self.epochs = epochs
        self.batch_size = batch_size
        self.mixes = mixes
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.betas = tuple(betas)
        self.eps = eps
        self.lambda_anatomy = lambda_anatomy
        self.lambda_characteristic = lambda_characteristic
        self.lambda_reconstruction = lambda_reconstruction
        self.seed = seed
        self.schedule_epochs = schedule_epochs
        self.include_unlabeled = include_unlabeled
        self.arch = arch
        self.precision = precision
        self.prefetch = prefetch

    def horizon(self) -> int:
        return self.schedule_epochs if self.schedule_epochs is not None else self.epochs

    def validate(self) -> None:
        if self.epochs > self.horizon():
            raise errors.ConfigError(
                f"Training for {self.epochs} epochs exceeds the schedule horizon {self.horizon()}"
            )
        if min(self.epochs, self.mixes, self.horizon()) < 1 or self.batch_size < 2:
            raise errors.ConfigError(
                f"Need epochs, mixes, horizon >= 1 and batch size >= 2, got "
                f"{self.epochs}, {self.mixes}, {self.horizon()}, {self.batch_size}"
            )
        if self.learning_rate <= 0 or self.weight_decay < 0 or self.eps <= 0:
            raise errors.ConfigError(
                f"Invalid optimizer settings lr={self.learning_rate}, "
                f"weight_decay={self.weight_decay}, eps={self.eps}"
            )
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise errors.ConfigError(f"Betas must be two values in [0, 1), got {self.betas}")
        weights = (self.lambda_anatomy, self.lambda_characteristic, self.lambda_reconstruction)
        if min(weights) < 0:
            raise errors.ConfigError(f"Loss weights must be non-negative, got {weights}")
        if self.precision not in ("f32", "f64"):
            raise errors.ConfigError(f"Unknown precision '{self.precision}'")


class ClassifierConfig:
    """Downstream classifier recipe; compared runs differ in `augment` only."""

    def __init__(
        self,
        channels: Sequence[int] = (24, 48, 64),
        epochs: int = 10,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        weight_decay: float = 0.01,
        augment: settings.AugmentMode = settings.AugmentMode.NONE,
        mixes: int = 1,
        seed: int = 0,
        num_classes: int = 2,
    ) -> None:
        self.channels = list(channels)
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.augment = augment
        self.mixes = mixes
        self.seed = seed
        self.num_classes = num_classes

    def validate(self) -> None:
        if not self.channels or min(self.channels) < 1:
            raise errors.ConfigError(f"Invalid classifier channels {self.channels}")
        if min(self.epochs, self.mixes) < 1 or self.batch_size < 2 or self.num_classes < 2:
            raise errors.ConfigError(
                f"Need epochs, mixes >= 1, batch size >= 2 and >= 2 classes, got "
                f"{self.epochs}, {self.mixes}, {self.batch_size}, {self.num_classes}"
            )
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise errors.ConfigError(
                f"Invalid optimizer settings lr={self.learning_rate}, "
                f"weight_decay={self.weight_decay}"
            )


class RunConfig:
    """Everything needed to repeat one CLI invocation."""

    def __init__(self, command: str, seed: int, out_dir: str, values: Dict[str, str]) -> None:
        self.command = command
        self.seed = seed
        self.out_dir = out_dir
        self.values = values
