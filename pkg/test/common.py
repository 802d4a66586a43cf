import os, shutil, tempfile, unittest

import numpy as np

from typing import Callable, List, Optional, Sequence

from src import encoder, generator, settings, tensor
from src.encoder import Encoder, EncoderConfig
from src.essentials import Corpus, DomainSample
from src.tensor import Tensor


def tiny_config() -> EncoderConfig:
    """C=3, H=W=8, PS=4 (P=4), L=24, V=1, one block with two heads."""

    return encoder.architecture("tiny")


def tiny_encoder(seed: int = 0) -> Encoder:
    return Encoder(tiny_config(), np.random.default_rng(seed))


def random_images(count: int, seed: int = 0, size: int = 8) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, (count, 3, size, size))


def tiny_corpus(
    train: int = 16, unlabeled: int = 8, held_out: int = 8, size: int = 8, seed: int = 0
) -> Corpus:
    """Generated corpus with the default domain split, small enough for unit tests."""

    rng = np.random.default_rng(seed)
    samples: List[DomainSample] = list()
    plan = [
        (settings.Split.TRAIN, (0, 1, 2), train),
        (settings.Split.UNLABELED, (0, 1, 2), unlabeled),
        (settings.Split.VAL, (3,), held_out),
        (settings.Split.TEST, (4,), held_out),
    ]
    for split, domains, count in plan:
        for domain_id in domains:
            for index in range(count):
                labeled = split != settings.Split.UNLABELED
                samples.append(
                    generator.generate_sample(
                        index % 2, domain_id, rng, split=split, labeled=labeled, size=size
                    )
                )
    return Corpus(samples)


class PatchmixTest(unittest.TestCase):
    """Runs every test in double precision and offers numeric assertions."""

    PRECISION = "f64"

    def setUp(self) -> None:
        super().setUp()
        self._previous_precision = tensor.get_precision()
        tensor.set_precision(self.PRECISION)

    def tearDown(self) -> None:
        tensor.set_precision(self._previous_precision)
        super().tearDown()

    def assert_close(self, received, expected, tolerance: float = 1e-10) -> None:
        """Asserts element-wise agreement within an absolute tolerance."""

        received, expected = np.asarray(received), np.asarray(expected)
        self.assertEqual(received.shape, expected.shape)
        if received.size:
            error = float(np.max(np.abs(received - expected)))
            self.assertLessEqual(error, tolerance, f"max abs error {error}")

    def check_gradients(
        self,
        function: Callable[[Sequence[Tensor]], Tensor],
        inputs: Sequence[np.ndarray],
        tolerance: float = 1e-4,
        step: float = 1e-5,
        samples: Optional[int] = None,
        seed: int = 0,
    ) -> None:
        """Compares reverse-mode gradients of a scalar function with central differences.

        With `samples` set, only that many random coordinates of every input are checked.
        The error is the largest deviation relative to the largest gradient magnitude.
        """

        tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
        function(tensors).backward()
        rng = np.random.default_rng(seed)

        for position, t in enumerate(tensors):
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            coordinates = np.arange(flat.size)
            if samples is not None and samples < flat.size:
                coordinates = rng.choice(flat.size, size=samples, replace=False)

            numeric = np.zeros(len(coordinates))
            with tensor.no_grad():
                for k, index in enumerate(coordinates):
                    original = flat[index]
                    flat[index] = original + step
                    upper = function(tensors).item()
                    flat[index] = original - step
                    lower = function(tensors).item()
                    flat[index] = original
                    numeric[k] = (upper - lower) / (2 * step)

            picked = analytic.reshape(-1)[coordinates]
            scale = max(float(np.max(np.abs(picked))), float(np.max(np.abs(numeric))), 1e-8)
            error = float(np.max(np.abs(picked - numeric))) / scale
            self.assertLess(error, tolerance, f"input {position}: relative error {error}")


class TemporaryDirectoryTest(PatchmixTest):
    def setUp(self) -> None:
        super().setUp()
        self.directory = tempfile.mkdtemp(prefix="patchmix-")

    def tearDown(self) -> None:
        shutil.rmtree(self.directory, ignore_errors=True)
        super().tearDown()

    def path(self, *parts: str) -> str:
        return os.path.join(self.directory, *parts)
