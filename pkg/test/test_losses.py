import unittest

import numpy as np

from src import errors, geometry, losses, tensor
from src.losses import LossWeights, MixPlan
from src.tensor import Tensor

from . import common


class MixPlanTest(unittest.TestCase):
    def test_entries(self) -> None:
        plan = losses.build_mix_plan(5, 3, 4, np.random.default_rng(0))
        plan.validate()
        self.assertEqual(len(plan), 15)
        for i in range(5):
            donors = [m for a, m, _ in plan.entries if a == i]
            self.assertEqual(len(donors), 3)
            self.assertEqual(len(set(donors)), 3)
            self.assertNotIn(i, donors)
        self.assertTrue(all(0 <= p < 4 for p in plan.patch_indices()))

    def test_replacement_when_batch_is_small(self) -> None:
        plan = losses.build_mix_plan(2, 4, 4, np.random.default_rng(0))
        self.assertEqual(len(plan), 8)
        self.assertTrue(np.array_equal(plan.donor_indices(), [1] * 4 + [0] * 4))

    def test_same_rng_same_plan(self) -> None:
        first = losses.build_mix_plan(6, 2, 64, np.random.default_rng(11))
        second = losses.build_mix_plan(6, 2, 64, np.random.default_rng(11))
        self.assertEqual(first.entries, second.entries)

    def test_invalid_requests(self) -> None:
        rng = np.random.default_rng(0)
        with self.assertRaises(errors.MixingError):
            losses.build_mix_plan(1, 1, 4, rng)
        with self.assertRaises(errors.MixingError):
            losses.build_mix_plan(4, 0, 4, rng)

    def test_invalid_plans(self) -> None:
        with self.assertRaises(errors.MixingError):
            MixPlan([(0, 0, 0), (1, 0, 0)], 2, 1, 4).validate()
        with self.assertRaises(errors.MixingError):
            MixPlan([(0, 1, 4), (1, 0, 0)], 2, 1, 4).validate()
        with self.assertRaises(errors.MixingError):
            MixPlan([(0, 1, 0)], 2, 1, 4).validate()


class LossTest(common.PatchmixTest):
    def setUp(self) -> None:
        super().setUp()
        self.encoder = common.tiny_encoder(3)
        self.images = common.random_images(4, seed=5)
        self.plan = losses.build_mix_plan(4, 2, 4, np.random.default_rng(9))
        self.geo = self.encoder.config.geometry()

    def embed(self, image: np.ndarray) -> np.ndarray:
        with tensor.no_grad():
            return self.encoder(geometry.patchify(Tensor(image), 4)).numpy()

    def synthesize(self, z_a: np.ndarray, z_c: np.ndarray) -> np.ndarray:
        """Patch by patch, straight from the reshaping rules; a single row serves every patch."""

        image = np.zeros((3, 8, 8))
        for p in range(4):
            r, c = divmod(p, 2)
            anatomy = z_a[p].reshape(3, 4, 1)
            characteristic = z_c[p if len(z_c) > 1 else 0].reshape(3, 1, 4)
            for k in range(3):
                image[k, 4 * r : 4 * r + 4, 4 * c : 4 * c + 4] = anatomy[k] @ characteristic[k]
        return image

    def test_matches_direct_computation(self) -> None:
        anatomy, characteristic, reconstruction = list(), list(), list()
        embeddings = [self.embed(image) for image in self.images]
        for i, m, p in self.plan.entries:
            z_a = embeddings[i][:, :12]
            row = embeddings[m][p, 12:]
            z_s = self.embed(self.synthesize(z_a, row[None, :]))
            anatomy.append(np.mean((z_a - z_s[:, :12]) ** 2))
            characteristic.append(np.mean((row[None, :] - z_s[:, 12:]) ** 2))
        for image, z in zip(self.images, embeddings):
            reconstruction.append(np.mean((image - self.synthesize(z[:, :12], z[:, 12:])) ** 2))

        report = losses.total_loss(Tensor(self.images), self.plan, self.encoder, LossWeights())
        self.assertAlmostEqual(report.anatomy, float(np.mean(anatomy)), places=10)
        self.assertAlmostEqual(report.characteristic, float(np.mean(characteristic)), places=10)
        self.assertAlmostEqual(report.reconstruction, float(np.mean(reconstruction)), places=10)
        self.assertTrue(report.is_finite())
        self.assertGreater(report.reconstruction, 0.0)

    def test_reconstruction_uses_own_halves(self) -> None:
        images = Tensor(self.images)
        with tensor.no_grad():
            alone = losses.reconstruction_loss(images, self.encoder).item()
        report = losses.total_loss(images, self.plan, self.encoder, LossWeights())
        self.assertAlmostEqual(report.reconstruction, alone, places=12)

    def test_total_is_weighted_sum(self) -> None:
        weights = LossWeights(0.5, 2.0, 3.0)
        report = losses.total_loss(Tensor(self.images), self.plan, self.encoder, weights)
        expected = 0.5 * report.anatomy + 2.0 * report.characteristic + 3.0 * report.reconstruction
        self.assertAlmostEqual(report.total, expected, places=12)
        self.assertAlmostEqual(report.objective.item(), report.total, places=10)
        self.assertEqual(set(report.as_dict()), {"L_C_a", "L_C_c", "L_R", "L_total"})

    def test_zero_weights(self) -> None:
        report = losses.total_loss(
            Tensor(self.images), self.plan, self.encoder, LossWeights(0.0, 0.0, 0.0)
        )
        self.assertEqual(report.total, 0.0)
        with self.assertRaises(errors.ConfigError):
            LossWeights(-1.0)

    def test_scaling_weights_scales_objective_and_gradients(self) -> None:
        weights = LossWeights(0.5, 2.0, 1.5)
        scaled = weights.scaled(3.0)
        self.assertEqual(
            (scaled.anatomy, scaled.characteristic, scaled.reconstruction), (1.5, 6.0, 4.5)
        )

        def gradients(w: LossWeights):
            self.encoder.zero_grad()
            report = losses.total_loss(Tensor(self.images), self.plan, self.encoder, w)
            report.objective.backward()
            return report, {name: p.grad.copy() for name, p in self.encoder.named_parameters()}

        report, grads = gradients(weights)
        scaled_report, scaled_grads = gradients(scaled)
        self.assertAlmostEqual(scaled_report.objective.item(), 3.0 * report.objective.item(), 10)
        self.assertAlmostEqual(scaled_report.total, 3.0 * report.total, places=10)
        for name, grad in grads.items():
            self.assert_close(scaled_grads[name], 3.0 * grad)

    def test_plan_must_fit_batch(self) -> None:
        plan = losses.build_mix_plan(3, 2, 4, np.random.default_rng(0))
        with self.assertRaises(errors.MixingError):
            losses.total_loss(Tensor(self.images), plan, self.encoder, LossWeights())

    def test_gradient_with_respect_to_images(self) -> None:
        def objective(inputs):
            return losses.total_loss(inputs[0], self.plan, self.encoder, LossWeights()).objective

        self.check_gradients(objective, [self.images], tolerance=1e-3, samples=12)

    def test_gradient_with_respect_to_parameters(self) -> None:
        images = Tensor(self.images)
        report = losses.total_loss(images, self.plan, self.encoder, LossWeights())
        self.encoder.zero_grad()
        report.objective.backward()

        rng = np.random.default_rng(1)
        step = 1e-5
        names = ["position", "patch_embed.weight", "block0.attention.qkv.weight", "norm.gain"]
        params = dict(self.encoder.named_parameters())
        for name in names:
            param = params[name]
            assert param.grad is not None
            flat, analytic = param.data.reshape(-1), param.grad.reshape(-1)
            for index in rng.choice(flat.size, size=4, replace=False):
                original = flat[index]
                with tensor.no_grad():
                    flat[index] = original + step
                    upper = losses.total_loss(images, self.plan, self.encoder, LossWeights()).total
                    flat[index] = original - step
                    lower = losses.total_loss(images, self.plan, self.encoder, LossWeights()).total
                flat[index] = original
                numeric = (upper - lower) / (2 * step)
                scale = max(abs(numeric), abs(analytic[index]), 1e-6)
                self.assertLess(abs(numeric - analytic[index]) / scale, 1e-3, f"{name}[{index}]")


if __name__ == "__main__":
    unittest.main()
