import math, unittest

import numpy as np

from src import errors, optim
from src.optim import AdamW, AdamWHyper, AdamWState
from src.tensor import Tensor

from . import common


class AdamWTest(common.PatchmixTest):
    def step(self, param: float, grad: float, lr: float, weight_decay: float) -> float:
        params = [np.array([param])]
        state = AdamWState([(1,)], np.float64)
        hyper = AdamWHyper(weight_decay=weight_decay)
        optim.adamw_step(params, [np.array([grad])], state, lr, hyper)
        return float(params[0][0])

    def test_first_step_moves_by_lr(self) -> None:
        self.assertAlmostEqual(self.step(1.0, 1.0, 0.1, 0.0), 0.9, places=6)
        self.assertAlmostEqual(self.step(1.0, -3.0, 0.1, 0.0), 1.1, places=6)

    def test_decoupled_weight_decay(self) -> None:
        self.assertAlmostEqual(self.step(2.0, 0.0, 0.1, 0.5), 2.0 * (1.0 - 0.1 * 0.5), places=12)

    def test_zero_learning_rate_keeps_parameters(self) -> None:
        self.assertEqual(self.step(1.5, 2.0, 0.0, 0.01), 1.5)

    def test_moments_and_step_count(self) -> None:
        param = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        optimizer = AdamW([param], AdamWHyper(weight_decay=0.0))
        for _ in range(3):
            param.grad = np.array([1.0, 2.0])
            optimizer.step(0.01)
        self.assertEqual(optimizer.state.step, 3)

        moments = optimizer.moments(["w"])
        self.assertAlmostEqual(moments["adam.m.w"][0], 1.0 - 0.9**3, places=12)
        self.assertAlmostEqual(moments["adam.v.w"][1], 4.0 * (1.0 - 0.999**3), places=12)

        other = AdamW([Tensor(np.zeros(2), requires_grad=True)], AdamWHyper())
        other.load_moments(["w"], moments, 3)
        self.assertTrue(np.array_equal(other.state.first[0], moments["adam.m.w"]))
        self.assertEqual(other.state.step, 3)
        with self.assertRaises(errors.ConfigError):
            other.load_moments(["b"], moments, 3)

    def test_missing_gradient_counts_as_zero(self) -> None:
        param = Tensor(np.array([2.0]), requires_grad=True)
        AdamW([param], AdamWHyper(weight_decay=0.5)).step(0.1)
        self.assert_close(param.data, [1.9], 1e-12)

    def test_mismatched_lists(self) -> None:
        state = AdamWState([(2,)], np.float64)
        with self.assertRaises(errors.DimensionError):
            optim.adamw_step([np.zeros(2)], [], state, 0.1, AdamWHyper())
        with self.assertRaises(errors.DimensionError):
            optim.adamw_step([np.zeros(2)], [np.zeros(3)], state, 0.1, AdamWHyper())


class CosineTest(unittest.TestCase):
    def test_schedule(self) -> None:
        self.assertEqual(optim.cosine_lr(0, 100, 1e-3), 1e-3)
        self.assertAlmostEqual(optim.cosine_lr(50, 100, 1e-3), 5e-4, places=15)
        self.assertAlmostEqual(optim.cosine_lr(100, 100, 1e-3), 0.0, places=15)
        self.assertAlmostEqual(
            optim.cosine_lr(25, 100, 1.0), 0.5 * (1.0 + math.cos(math.pi / 4)), places=15
        )
        self.assertAlmostEqual(optim.cosine_lr(100, 100, 1.0, 0.1), 0.1, places=15)

    def test_non_increasing(self) -> None:
        values = [optim.cosine_lr(s, 40, 1e-3) for s in range(41)]
        self.assertTrue(all(a >= b for a, b in zip(values, values[1:])))

    def test_out_of_range(self) -> None:
        with self.assertRaises(errors.ConfigError):
            optim.cosine_lr(101, 100, 1e-3)
        with self.assertRaises(errors.ConfigError):
            optim.cosine_lr(0, 0, 1e-3)


if __name__ == "__main__":
    unittest.main()
