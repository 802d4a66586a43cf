import math

from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import errors
from .tensor import Tensor


class AdamWHyper:
    def __init__(
        self,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ) -> None:
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay


class AdamWState:
    """First and second moments per parameter plus the number of steps taken."""

    def __init__(self, shapes: Sequence[Tuple[int, ...]], dtype: type = np.float32) -> None:
        self.step = 0
        self.first: List[np.ndarray] = [np.zeros(s, dtype=dtype) for s in shapes]
        self.second: List[np.ndarray] = [np.zeros(s, dtype=dtype) for s in shapes]


def adamw_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamWState,
    lr: float,
    hyper: AdamWHyper,
) -> None:
    """Updates `params` in place; weight decay is decoupled from the adaptive step."""

    if len(params) != len(grads) or len(params) != len(state.first):
        raise errors.DimensionError(
            f"Got {len(params)} parameters, {len(grads)} gradients and "
            f"{len(state.first)} moment slots"
        )

    beta1, beta2 = hyper.betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step

    for param, grad, first, second in zip(params, grads, state.first, state.second):
        if param.shape != grad.shape or param.shape != first.shape:
            raise errors.DimensionError(
                f"Parameter {param.shape}, gradient {grad.shape} and moments {first.shape} differ"
            )
        first *= beta1
        first += (1.0 - beta1) * grad
        second *= beta2
        second += (1.0 - beta2) * grad * grad

        param -= lr * hyper.weight_decay * param
        param -= lr * (first / correction1) / (np.sqrt(second / correction2) + hyper.eps)


class AdamW:
    """Keeps the moments of a fixed list of parameters."""

    def __init__(self, params: Sequence[Tensor], hyper: AdamWHyper) -> None:
        self.params = list(params)
        self.hyper = hyper
        dtype = self.params[0].data.dtype.type if self.params else np.float32
        self.state = AdamWState([p.shape for p in self.params], dtype)

    def step(self, lr: float) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adamw_step([p.data for p in self.params], grads, self.state, lr, self.hyper)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def moments(self, names: Sequence[str]) -> Dict[str, np.ndarray]:
        result = dict()
        for name, first, second in zip(names, self.state.first, self.state.second):
            result[f"adam.m.{name}"] = first.copy()
            result[f"adam.v.{name}"] = second.copy()
        return result

    def load_moments(self, names: Sequence[str], blocks: Dict[str, np.ndarray], step: int) -> None:
        for i, name in enumerate(names):
            for key, slots in (("m", self.state.first), ("v", self.state.second)):
                block = blocks.get(f"adam.{key}.{name}")
                if block is None or block.shape != slots[i].shape:
                    raise errors.ConfigError(f"Optimizer moment '{key}' of '{name}' is missing")
                slots[i] = np.array(block, dtype=slots[i].dtype)
        self.state.step = step


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Single-cycle cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`."""

    if total_steps <= 0 or not 0 <= step <= total_steps:
        raise errors.ConfigError(f"Schedule step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
