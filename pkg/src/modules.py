import math

from typing import Dict, Iterator, List, Tuple

import numpy as np

from . import errors, tensor
from .tensor import Tensor


class Module:
    """Bundles named parameters and sub-modules.

    Parameters and children are registered with `add_parameter` and `add_module` during
    initialisation; the registration order defines the order of `named_parameters`, which in
    turn defines the checkpoint layout.
    """

    def __init__(self) -> None:
        self._parameters: Dict[str, Tensor] = dict()
        self._children: Dict[str, "Module"] = dict()

    def add_parameter(self, name: str, data: np.ndarray) -> Tensor:
        param = tensor.parameter(data)
        self._parameters[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        tensor.zero_grad(self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copies stored arrays into the parameters. Names and shapes must match exactly."""

        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            raise errors.ConfigError(
                f"Parameter names differ (missing: {missing}, unexpected: {unexpected})"
            )
        for name, param in own.items():
            if param.shape != state[name].shape:
                raise errors.ConfigError(
                    f"Parameter '{name}' has shape {state[name].shape}, expected {param.shape}"
                )
            param.data = np.array(state[name], dtype=tensor.get_dtype())


class Linear(Module):
    """Affine map `x @ W + b` with W of shape in×out."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        super().__init__()
        shape = (in_features, out_features)
        self.weight = self.add_parameter("weight", rng.normal(0.0, 0.02, shape))
        self.bias = self.add_parameter("bias", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.eps = eps
        self.gain = self.add_parameter("gain", np.ones(dim))
        self.shift = self.add_parameter("shift", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return tensor.layer_norm(x, -1, self.eps) * self.gain + self.shift


class Conv2d(Module):
    """Stride-1 'same' convolution with He-normal weights."""

    def __init__(
        self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator
    ) -> None:
        super().__init__()
        std = math.sqrt(2.0 / (in_channels * kernel * kernel))
        shape = (out_channels, in_channels, kernel, kernel)
        self.padding = kernel // 2
        self.weight = self.add_parameter("weight", rng.normal(0.0, std, shape))
        self.bias = self.add_parameter("bias", np.zeros((out_channels, 1, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        return tensor.conv2d(x, self.weight, self.padding) + self.bias
