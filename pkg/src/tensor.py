"""Dense tensors with reverse-mode automatic differentiation.

Every operation records its parents and a function mapping the output gradient to the parent
gradients. `Tensor.backward` walks the recorded graph in reverse topological order and
accumulates gradients into every reachable tensor that requires them. Gradients accumulate
across calls; use `zero_grad` between optimizer steps.

All data is row-major and all reshapes are metadata-only reinterpretations of row-major data.
"""

import contextlib, math, threading

from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import errors

GradFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Index = Union[int, slice, np.ndarray, Tuple]
Operand = Union["Tensor", float, int, np.ndarray]

PRECISIONS = {"f32": np.float32, "f64": np.float64}


class _State(threading.local):
    """Precision and recording switch of the calling thread. New threads start in f32 with
    recording enabled."""

    def __init__(self) -> None:
        self.dtype: type = np.float32
        self.grad_enabled = True


_state = _State()


def set_precision(name: str) -> None:
    """Selects the floating point type of tensors the calling thread creates from now on."""

    if name not in PRECISIONS:
        raise errors.ConfigError(f"Unknown precision '{name}', expected one of {list(PRECISIONS)}")
    _state.dtype = PRECISIONS[name]


def get_precision() -> str:
    return "f64" if _state.dtype == np.float64 else "f32"


def get_dtype() -> type:
    return _state.dtype


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    previous = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables graph recording inside the block."""

    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """N-dimensional array participating in reverse-mode differentiation."""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        grad_fn: Optional[GradFn] = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=_state.dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)
        self._grad_fn = grad_fn

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise errors.DimensionError(f"item needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def is_leaf(self) -> bool:
        return len(self._parents) == 0

    def backward(self) -> None:
        """Accumulates d(self)/d(t) into `t.grad` for every reachable `t` requiring gradients."""

        if self.data.size != 1:
            raise errors.DimensionError(f"backward needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return

        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue

            node.grad = grad.copy() if node.grad is None else node.grad + grad

            if node._grad_fn is None:
                continue

            for parent, parent_grad in zip(node._parents, node._grad_fn(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operators

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Index) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for tensor in tensors:
        tensor.zero_grad()


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = list()
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn: GradFn) -> Tensor:
    """Wraps an op result, recording the graph only when some parent needs gradients."""

    if _state.grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, grad_fn=grad_fn)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums `grad` over the axes that broadcasting expanded from `shape`."""

    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise errors.DimensionError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast")


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    result = list()
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise errors.AxisError(f"Axis {ax} is out of range for {ndim} dimensions")
        result.append(ax % ndim)
    return tuple(sorted(result))


# Elementwise


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), grad_fn)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), grad_fn)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), grad_fn)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), grad_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * factor,)

    return _make(a.data * factor, (a,), grad_fn)


def square(a: Tensor) -> Tensor:
    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (2.0 * a.data * g,)

    return _make(a.data * a.data, (a,), grad_fn)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g / (2.0 * out),)

    return _make(out, (a,), grad_fn)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * out,)

    return _make(out, (a,), grad_fn)


def log(a: Tensor) -> Tensor:
    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g / a.data,)

    return _make(np.log(a.data), (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * mask,)

    return _make(a.data * mask, (a,), grad_fn)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""

    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    out = 0.5 * x * (1.0 + t)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _make(out, (a,), grad_fn)


# Reductions


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), grad_fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    return scale(sum(a, axes, keepdims), 1.0 / count)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    (ax,) = _normalize_axes(axis, a.ndim)
    shifted = np.exp(a.data - a.data.max(axis=ax, keepdims=True))
    out = shifted / shifted.sum(axis=ax, keepdims=True)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return _make(out, (a,), grad_fn)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    (ax,) = _normalize_axes(axis, a.ndim)
    shifted = a.data - a.data.max(axis=ax, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=ax, keepdims=True))

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g - np.exp(out) * g.sum(axis=ax, keepdims=True),)

    return _make(out, (a,), grad_fn)


def layer_norm(a: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalizes every slice along `axis` to zero mean and unit variance (no affine)."""

    (ax,) = _normalize_axes(axis, a.ndim)
    centered = a.data - a.data.mean(axis=ax, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=ax, keepdims=True) + eps)
    out = centered * inv_std

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        g_mean = g.mean(axis=ax, keepdims=True)
        gy_mean = (g * out).mean(axis=ax, keepdims=True)
        return (inv_std * (g - g_mean - out * gy_mean),)

    return _make(out, (a,), grad_fn)


# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the two trailing axes; leading axes broadcast."""

    if a.ndim < 2 or b.ndim < 2:
        raise errors.DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise errors.DimensionError(
            f"matmul inner extents differ: {a.shape} and {b.shape} ({a.shape[-1]} != {b.shape[-2]})"
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise errors.DimensionError(f"matmul batch extents differ: {a.shape} and {b.shape}")

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad_a = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        grad_b = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return grad_a, grad_b

    return _make(a.data @ b.data, (a, b), grad_fn)


def conv2d(x: Tensor, weight: Tensor, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation of `x` (N×C×H×W) with `weight` (O×C×k×k)."""

    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise errors.DimensionError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    k = weight.shape[2]
    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    padded = np.pad(x.data, pad)
    cols = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out_h, out_w = out.shape[2], out.shape[3]

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad_w = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        dcols = np.tensordot(g, weight.data, axes=([1], [0]))  # N×Ho×Wo×C×k×k
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, :, i : i + out_h, j : j + out_w] += dcols[..., i, j].transpose(
                    0, 3, 1, 2
                )
        h, w = x.shape[2], x.shape[3]
        grad_x = grad_padded[:, :, padding : padding + h, padding : padding + w]
        return grad_x, grad_w

    return _make(np.ascontiguousarray(out), (x, weight), grad_fn)


# Shape manipulation


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise errors.DimensionError(f"Can not reshape {a.shape} into {tuple(shape)}")

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g.reshape(a.shape),)

    return _make(out, (a,), grad_fn)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    perm = [ax % a.ndim if -a.ndim <= ax < a.ndim else -1 for ax in axes]
    if sorted(perm) != list(range(a.ndim)):
        raise errors.AxisError(f"Invalid permutation {tuple(axes)} for {a.ndim} dimensions")
    inverse = np.argsort(perm)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g.transpose(inverse),)

    return _make(np.ascontiguousarray(a.data.transpose(perm)), (a,), grad_fn)


def _is_basic_index(index: Index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice)) or p is Ellipsis for p in parts)


def getitem(a: Tensor, index: Index) -> Tensor:
    out = a.data[index]
    basic = _is_basic_index(index)

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out), (a,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if len(tensors) == 0:
        raise errors.DimensionError("concat needs at least one tensor")
    (ax,) = _normalize_axes(axis, tensors[0].ndim)
    try:
        out = np.concatenate([t.data for t in tensors], axis=ax)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise errors.DimensionError(f"concat: incompatible shapes {shapes} along axis {ax}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def grad_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return np.split(g, bounds, axis=ax)

    return _make(out, tuple(tensors), grad_fn)
