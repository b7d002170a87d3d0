"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure propagating the output gradient back to them. The graph is rebuilt on
every forward pass; :func:`backward` walks it in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "DegenerateMaskError",
    "ContractError",
    "as_tensor",
    "backward",
    "matmul",
    "softmax_masked",
    "log_softmax",
    "concat",
    "where",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateMaskError(ValueError):
    """A softmax row has every position masked out."""


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that were added or stretched by broadcasting
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An immutable float64 array that can take part in a gradient graph."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None,
                 _copy: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if _copy and arr is data:
            arr = arr.copy()
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- graph construction ----------------------------------------------
    @staticmethod
    def _make(data, parents: Sequence["Tensor"], backward_fn):
        track = any(p.requires_grad for p in parents)
        if not track:
            return Tensor(data, _copy=False)
        return Tensor(data, requires_grad=True, _parents=tuple(parents),
                      _backward=backward_fn, _copy=False)

    def backward(self, grad=None):
        return backward(self, grad)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def _bw(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._make(a.data + b.data, (a, b), _bw)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def _bw(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), _bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def _bw(g):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * a.data / b.data ** 2, b.shape))

        return Tensor._make(a.data / b.data, (a, b), _bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self

        def _bw(g):
            return (g * exponent * a.data ** (exponent - 1),)

        return Tensor._make(a.data ** exponent, (a,), _bw)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def __getitem__(self, index):
        a = self

        basic = _is_basic_index(index)

        def _bw(g):
            out = np.zeros(a.shape)
            if basic:
                out[index] += g
            else:
                np.add.at(out, index, g)
            return (out,)

        return Tensor._make(a.data[index], (a,), _bw)

    # -- reductions and shape ops ----------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def _bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), _bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else np.prod(
            [self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._make(a.data.reshape(shape), (a,),
                            lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)
        return Tensor._make(self.data.transpose(axes), (self,),
                            lambda g: (g.transpose(inverse),))

    def swapaxes(self, a1: int, a2: int):
        axes = list(range(self.ndim))
        axes[a1], axes[a2] = axes[a2], axes[a1]
        return self.transpose(axes)

    def expand_dims(self, axis: int):
        a = self
        return Tensor._make(np.expand_dims(a.data, axis), (a,),
                            lambda g: (g.reshape(a.shape),))

    # -- elementwise nonlinearities ---------------------------------------
    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def log(self):
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: (g * 0.5 / out,))

    def relu(self):
        keep = self.data > 0
        return Tensor._make(np.where(keep, self.data, 0.0), (self,),
                            lambda g: (g * keep,))

    def leaky_relu(self, slope: float = 0.2):
        keep = self.data > 0
        scale = np.where(keep, 1.0, slope)
        return Tensor._make(self.data * scale, (self,), lambda g: (g * scale,))

    def sigmoid(self):
        out = _stable_sigmoid(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out * (1.0 - out),))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: (g * (1.0 - out ** 2),))


def _is_basic_index(index) -> bool:
    # slices, ints and boolean masks never address one cell twice
    items = index if isinstance(index, tuple) else (index,)
    for item in items:
        if isinstance(item, np.ndarray) and item.dtype != bool:
            return False
        if isinstance(item, list):
            return False
    return True


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs ≥2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def _bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._make(out, (a, b), _bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._make(out, tensors, _bw)


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select from ``a`` where ``cond`` holds, else from ``b``; ``cond`` is constant."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)

    def _bw(g):
        return (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                _unbroadcast(np.where(cond, 0.0, g), b.shape))

    return Tensor._make(np.where(cond, a.data, b.data), (a, b), _bw)


def softmax_masked(logits, keep: np.ndarray | None = None, axis: int = -1,
                   allow_empty_rows: bool = False) -> Tensor:
    """Softmax over ``axis`` where blocked positions get exactly zero weight.

    A position is blocked when ``keep`` is False there or when its logit is
    ``-inf``. Rows with nothing kept raise :class:`DegenerateMaskError`
    unless ``allow_empty_rows`` is set, in which case they come out all-zero
    (used for padded query steps).
    """
    logits = as_tensor(logits)
    x = logits.data
    kept = x != -np.inf
    if keep is not None:
        kept = kept & np.broadcast_to(np.asarray(keep, dtype=bool), x.shape)
    row_ok = kept.any(axis=axis, keepdims=True)
    if not allow_empty_rows and not row_ok.all():
        raise DegenerateMaskError("softmax row with every position masked")
    safe = np.where(kept, x, -np.inf)
    peak = np.max(np.where(kept, x, -np.inf), axis=axis, keepdims=True)
    peak = np.where(row_ok, peak, 0.0)
    ex = np.where(kept, np.exp(np.where(kept, safe - peak, 0.0)), 0.0)
    denom = ex.sum(axis=axis, keepdims=True)
    out = ex / np.where(row_ok, denom, 1.0)

    def _bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(kept, out * (g - inner), 0.0),)

    return Tensor._make(out, (logits,), _bw)


def log_softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    x = logits.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def _bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (logits,), _bw)


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output: Tensor, grad=None) -> list[Tensor]:
    """Accumulate d(output)/d(leaf) into ``.grad`` of every reachable leaf.

    ``output`` must be a scalar unless an explicit upstream ``grad`` is given.
    Returns the leaves that received a gradient.
    """
    if grad is None:
        if output.size != 1:
            raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
        grad = np.ones(output.shape)
    grads = {id(output): np.asarray(grad, dtype=np.float64)}
    leaves = []
    for node in reversed(_topological(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            leaves.append(node)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    return leaves


def parameters_zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None
