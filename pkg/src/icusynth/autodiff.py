"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray and records the op that produced
it; calling ``backward()`` on a scalar output walks the graph in reverse
topological order and accumulates gradients into every ancestor's ``grad``.

The op set is exactly what the recurrent architectures in this package
need (matmul, broadcasting arithmetic, tanh/sigmoid/exp/log, reductions,
concatenation, slicing, clipping). Gradient formulas are verified against
the central finite-difference oracle in the test suite, not trusted.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import InputError

__all__ = ["Tensor", "concat", "sigmoid", "tanh", "exp", "log", "sqrt", "clip"]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's original shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accum(t: "Tensor", g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        np.add(t.grad, g, out=t.grad)


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward = _backward

    # -- structure ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.data.shape})"

    def backward(self) -> None:
        """Accumulate d(self)/d(ancestor) for every graph ancestor.

        Only scalar outputs may seed a backward pass.
        """
        if self.data.size != 1:
            raise InputError(f"backward() requires a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data + other.data, (self, other))

            def _bw():
                _accum(self, _unbroadcast(out.grad, self.data.shape))
                _accum(other, _unbroadcast(out.grad, other.data.shape))

        else:
            out = Tensor(self.data + other, (self,))

            def _bw():
                _accum(self, _unbroadcast(out.grad, self.data.shape))

        out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))

        def _bw():
            _accum(self, -out.grad)

        out._backward = _bw
        return out

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data - other.data, (self, other))

            def _bw():
                _accum(self, _unbroadcast(out.grad, self.data.shape))
                _accum(other, _unbroadcast(-out.grad, other.data.shape))

        else:
            out = Tensor(self.data - other, (self,))

            def _bw():
                _accum(self, _unbroadcast(out.grad, self.data.shape))

        out._backward = _bw
        return out

    def __rsub__(self, other):
        out = Tensor(other - self.data, (self,))

        def _bw():
            _accum(self, _unbroadcast(-out.grad, self.data.shape))

        out._backward = _bw
        return out

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data * other.data, (self, other))

            def _bw():
                _accum(self, _unbroadcast(out.grad * other.data, self.data.shape))
                _accum(other, _unbroadcast(out.grad * self.data, other.data.shape))

        else:
            out = Tensor(self.data * other, (self,))

            def _bw():
                _accum(self, _unbroadcast(out.grad * other, self.data.shape))

        out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data / other.data, (self, other))

            def _bw():
                _accum(self, _unbroadcast(out.grad / other.data, self.data.shape))
                _accum(
                    other,
                    _unbroadcast(-out.grad * self.data / other.data**2, other.data.shape),
                )

        else:
            out = Tensor(self.data / other, (self,))

            def _bw():
                _accum(self, _unbroadcast(out.grad / other, self.data.shape))

        out._backward = _bw
        return out

    def __rtruediv__(self, other):
        out = Tensor(other / self.data, (self,))

        def _bw():
            _accum(self, _unbroadcast(-out.grad * other / self.data**2, self.data.shape))

        out._backward = _bw
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise InputError("only scalar exponents are supported")
        out = Tensor(self.data**exponent, (self,))

        def _bw():
            _accum(self, out.grad * exponent * self.data ** (exponent - 1))

        out._backward = _bw
        return out

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        out = Tensor(self.data @ other.data, (self, other))

        def _bw():
            _accum(self, out.grad @ other.data.T)
            _accum(other, self.data.T @ out.grad)

        out._backward = _bw
        return out

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), (self,))

        def _bw():
            _accum(self, out.grad.reshape(self.data.shape))

        out._backward = _bw
        return out

    @property
    def T(self):
        out = Tensor(self.data.T, (self,))

        def _bw():
            _accum(self, out.grad.T)

        out._backward = _bw
        return out

    def __getitem__(self, key):
        """Basic slicing only (slices / ints); keys must not repeat indices."""
        out = Tensor(self.data[key], (self,))

        def _bw():
            g = np.zeros_like(self.data)
            g[key] = out.grad
            _accum(self, g)

        out._backward = _bw
        return out

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def _bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(self, np.broadcast_to(g, self.data.shape))

        out._backward = _bw
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in parts], axis=axis), parts)
    sizes = [t.data.shape[axis] for t in parts]
    offsets = np.cumsum([0] + sizes)

    def _bw():
        for t, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            key = [slice(None)] * out.grad.ndim
            key[axis] = slice(start, stop)
            _accum(t, out.grad[tuple(key)])

    out._backward = _bw
    return out


def exp(t: Tensor) -> Tensor:
    out = Tensor(np.exp(t.data), (t,))

    def _bw():
        _accum(t, out.grad * out.data)

    out._backward = _bw
    return out


def log(t: Tensor) -> Tensor:
    out = Tensor(np.log(t.data), (t,))

    def _bw():
        _accum(t, out.grad / t.data)

    out._backward = _bw
    return out


def sqrt(t: Tensor) -> Tensor:
    out = Tensor(np.sqrt(t.data), (t,))

    def _bw():
        _accum(t, out.grad * 0.5 / out.data)

    out._backward = _bw
    return out


def tanh(t: Tensor) -> Tensor:
    out = Tensor(np.tanh(t.data), (t,))

    def _bw():
        _accum(t, out.grad * (1.0 - out.data**2))

    out._backward = _bw
    return out


def sigmoid(t: Tensor) -> Tensor:
    out = Tensor(expit(t.data), (t,))

    def _bw():
        _accum(t, out.grad * out.data * (1.0 - out.data))

    out._backward = _bw
    return out


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior only."""
    out = Tensor(np.clip(t.data, lo, hi), (t,))
    inside = (t.data >= lo) & (t.data <= hi)

    def _bw():
        _accum(t, out.grad * inside)

    out._backward = _bw
    return out
