"""Dense tensors recorded on an explicit tape for reverse-mode differentiation.

Operations only record when a :class:`Tape` is active (``with Tape() as tape:``)
and at least one input participates in gradients. Outside a tape every op is a
plain numpy computation, which is how inference and detached branches run.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_active: list["Tape"] = []


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """An n-dimensional real array with optional gradient participation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "_tape")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        arr = np.array(data, dtype=dtype, copy=True, order="C")
        if arr.dtype not in _DTYPES:
            if dtype is None and np.issubdtype(arr.dtype, np.integer):
                arr = arr.astype(np.float64)
            else:
                raise TypeError(f"unsupported dtype {arr.dtype}; use float32 or float64")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[_Node] = None
        self._tape: Optional[Tape] = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        t._node = None
        t._tape = None
        return t

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def sum(self) -> "Tensor":
        return reduce_sum(self)

    def mean(self) -> "Tensor":
        return reduce_mean(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self) -> "Tensor":
        return relu(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def abs(self) -> "Tensor":
        return absolute(self)

    def backward(self) -> None:
        if self._tape is None:
            raise RuntimeError("tensor was not produced on a tape")
        self._tape.backward(self)


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple, vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so the list is already a
    topological order and ``backward`` is a single reverse sweep.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: Sequence[Tensor], vjp: Callable) -> None:
        out.requires_grad = True
        out._node = _Node(out, tuple(inputs), vjp)
        out._tape = self
        self.nodes.append(out._node)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every participating leaf."""
        if loss.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise RuntimeError("loss is not on this tape")
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp._node is None:
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
                else:
                    key = id(inp)
                    pending[key] = gi if key not in pending else pending[key] + gi


def current_tape() -> Optional[Tape]:
    return _active[-1] if _active else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(out_data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor._wrap(out_data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, vjp)
    return out


def _check_pair(a: Tensor, b: Tensor) -> None:
    if a.dtype != b.dtype:
        raise TypeError(f"mixed dtypes {a.dtype} and {b.dtype}")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


# -- elementwise -------------------------------------------------------
def add(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        return _emit(a.data + a.dtype.type(b), (a,), lambda g: (g,))
    _check_pair(a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        return _emit(a.data - a.dtype.type(b), (a,), lambda g: (g,))
    _check_pair(a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        return scalar_mul(a, b)
    _check_pair(a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scalar_mul(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)
    return _emit(a.data * s, (a,), lambda g: (g * s,))


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _emit(np.where(pos, a.data, 0).astype(a.dtype), (a,), lambda g: (g * pos,))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(a.data > 0, 1.0, alpha).astype(a.dtype)
    return _emit(a.data * slope, (a,), lambda g: (g * slope,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1 - y * y),))


def absolute(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return _emit(np.abs(a.data), (a,), lambda g: (g * s,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(ad * ad, (a,), lambda g: (2 * g * ad,))


def complex_abs(a: Tensor, axis: int = -3) -> Tensor:
    """Modulus of a (real, imag) pair stored along ``axis`` (which must have length 2).

    The subgradient at the origin is taken as zero.
    """
    axis = axis % a.ndim
    if a.shape[axis] != 2:
        raise DimensionError(f"axis {axis} must hold (real, imag), has length {a.shape[axis]}")
    re = np.take(a.data, 0, axis=axis)
    im = np.take(a.data, 1, axis=axis)
    r = np.sqrt(re * re + im * im)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(r > 0, 1 / r, 0).astype(a.dtype)

    def vjp(g):
        return (np.stack([g * re * inv, g * im * inv], axis=axis),)

    return _emit(r, (a,), vjp)


# -- reductions --------------------------------------------------------
def reduce_sum(a: Tensor) -> Tensor:
    if a.size == 0:
        raise DimensionError("cannot reduce an empty tensor")
    shape = a.shape
    return _emit(np.asarray(a.data.sum(), dtype=a.dtype),
                 (a,), lambda g: (np.full(shape, g, dtype=g.dtype),))


def reduce_mean(a: Tensor) -> Tensor:
    if a.size == 0:
        raise DimensionError("cannot reduce an empty tensor")
    shape, n = a.shape, a.size
    return _emit(np.asarray(a.data.sum() / a.dtype.type(n), dtype=a.dtype),
                 (a,), lambda g: (np.full(shape, g / n, dtype=g.dtype),))


# -- structural --------------------------------------------------------
def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def linear_map(a: Tensor, forward: Callable[[np.ndarray], np.ndarray],
               adjoint: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    """Apply a fixed real-linear operator given as a (forward, adjoint) pair.

    ``adjoint`` must be the transpose of ``forward`` under the real inner
    product; the backward rule is simply the adjoint applied to the incoming
    gradient.
    """
    out = np.ascontiguousarray(forward(a.data))
    if out.dtype != a.dtype:
        out = out.astype(a.dtype)
    dtype = a.dtype
    return _emit(out, (a,), lambda g: (np.ascontiguousarray(adjoint(g)).astype(dtype, copy=False),))
