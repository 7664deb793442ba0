"""Central finite-difference checks for taped functions."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numeric_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], which: int,
                 indices: Sequence[tuple], eps: float = 1e-6) -> np.ndarray:
    out = np.empty(len(indices))
    base = [np.array(a, dtype=np.float64) for a in arrays]
    for k, idx in enumerate(indices):
        plus = [a.copy() for a in base]
        minus = [a.copy() for a in base]
        plus[which][idx] += eps
        minus[which][idx] -= eps
        fp = fn(*[Tensor(a) for a in plus]).item()
        fm = fn(*[Tensor(a) for a in minus]).item()
        out[k] = (fp - fm) / (2 * eps)
    return out


def analytic_grads(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = fn(*leaves)
    tape.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in leaves]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], eps: float = 1e-6,
              max_entries: int | None = 60, rng: np.random.Generator | None = None) -> float:
    """Worst relative error between taped and central-difference gradients.

    ``fn`` maps float64 Tensors to a scalar Tensor. Each input is checked on up
    to ``max_entries`` randomly chosen entries (all of them when None).
    """
    rng = rng or np.random.default_rng(0)
    grads = analytic_grads(fn, arrays)
    worst = 0.0
    for i, a in enumerate(arrays):
        a = np.asarray(a)
        flat = np.arange(a.size)
        if max_entries is not None and a.size > max_entries:
            flat = rng.choice(a.size, max_entries, replace=False)
        idx = [np.unravel_index(f, a.shape) for f in flat]
        num = numeric_grad(fn, arrays, i, idx, eps)
        ana = np.array([grads[i][j] for j in idx])
        worst = max(worst, relative_error(ana, num))
    return worst
