"""ADAM with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class TrainingError(RuntimeError):
    """Raised when an update would propagate non-finite values."""

    def __init__(self, message: str, param: str | None = None):
        super().__init__(message)
        self.param = param


@dataclass
class AdamState:
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None],
              state: AdamState, lr: float) -> AdamState:
    """One in-place ADAM update of ``params``; missing gradients count as zero.

    Every parameter's moment buffers advance even when its gradient is absent,
    and ``state.t`` increments exactly once.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}", param=name)
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        dt = p.data.dtype
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = dt.type(b1) * m + dt.type(1 - b1) * g
        v = dt.type(b2) * v + dt.type(1 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        mhat = m / dt.type(c1)
        vhat = v / dt.type(c2)
        p.data = p.data - dt.type(lr) * mhat / (np.sqrt(vhat) + dt.type(state.eps))
    return state


class Adam:
    """Thin stateful wrapper pairing a parameter dict with an :class:`AdamState`."""

    def __init__(self, params: dict[str, Tensor], betas=(0.5, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state, lr)
