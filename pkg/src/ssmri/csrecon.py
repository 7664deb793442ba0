"""Single-coil compressed-sensing reconstruction with TV and wavelet-L1 penalties.

The objective is

    ||M F x - y||^2 + lambda_tv * TV(x) + lambda_wav * ||W x||_1

with both absolute values smoothed as sqrt(|z|^2 + mu), minimized by
nonlinear conjugate gradients (Fletcher-Reeves) with a backtracking Armijo
line search and an adaptive initial step.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .kspace import fft2c, ifft2c

_SQ3 = np.sqrt(3.0)
D4 = np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * np.sqrt(2.0))


@dataclass(frozen=True)
class CsParams:
    n_iters: int = 30
    lambda_tv: float = 1e-4
    lambda_wav: float = 1e-4
    levels: int = 3
    mu: float = 1e-15
    alpha: float = 0.01
    beta: float = 0.6
    t0: float = 1.0
    max_backtracks: int = 150
    grad_tol: float = 1e-30

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.lambda_tv < 0 or self.lambda_wav < 0:
            raise ValueError("regularization weights must be >= 0")


# the CasGAN stage-1 setting and the default standalone setting
PRESETS = {
    "casgan": CsParams(n_iters=4, lambda_tv=1e-4, lambda_wav=1e-4),
    "standalone": CsParams(n_iters=30, lambda_tv=1e-4, lambda_wav=1e-4),
}


# -- orthonormal periodic Daubechies-4 wavelet ----------------------------------------
def _analysis_matrix(n: int, h: np.ndarray = D4) -> np.ndarray:
    """Rows: n/2 lowpass then n/2 highpass periodic filters; orthogonal for even n >= len(h)."""
    g = np.array([(-1) ** k * h[len(h) - 1 - k] for k in range(len(h))])
    m = np.zeros((n, n))
    for i in range(n // 2):
        for k in range(len(h)):
            m[i, (2 * i + k) % n] += h[k]
            m[n // 2 + i, (2 * i + k) % n] += g[k]
    return m


_MATS: dict[int, np.ndarray] = {}


def _mat(n: int) -> np.ndarray:
    if n not in _MATS:
        _MATS[n] = _analysis_matrix(n)
    return _MATS[n]


def _check_levels(shape, levels):
    H, W = shape[-2:]
    f = 2 ** levels
    if H % f or W % f:
        raise ValueError(f"image {H}x{W} not divisible by 2^levels={f}")
    if min(H, W) // 2 ** (levels - 1) < len(D4):
        raise ValueError(f"image {H}x{W} too small for {levels} levels")


def wavelet_fwd(image: np.ndarray, levels: int = 3) -> np.ndarray:
    """Multilevel 2D transform; coefficients in the usual nested (coarse top-left) layout."""
    _check_levels(image.shape, levels)
    out = np.array(image, dtype=np.result_type(image, np.float64), copy=True)
    H, W = out.shape[-2:]
    for _ in range(levels):
        mh, mw = _mat(H), _mat(W)
        out[..., :H, :W] = mh @ out[..., :H, :W] @ mw.T
        H, W = H // 2, W // 2
    return out


def wavelet_inv(coeffs: np.ndarray, levels: int = 3) -> np.ndarray:
    _check_levels(coeffs.shape, levels)
    out = np.array(coeffs, dtype=np.result_type(coeffs, np.float64), copy=True)
    H0, W0 = out.shape[-2:]
    sizes = [(H0 // 2 ** i, W0 // 2 ** i) for i in range(levels)]
    for H, W in reversed(sizes):
        mh, mw = _mat(H), _mat(W)
        out[..., :H, :W] = mh.T @ out[..., :H, :W] @ mw
    return out


def detail_mask(shape: tuple[int, int], levels: int = 3) -> np.ndarray:
    m = np.ones(shape, dtype=bool)
    m[: shape[0] // 2 ** levels, : shape[1] // 2 ** levels] = False
    return m


# -- finite differences (Neumann: the last difference along each axis is zero) -----------
def grad2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dv = np.zeros_like(x)
    dh = np.zeros_like(x)
    dv[:-1] = x[1:] - x[:-1]
    dh[:, :-1] = x[:, 1:] - x[:, :-1]
    return dv, dh


def grad2d_adjoint(dv: np.ndarray, dh: np.ndarray) -> np.ndarray:
    out = np.zeros_like(dv)
    out[:-1] -= dv[:-1]
    out[1:] += dv[:-1]
    out[:, :-1] -= dh[:, :-1]
    out[:, 1:] += dh[:, :-1]
    return out


def total_variation(x: np.ndarray, mu: float = 0.0) -> float:
    dv, dh = grad2d(x)
    return float(np.sum(np.sqrt(np.abs(dv) ** 2 + np.abs(dh) ** 2 + mu)))


# -- objective --------------------------------------------------------------------------------
class SparseMRIObjective:
    def __init__(self, y: np.ndarray, mask: np.ndarray, params: CsParams):
        self.y = np.asarray(y, dtype=np.complex128)
        self.mask = np.asarray(mask, dtype=bool)
        self.p = params

    def terms(self, x: np.ndarray) -> dict[str, float]:
        p = self.p
        r = self.mask * fft2c(x) - self.y
        w = wavelet_fwd(x, p.levels)
        return {
            "data": float(np.sum(np.abs(r) ** 2)),
            "tv": p.lambda_tv * total_variation(x, p.mu),
            "wavelet": p.lambda_wav * float(np.sum(np.sqrt(np.abs(w) ** 2 + p.mu))),
        }

    def __call__(self, x: np.ndarray) -> float:
        return sum(self.terms(x).values())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. (real, imag) packed as a complex array."""
        p = self.p
        r = self.mask * fft2c(x) - self.y
        g = 2 * ifft2c(self.mask * r)
        if p.lambda_tv:
            dv, dh = grad2d(x)
            s = np.sqrt(np.abs(dv) ** 2 + np.abs(dh) ** 2 + p.mu)
            g = g + p.lambda_tv * grad2d_adjoint(dv / s, dh / s)
        if p.lambda_wav:
            w = wavelet_fwd(x, p.levels)
            g = g + p.lambda_wav * wavelet_inv(w / np.sqrt(np.abs(w) ** 2 + p.mu), p.levels)
        return g


@dataclass
class CsResult:
    image: np.ndarray
    objective: list[float]
    data_residual: float
    converged: bool
    line_search_failed: bool = False
    params: CsParams = field(default_factory=CsParams)


def _real_dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def sparsemri_reconstruct(kspace: np.ndarray, mask, params: CsParams | str = "standalone") -> CsResult:
    """Reconstruct one complex image from masked single-coil k-space [H, W]."""
    if isinstance(params, str):
        params = PRESETS[params]
    m = mask.mask if hasattr(mask, "mask") else np.asarray(mask, dtype=bool)
    y = np.asarray(kspace)
    if y.ndim == 3 and y.shape[0] == 1:
        y = y[0]
    if y.shape != m.shape:
        raise ValueError(f"k-space {y.shape} does not match mask {m.shape}")
    y = np.where(m, y, 0).astype(np.complex128)
    f = SparseMRIObjective(y, m, params)

    x = ifft2c(y)
    fx = f(x)
    history = [fx]
    g = f.gradient(x)
    dx = -g
    t0 = params.t0
    failed = False
    converged = False
    for _ in range(params.n_iters):
        slope = _real_dot(g, dx)
        if slope >= 0:  # not a descent direction: restart
            dx = -g
            slope = -_real_dot(g, g)
        if np.sqrt(_real_dot(dx, dx)) < params.grad_tol or slope == 0:
            converged = True
            break
        t = t0
        f1 = f(x + t * dx)
        n_back = 0
        while f1 > fx + params.alpha * t * slope and n_back < params.max_backtracks:
            n_back += 1
            t *= params.beta
            f1 = f(x + t * dx)
        if f1 > fx:
            failed = True
            warnings.warn("line search failed; returning best iterate", RuntimeWarning)
            break
        if n_back > 2:
            t0 *= params.beta
        elif n_back < 1:
            t0 /= params.beta
        x = x + t * dx
        fx = f1
        history.append(fx)
        g1 = f.gradient(x)
        bk = _real_dot(g1, g1) / (_real_dot(g, g) + np.finfo(float).eps)
        g = g1
        dx = -g + bk * dx
    resid = float(np.linalg.norm(m * fft2c(x) - y))
    return CsResult(image=x, objective=history, data_residual=resid, converged=converged,
                    line_search_failed=failed, params=params)


def zero_filled(kspace: np.ndarray) -> np.ndarray:
    return ifft2c(kspace)
