"""Geometric-decomposition coil compression along the readout axis (last axis)."""
from __future__ import annotations

import numpy as np

from .fourier import fft1c, ifft1c


def gcc_matrices(kspace: np.ndarray, n_out: int) -> np.ndarray:
    """Per-readout-position compression matrices [W, C_in, n_out], aligned along x."""
    nc, H, W = kspace.shape
    if not 1 <= n_out <= nc:
        raise ValueError(f"n_out must lie in [1, {nc}], got {n_out}")
    hybrid = ifft1c(kspace, axis=-1)  # [C, ky, x]
    mats = np.empty((W, nc, n_out), dtype=np.complex128)
    for x in range(W):
        u, _, _ = np.linalg.svd(hybrid[:, :, x], full_matrices=False)
        mats[x] = u[:, :n_out]
    for x in range(1, W):
        # orthogonal Procrustes: rotate within the subspace to best match the previous position
        u, _, vh = np.linalg.svd(mats[x].conj().T @ mats[x - 1])
        mats[x] = mats[x] @ (u @ vh)
    return mats


def gcc_compress(kspace: np.ndarray, n_out: int, matrices: np.ndarray | None = None) -> np.ndarray:
    """Compress [C_in, H, W] k-space to [n_out, H, W] virtual coils."""
    mats = gcc_matrices(kspace, n_out) if matrices is None else matrices
    hybrid = ifft1c(kspace, axis=-1)
    out = np.einsum("xco,cyx->oyx", mats.conj(), hybrid)
    return fft1c(out, axis=-1).astype(kspace.dtype if np.iscomplexobj(kspace) else np.complex128)


def gcc_expand(compressed: np.ndarray, matrices: np.ndarray) -> np.ndarray:
    """Map virtual coils back to the original coil space (least-squares reconstruction)."""
    hybrid = ifft1c(compressed, axis=-1)
    return fft1c(np.einsum("xco,oyx->cyx", matrices, hybrid), axis=-1)
