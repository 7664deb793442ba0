"""ESPIRiT sensitivity estimation from a fully-sampled k-space center."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .coils import SensitivityMaps
from .fourier import fft2c
from .masks import center_slices


class CalibrationError(ValueError):
    pass


def calibration_matrix(calib: np.ndarray, kernel: tuple[int, int]) -> np.ndarray:
    """Block-Hankel matrix: one row per kernel-sized patch, columns ordered (coil, ky, kx)."""
    kh, kw = kernel
    nc = calib.shape[0]
    win = sliding_window_view(calib, (kh, kw), axis=(1, 2))
    return win.transpose(1, 2, 0, 3, 4).reshape(-1, nc * kh * kw)


def estimate_sensitivities_espirit(kspace: np.ndarray, calib_size: tuple[int, int],
                                   kernel: tuple[int, int] = (6, 6), sv_threshold: float = 0.02,
                                   eig_threshold: float = 0.95) -> SensitivityMaps:
    """Estimate one set of maps from the ``calib_size`` center block of ``kspace`` [C, H, W].

    Maps are unit-norm across coils where the top eigenvalue of the per-pixel
    operator reaches ``eig_threshold`` and zero elsewhere; coil 0 is rotated
    to be real and non-negative at every pixel.
    """
    kspace = np.asarray(kspace)
    if kspace.ndim != 3:
        raise ValueError(f"expected [C, H, W] k-space, got {kspace.shape}")
    nc, H, W = kspace.shape
    kh, kw = kernel
    ch, cw = calib_size
    if ch < kh + 7 or cw < kw + 7 or ch > H or cw > W:
        raise CalibrationError(
            f"calibration region {calib_size} too small for kernel {kernel}: need >= {(kh + 7, kw + 7)}")
    rs, cs = center_slices(H, W, calib_size)
    calib = kspace[:, rs, cs].astype(np.complex128)

    A = calibration_matrix(calib, kernel)
    _, S, Vh = np.linalg.svd(A, full_matrices=False)
    if S.size == 0 or S[0] <= 0:
        raise CalibrationError("degenerate calibration matrix (all-zero calibration data)")
    n = int(np.sum(S >= sv_threshold * S[0]))
    V = Vh.conj().T[:, :n].reshape(nc, kh, kw, n)

    # zero-padded kernels placed at the center, flipped and conjugated, then taken to image space
    ker = np.zeros((n, nc, H, W), dtype=np.complex128)
    r0, c0 = H // 2 - kh // 2, W // 2 - kw // 2
    ker[:, :, r0:r0 + kh, c0:c0 + kw] = V.transpose(3, 0, 1, 2)
    ker = np.conj(ker[:, :, ::-1, ::-1])
    kimg = fft2c(ker) * np.sqrt(H * W) / np.sqrt(kh * kw)  # [n, C, H, W]

    g = kimg.transpose(2, 3, 1, 0)  # [H, W, C, n]
    gram = g @ np.conj(np.swapaxes(g, -1, -2))
    evals, evecs = np.linalg.eigh(gram)
    top_val = evals[..., -1]
    top_vec = evecs[..., :, -1]  # [H, W, C]

    maps = np.where((top_val >= eig_threshold)[..., None], top_vec, 0).transpose(2, 0, 1)
    ref = maps[0]
    mag = np.abs(ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        phase = np.where(mag > 0, np.conj(ref) / np.where(mag > 0, mag, 1), 1)
    maps = maps * phase
    return SensitivityMaps(maps, kind="estimated",
                           params={"kernel": tuple(kernel), "calib_size": tuple(calib_size),
                                   "sv_threshold": sv_threshold, "eig_threshold": eig_threshold,
                                   "n_kernels": n, "eigenvalues": top_val})
