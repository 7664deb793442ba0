"""Image quality metrics on real (magnitude) images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 100.0


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float  # percent
    mse100: float


def _pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {test.shape}")
    return ref, test


def mse100(ref, test) -> float:
    ref, test = _pair(ref, test)
    return float(100.0 * np.mean((ref - test) ** 2))


def psnr(ref, test, cap: float = PSNR_CAP, peak: float | None = None) -> float:
    """PSNR in dB with peak = max(ref) unless given; identical images give ``cap``."""
    ref, test = _pair(ref, test)
    peak = float(ref.max()) if peak is None else float(peak)
    if not np.any(ref) or peak <= 0:
        raise ValueError("reference image is all zero")
    mse = np.mean((ref - test) ** 2)
    if mse == 0:
        return float(cap)
    return float(min(cap, 10.0 * np.log10(peak ** 2 / mse)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref, test, data_range: float | None = None, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all fully-contained windows, in percent.

    ``data_range`` defaults to max(ref); pass a fixed value for a symmetric metric.
    """
    ref, test = _pair(ref, test)
    if ref.ndim != 2 or min(ref.shape) < window:
        raise ValueError(f"image {ref.shape} smaller than {window}x{window} window")
    L = float(ref.max()) if data_range is None else float(data_range)
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    w = gaussian_window(window, sigma)
    filt = lambda a: convolve2d(a, w[::-1, ::-1], mode="valid")
    mu_x, mu_y = filt(ref), filt(test)
    sxx = filt(ref * ref) - mu_x ** 2
    syy = filt(test * test) - mu_y ** 2
    sxy = filt(ref * test) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    smap = np.where(den > 0, num / np.where(den > 0, den, 1), 1.0)
    return float(100.0 * smap.mean())


def evaluate_pair(ref, test, cap: float = PSNR_CAP) -> MetricReport:
    return MetricReport(psnr=psnr(ref, test, cap), ssim=ssim(ref, test), mse100=mse100(ref, test))
