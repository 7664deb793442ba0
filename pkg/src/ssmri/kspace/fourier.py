"""Centered, orthonormal 2D Fourier transforms over the last two axes."""
import numpy as np

_AXES = (-2, -1)


def fft2c(x: np.ndarray) -> np.ndarray:
    """Image -> k-space with DC at index (H//2, W//2) and 1/sqrt(HW) scaling."""
    x = np.asarray(x)
    if x.ndim < 2 or min(x.shape[-2:]) < 2:
        raise ValueError(f"need at least 2x2 spatial axes, got {x.shape}")
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x, axes=_AXES), norm="ortho"), axes=_AXES)


def ifft2c(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    k = np.asarray(k)
    if k.ndim < 2 or min(k.shape[-2:]) < 2:
        raise ValueError(f"need at least 2x2 spatial axes, got {k.shape}")
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=_AXES), norm="ortho"), axes=_AXES)


def fft1c(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft(np.fft.ifftshift(x, axes=axis), axis=axis, norm="ortho"),
                           axes=axis)


def ifft1c(k: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(k, axes=axis), axis=axis, norm="ortho"),
                           axes=axis)


def to_pairs(z: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Complex [..., H, W] -> real [..., 2, H, W] holding (real, imag)."""
    return np.stack([z.real, z.imag], axis=-3).astype(dtype)


def from_pairs(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_pairs`."""
    if x.shape[-3] != 2:
        raise ValueError(f"axis -3 must hold (real, imag), got shape {x.shape}")
    return x[..., 0, :, :] + 1j * x[..., 1, :, :]
