"""Coil sensitivity containers, projection and SENSE-style combination."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class SensitivityMaps:
    maps: np.ndarray  # complex [C, H, W]
    kind: str = "true_simulated"  # or "estimated"
    params: dict = field(default_factory=dict)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def rss(self) -> np.ndarray:
        return np.sqrt((np.abs(self.maps) ** 2).sum(axis=0))

    def support(self) -> np.ndarray:
        return self.rss() > 0

    @classmethod
    def ones(cls, H: int, W: int, n_coils: int = 1, kind: str = "true_simulated") -> "SensitivityMaps":
        return cls(np.ones((n_coils, H, W), dtype=np.complex128), kind=kind)


def _maps(sens) -> np.ndarray:
    return sens.maps if isinstance(sens, SensitivityMaps) else np.asarray(sens)


def coil_project(image: np.ndarray, sens) -> np.ndarray:
    """[H, W] (or [N, H, W]) image times each coil map -> [C, H, W] (or [N, C, H, W])."""
    c = _maps(sens)
    if image.shape[-2:] != c.shape[-2:]:
        raise ValueError(f"image {image.shape} and maps {c.shape} differ spatially")
    return image[..., None, :, :] * c


def coil_adjoint(multicoil: np.ndarray, sens) -> np.ndarray:
    """Unnormalized combination sum_c conj(C_c) * y_c; the adjoint of :func:`coil_project`."""
    c = _maps(sens)
    if multicoil.shape[-3:] != c.shape:
        raise ValueError(f"coil stack {multicoil.shape} does not match maps {c.shape}")
    return (np.conj(c) * multicoil).sum(axis=-3)


def coil_combine(multicoil: np.ndarray, sens) -> np.ndarray:
    """Per-pixel least-squares combination; zero where every map vanishes."""
    c = _maps(sens)
    num = coil_adjoint(multicoil, c)
    den = (np.abs(c) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1), 0).astype(num.dtype)


def rss_combine(multicoil: np.ndarray) -> np.ndarray:
    return np.sqrt((np.abs(multicoil) ** 2).sum(axis=-3))
