"""Uniform random 2D k-space sampling masks with a fully-sampled center block."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SamplingMask:
    mask: np.ndarray  # bool [H, W]
    R: int
    center_size: tuple[int, int]
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def n_samples(self) -> int:
        return int(self.mask.sum())

    def regenerate(self) -> "SamplingMask":
        return generate_mask(*self.mask.shape, self.R, self.center_size, self.seed)


def center_slices(H: int, W: int, center_size: tuple[int, int]) -> tuple[slice, slice]:
    ch, cw = center_size
    r0, c0 = H // 2 - ch // 2, W // 2 - cw // 2
    return slice(r0, r0 + ch), slice(c0, c0 + cw)


def mask_rng(seed: int) -> np.random.Generator:
    # Philox is counter-based: streams for different keys are independent of call order
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def generate_mask(H: int, W: int, R: int, center_size: tuple[int, int] = (10, 10),
                  seed: int = 0) -> SamplingMask:
    """Select exactly ``floor(H*W/R)`` k-space points, the center block always included."""
    if R < 1:
        raise ValueError(f"acceleration R must be >= 1, got {R}")
    ch, cw = center_size
    if ch > H or cw > W or ch < 0 or cw < 0:
        raise ValueError(f"center {center_size} does not fit in {H}x{W}")
    budget = (H * W) // R
    if ch * cw > budget:
        raise ValueError(
            f"infeasible mask: center block {ch}x{cw}={ch * cw} exceeds budget floor({H}*{W}/{R})={budget}")
    mask = np.zeros((H, W), dtype=bool)
    rs, cs = center_slices(H, W, center_size)
    mask[rs, cs] = True
    free = np.flatnonzero(~mask.ravel())
    extra = budget - ch * cw
    if extra:
        pick = mask_rng(seed).choice(free.size, size=extra, replace=False)
        mask.ravel()[free[pick]] = True
    return SamplingMask(mask=mask, R=int(R), center_size=(int(ch), int(cw)), seed=int(seed))


def full_mask(H: int, W: int, center_size: tuple[int, int] = (10, 10), seed: int = 0) -> SamplingMask:
    return generate_mask(H, W, 1, center_size, seed)


def apply_mask(k: np.ndarray, mask) -> np.ndarray:
    """Zero every k-space sample outside the mask, on every coil."""
    m = mask.mask if isinstance(mask, SamplingMask) else np.asarray(mask, dtype=bool)
    if k.shape[-2:] != m.shape:
        raise ValueError(f"mask shape {m.shape} does not match k-space {k.shape[-2:]}")
    return np.where(m, k, 0).astype(k.dtype, copy=False)
