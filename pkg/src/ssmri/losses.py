"""Selective (acquired-sample-only) multi-coil losses and their nonselective forms.

Multi-coil images travel through the tape as real tensors of shape
[C, 2, H, W]: coils on the batch axis, (real, imag) on the channel axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autograd import (
    DimensionError,
    Tensor,
    absolute,
    complex_abs,
    linear_map,
    reduce_mean,
    scalar_mul,
    square,
    tanh,
)
from .kspace import fft2c, from_pairs, ifft2c, to_pairs

COMPLEX_L1 = ("modulus", "split")


@dataclass(frozen=True)
class LossWeights:
    lambda_i: float = 100.0
    lambda_k: float = 3000.0
    lambda_a: float = 1.0
    beta: float = 5000.0

    def __post_init__(self):
        if min(self.lambda_i, self.lambda_k, self.lambda_a) < 0:
            raise ValueError("loss weights must be >= 0")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class LossReport:
    L_i: float
    L_k: float
    L_a_gen: float
    L_a_disc: float
    L_total: float

    def row(self) -> tuple[float, float, float]:
        return (self.L_i, self.L_k, self.L_a_gen)


# -- differentiable forward operators ------------------------------------------------
def _pairs_like(z: np.ndarray, dtype) -> np.ndarray:
    return to_pairs(z, dtype=dtype)


def coil_project_op(image: Tensor, maps: np.ndarray) -> Tensor:
    """[1, 2, H, W] or [2, H, W] coil-combined image -> [C, 2, H, W] coil images."""
    maps = np.asarray(maps)
    if image.shape[-3:] != (2,) + maps.shape[-2:]:
        raise DimensionError(f"image {image.shape} does not match maps {maps.shape}")
    in_shape = image.shape
    dt = image.dtype

    def fwd(x):
        return _pairs_like(from_pairs(x.reshape(2, *maps.shape[-2:]))[None] * maps, dt)

    def adj(g):
        return _pairs_like(np.sum(np.conj(maps) * from_pairs(g), axis=0), dt).reshape(in_shape)

    return linear_map(image, fwd, adj)


def mask_op(x: Tensor, mask: np.ndarray | None) -> Tensor:
    """Image-domain projection ifft2c(M * fft2c(x)); the identity when nothing is masked."""
    if mask is None or np.all(mask):
        return x
    m = np.asarray(mask, dtype=bool)
    dt = x.dtype

    def proj(a):
        return _pairs_like(ifft2c(m * fft2c(from_pairs(a))), dt)

    return linear_map(x, proj, proj)


def kspace_op(x: Tensor) -> Tensor:
    dt = x.dtype
    return linear_map(x, lambda a: _pairs_like(fft2c(from_pairs(a)), dt),
                      lambda g: _pairs_like(ifft2c(from_pairs(g)), dt))


def forward_model(image: Tensor, maps: np.ndarray, mask: np.ndarray | None) -> Tensor:
    """Synthesized coil-combined image -> masked multi-coil image Ŷ_Ω."""
    return mask_op(coil_project_op(image, maps), mask)


# -- loss terms -------------------------------------------------------------------------
def _l1(d: Tensor, complex_l1: str) -> Tensor:
    if complex_l1 == "modulus":
        return reduce_mean(complex_abs(d, axis=-3))
    if complex_l1 == "split":
        # |re| + |im| per entry, averaged over complex entries
        return scalar_mul(reduce_mean(absolute(d)), 2.0)
    raise ValueError(f"complex_l1 must be one of {COMPLEX_L1}, got {complex_l1!r}")


def selective_image_loss(pred: Tensor, target: Tensor, complex_l1: str = "modulus") -> Tensor:
    """Mean complex L1 between masked multi-coil images."""
    return _l1(pred - target, complex_l1)


def selective_kspace_loss(pred: Tensor, target: Tensor, beta: float = 5000.0,
                          complex_l1: str = "modulus") -> Tensor:
    """Mean complex L1 between tanh-compressed k-space, tanh taken per component."""
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    inv = 1.0 / beta
    kp = tanh(scalar_mul(kspace_op(pred), inv))
    kt = tanh(scalar_mul(kspace_op(target), inv))
    return _l1(kp - kt, complex_l1)


def lsgan_generator_loss(d_fake: Tensor) -> Tensor:
    return reduce_mean(square(d_fake - 1.0))


def lsgan_discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    return reduce_mean(square(d_real - 1.0)) + reduce_mean(square(d_fake))


def adversarial_losses(D: Callable[[Tensor], Tensor], real: Tensor, fake: Tensor) -> tuple[Tensor, Tensor]:
    """(gen_loss, disc_loss); coils go through D as a batch, the fake is detached for D."""
    gen = lsgan_generator_loss(D(fake))
    disc = lsgan_discriminator_loss(D(real), D(fake.detach()))
    return gen, disc


def total_generator_loss(weights: LossWeights, L_i: Tensor, L_k: Tensor, gen_adv: Tensor | None) -> Tensor:
    total = scalar_mul(L_i, weights.lambda_i) + scalar_mul(L_k, weights.lambda_k)
    if gen_adv is not None:
        total = total + scalar_mul(gen_adv, weights.lambda_a)
    return total


def nonselective_losses(pred: Tensor, target: Tensor, D: Callable[[Tensor], Tensor] | None = None,
                        beta: float = 5000.0, complex_l1: str = "modulus"):
    """Fully-sampled variants: the selective formulas with an all-ones mask."""
    li = selective_image_loss(mask_op(pred, None), target, complex_l1)
    lk = selective_kspace_loss(mask_op(pred, None), target, beta, complex_l1)
    adv = adversarial_losses(D, target, pred) if D is not None else None
    return li, lk, adv
