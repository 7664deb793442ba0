"""Convolution, padding and normalization layers for NCHW tensors."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, Tensor, _emit


def _out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _check_conv(x: Tensor, w: Tensor, b, stride: int, padding: int) -> None:
    if x.ndim != 4:
        raise DimensionError(f"input must be N,C,H,W; got rank {x.ndim}")
    if w.ndim != 4:
        raise DimensionError(f"weight must be Cout,Cin,kH,kW; got rank {w.ndim}")
    if x.dtype != w.dtype or (b is not None and b.dtype != x.dtype):
        raise TypeError("conv operands must share a dtype")
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride={stride} / padding={padding}")


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1: stride, : (wo - 1) * stride + 1: stride]
    n, c = xp.shape[:2]
    # rows: (n, i, j); columns: (c, ki, kj) -- matches weight.reshape(Cout, -1)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    n, c, hp, wp = shape
    cols = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i: i + stride * (ho - 1) + 1: stride,
                j: j + stride * (wo - 1) + 1: stride] += cols[:, :, i, j]
    return out


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _unpad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return x[:, :, padding:-padding, padding:-padding]


def _conv_fwd(xd, wd, stride, padding):
    n, c, h, w = xd.shape
    cout, cin, kh, kw = wd.shape
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    cols = _im2col(_pad(xd, padding), kh, kw, stride, ho, wo)
    out = cols @ wd.reshape(cout, -1).T
    return out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2), cols


def _conv_input_grad(g, wd, in_shape, stride, padding):
    n, c, h, w = in_shape
    cout, cin, kh, kw = wd.shape
    ho, wo = g.shape[2:]
    gm = g.transpose(0, 2, 3, 1).reshape(-1, cout)
    gcols = gm @ wd.reshape(cout, -1)
    hp, wp = h + 2 * padding, w + 2 * padding
    return _unpad(_col2im(gcols, (n, c, hp, wp), kh, kw, stride, ho, wo), padding)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` [N,Cin,H,W] with ``weight`` [Cout,Cin,kH,kW].

    Output size is ``floor((H + 2*padding - kH)/stride) + 1``; trailing rows
    that do not fit a full window are ignored and get zero gradient.
    """
    _check_conv(x, weight, bias, stride, padding)
    cout, cin, kh, kw = weight.shape
    if x.shape[1] != cin:
        raise DimensionError(f"channel axis: input has {x.shape[1]}, weight expects {cin}")
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise DimensionError(
            f"spatial axes: input {x.shape[2:]} (+pad {padding}) smaller than kernel {(kh, kw)}")
    xd, wd = x.data, weight.data
    out, cols = _conv_fwd(xd, wd, stride, padding)
    if bias is not None:
        if bias.shape != (cout,):
            raise DimensionError(f"bias axis: expected ({cout},), got {bias.shape}")
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)
    in_shape = xd.shape

    def vjp(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = _conv_input_grad(g, wd, in_shape, stride, padding) if x.requires_grad else None
        gw = (gm.T @ cols).reshape(wd.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit(out, inputs, vjp)


def conv_transpose2d(y: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0, output_padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d`'s linear part (plus an optional bias).

    ``weight`` has shape [C_y, Cout, kH, kW], i.e. the same tensor a conv2d
    mapping Cout -> C_y channels would use. Output spatial size is
    ``(H - 1)*stride - 2*padding + kH + output_padding``.
    """
    _check_conv(y, weight, bias, stride, padding)
    cy, cout, kh, kw = weight.shape
    if y.shape[1] != cy:
        raise DimensionError(f"channel axis: input has {y.shape[1]}, weight expects {cy}")
    if not 0 <= output_padding < stride:
        raise ValueError("output_padding must lie in [0, stride)")
    n, _, h, w = y.shape
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    if ho < 1 or wo < 1:
        raise DimensionError(f"spatial axes: transposed output {(ho, wo)} is empty")
    yd, wd = y.data, weight.data
    out = _conv_input_grad(yd, wd, (n, cout, ho, wo), stride, padding)
    if bias is not None:
        if bias.shape != (cout,):
            raise DimensionError(f"bias axis: expected ({cout},), got {bias.shape}")
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)

    def vjp(g):
        gy = gw = gb = None
        if y.requires_grad or weight.requires_grad:
            conv_out, cols = _conv_fwd(g, wd, stride, padding)
            if y.requires_grad:
                gy = conv_out
            if weight.requires_grad:
                ym = yd.transpose(0, 2, 3, 1).reshape(-1, cy)
                gw = (ym.T @ cols).reshape(wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gy, gw, gb

    inputs = (y, weight) if bias is None else (y, weight, bias)
    return _emit(out, inputs, vjp)


def _reflect_matrix(n: int, p: int, dtype) -> np.ndarray:
    idx = np.pad(np.arange(n), p, mode="reflect")
    m = np.zeros((n + 2 * p, n), dtype=dtype)
    m[np.arange(n + 2 * p), idx] = 1
    return m


def pad2d(x: Tensor, padding: int, mode: str = "zero") -> Tensor:
    """Pad the two spatial axes by ``padding`` with zeros or by reflection."""
    if padding == 0:
        return x
    if mode == "zero":
        return _emit(_pad(x.data, padding), (x,), lambda g: (_unpad(g, padding).copy(),))
    if mode != "reflect":
        raise ValueError(f"unknown padding mode {mode!r}")
    h, w = x.shape[2:]
    if padding >= min(h, w):
        raise DimensionError(f"reflect padding {padding} needs spatial axes > {padding}")
    ph = _reflect_matrix(h, padding, x.dtype)
    pw = _reflect_matrix(w, padding, x.dtype)
    out = np.ascontiguousarray(np.pad(x.data, ((0, 0), (0, 0), (padding,) * 2, (padding,) * 2),
                                      mode="reflect"))
    return _emit(out, (x,), lambda g: (np.einsum("ph,ncpq,qw->nchw", ph, g, pw, optimize=True),))


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (n, c) slice to zero mean and unit variance (no affine)."""
    if x.ndim != 4:
        raise DimensionError(f"input must be N,C,H,W; got rank {x.ndim}")
    if x.shape[2] * x.shape[3] < 2:
        raise DimensionError("instance_norm needs at least 2 pixels per slice")
    xd = x.data
    mu = xd.mean(axis=(2, 3), keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    std = np.sqrt(var + x.dtype.type(eps))
    with np.errstate(divide="ignore"):
        inv = np.where(std > 0, 1 / std, 0).astype(x.dtype)
    xhat = xc * inv

    def vjp(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gxm = (g * xhat).mean(axis=(2, 3), keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    return _emit(xhat, (x,), vjp)
