"""ResNet generator, patch discriminator and the SSCK1 checkpoint format."""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autograd import (
    DimensionError,
    Tensor,
    conv2d,
    conv_transpose2d,
    instance_norm,
    leaky_relu,
    pad2d,
    relu,
    tanh,
)

CKPT_MAGIC = b"SSCK1\x00"


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 2
    out_channels: int = 2
    base_width: int = 16
    n_resblocks: int = 3
    n_down: int = 2
    padding_mode: str = "zero"
    init_std: float = 0.02

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise ValueError("n_resblocks must be >= 1")
        if self.base_width < 4:
            raise ValueError("base_width must be >= 4")
        if self.n_down < 0:
            raise ValueError("n_down must be >= 0")
        if self.padding_mode not in ("zero", "reflect"):
            raise ValueError(f"unknown padding_mode {self.padding_mode!r}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 2
    n_layers: int = 5
    base_width: int = 16
    kernel: int = 4
    norm: str = "instance"
    padding_mode: str = "zero"
    init_std: float = 0.02

    def __post_init__(self):
        if self.padding_mode not in ("zero", "reflect"):
            raise ValueError(f"unknown padding_mode {self.padding_mode!r}")
        if self.n_layers < 2:
            raise ValueError("n_layers must be >= 2")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")
        if self.norm not in ("instance", "none"):
            raise ValueError(f"unknown norm {self.norm!r}")


GENERATOR_PRESETS = {
    "desk": GeneratorConfig(base_width=16, n_resblocks=3),
    "full": GeneratorConfig(base_width=64, n_resblocks=9),
}
DISCRIMINATOR_PRESETS = {
    "desk": DiscriminatorConfig(base_width=16),
    "full": DiscriminatorConfig(base_width=64),
}


class Module:
    """Ordered collection of named parameter tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def _add(self, name: str, shape: tuple, rng: np.random.Generator, std: float,
             zero: bool = False) -> Tensor:
        data = np.zeros(shape, np.float32) if zero else rng.normal(0.0, std, shape).astype(np.float32)
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._params)

    def n_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in self._params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=np.float32)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None


class Generator(Module):
    """conv7 -> n_down stride-2 convs -> residual blocks -> n_down transpose convs -> conv7 -> tanh."""

    def __init__(self, cfg: GeneratorConfig = GeneratorConfig(), seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        w, s = cfg.base_width, cfg.init_std
        self._add("enc0.w", (w, cfg.in_channels, 7, 7), rng, s)
        ch = w
        for i in range(cfg.n_down):
            self._add(f"down{i}.w", (ch * 2, ch, 3, 3), rng, s)
            ch *= 2
        for i in range(cfg.n_resblocks):
            self._add(f"res{i}.a.w", (ch, ch, 3, 3), rng, s)
            self._add(f"res{i}.b.w", (ch, ch, 3, 3), rng, s)
        for i in range(cfg.n_down):
            self._add(f"up{i}.w", (ch, ch // 2, 3, 3), rng, s)  # transpose layout: Cin, Cout
            ch //= 2
        self._add("out.w", (cfg.out_channels, ch, 7, 7), rng, s)
        self._add("out.b", (cfg.out_channels,), rng, s, zero=True)

    def _conv(self, x, name, k, stride=1, bias=None):
        p = k // 2
        if self.cfg.padding_mode == "zero":
            return conv2d(x, self._params[name], bias, stride=stride, padding=p)
        return conv2d(pad2d(x, p, "reflect"), self._params[name], bias, stride=stride)

    def __call__(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise DimensionError(f"generator expects N,{cfg.in_channels},H,W; got {x.shape}")
        f = 2 ** cfg.n_down
        if x.shape[2] % f or x.shape[3] % f:
            raise DimensionError(f"spatial size {x.shape[2:]} not divisible by {f}")
        P = self._params
        h = relu(instance_norm(self._conv(x, "enc0.w", 7)))
        for i in range(cfg.n_down):
            h = relu(instance_norm(self._conv(h, f"down{i}.w", 3, stride=2)))
        for i in range(cfg.n_resblocks):
            r = relu(instance_norm(self._conv(h, f"res{i}.a.w", 3)))
            r = instance_norm(self._conv(r, f"res{i}.b.w", 3))
            h = h + r
        for i in range(cfg.n_down):
            h = conv_transpose2d(h, P[f"up{i}.w"], stride=2, padding=1, output_padding=1)
            h = relu(instance_norm(h))
        return tanh(self._conv(h, "out.w", 7, bias=P["out.b"]))


class Discriminator(Module):
    """Patch discriminator; strided layers first, then two stride-1 layers."""

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 1):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        k, s = cfg.kernel, cfg.init_std
        self.strides = [2] * (cfg.n_layers - 2) + [1, 1]
        chans = [cfg.in_channels] + [cfg.base_width * min(2 ** i, 8) for i in range(cfg.n_layers - 1)] + [1]
        self.norms = [False] + [cfg.norm == "instance"] * (cfg.n_layers - 2) + [False]
        for i in range(cfg.n_layers):
            self._add(f"l{i}.w", (chans[i + 1], chans[i], k, k), rng, s)
            if not self.norms[i]:
                self._add(f"l{i}.b", (chans[i + 1],), rng, s, zero=True)

    @property
    def receptive_field(self) -> int:
        rf = 1
        for st in reversed(self.strides):
            rf = (rf - 1) * st + self.cfg.kernel
        return rf

    def output_size(self, n: int) -> int:
        for st in self.strides:
            n = (n + 2 - self.cfg.kernel) // st + 1
        return n

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise DimensionError(f"discriminator expects N,{self.cfg.in_channels},H,W; got {x.shape}")
        if min(self.output_size(x.shape[2]), self.output_size(x.shape[3])) < 1:
            raise DimensionError(f"input {x.shape[2:]} too small for the discriminator")
        h = x
        last = self.cfg.n_layers - 1
        for i, st in enumerate(self.strides):
            w, b = self._params[f"l{i}.w"], self._params.get(f"l{i}.b")
            if self.cfg.padding_mode == "zero":
                h = conv2d(h, w, b, stride=st, padding=1)
            else:
                h = conv2d(pad2d(h, 1, "reflect"), w, b, stride=st)
            if self.norms[i]:
                h = instance_norm(h)
            if i < last:
                h = leaky_relu(h, 0.2)
        return h


def generator_param_count(cfg: GeneratorConfig) -> int:
    w = cfg.base_width
    n = w * cfg.in_channels * 49
    ch = w
    for _ in range(cfg.n_down):
        n += 2 * ch * ch * 9
        ch *= 2
    n += cfg.n_resblocks * 2 * ch * ch * 9
    for _ in range(cfg.n_down):
        n += ch * (ch // 2) * 9
        ch //= 2
    return n + cfg.out_channels * ch * 49 + cfg.out_channels


def discriminator_param_count(cfg: DiscriminatorConfig) -> int:
    chans = [cfg.in_channels] + [cfg.base_width * min(2 ** i, 8) for i in range(cfg.n_layers - 1)] + [1]
    n = 0
    for i in range(cfg.n_layers):
        n += chans[i + 1] * chans[i] * cfg.kernel ** 2
        if i == 0 or i == cfg.n_layers - 1 or cfg.norm == "none":
            n += chans[i + 1]
    return n


# -- checkpoints ---------------------------------------------------------------------
def save_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write SSCK1: magic, u32 JSON length, JSON config, u32 count, then named f32 tensors."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<I", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:6] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not an SSCK1 checkpoint")
    pos = 6

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    (clen,) = struct.unpack("<I", take(4))
    config = json.loads(take(clen).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return config, tensors


def config_dict(cfg) -> dict:
    return asdict(cfg)
