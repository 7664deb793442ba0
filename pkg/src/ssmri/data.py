"""Synthetic multi-contrast phantoms, acquisition simulation and SSMR1 storage.

A phantom subject is a label map of five tissues rendered under two contrast
lookup tables, so both contrasts share geometry exactly. Coil sensitivities
are smooth Gaussian magnitude profiles with low-order polynomial phase.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .kspace import (
    SamplingMask,
    SensitivityMaps,
    apply_mask,
    coil_project,
    fft2c,
    generate_mask,
)

MAGIC = b"SSMR1\x00"
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<c8")}
MANIFEST_HEADER = "# ssmri-manifest v1"
MAX_ELEMENTS = 2**31

# background, fat/skull, grey matter, white matter, CSF, lesion
TISSUES = ("background", "fat", "gm", "wm", "csf", "lesion")
CONTRASTS = {
    "T1": np.array([0.0, 0.95, 0.55, 0.80, 0.18, 0.40]),
    "T2": np.array([0.0, 0.45, 0.70, 0.50, 1.00, 0.85]),
    "PD": np.array([0.0, 0.75, 0.90, 0.72, 0.95, 0.80]),
}


class FormatError(ValueError):
    """Malformed or truncated SSMR1 file."""


# -- SSMR1 volumes -------------------------------------------------------------
def save_volume(path, array: np.ndarray) -> None:
    """Write ``array`` as SSMR1: magic, u8 dtype code, u8 rank, u32 dims, LE payload."""
    array = np.asarray(array)
    if np.iscomplexobj(array):
        code, data = 1, array.astype("<c8")
    else:
        code, data = 0, array.astype("<f4")
    if data.ndim > 255:
        raise FormatError("rank exceeds 255")
    header = MAGIC + struct.pack("<BB", code, data.ndim)
    header += struct.pack(f"<{data.ndim}I", *data.shape)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data).tobytes())
    os.replace(tmp, path)


def decode_volume(buf: bytes) -> np.ndarray:
    if len(buf) < len(MAGIC) + 2:
        raise FormatError(f"truncated header: missing {len(MAGIC) + 2 - len(buf)} bytes")
    if buf[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {buf[:len(MAGIC)]!r}")
    code, rank = struct.unpack_from("<BB", buf, len(MAGIC))
    if code not in DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}")
    off = len(MAGIC) + 2
    if len(buf) < off + 4 * rank:
        raise FormatError(f"truncated dims: missing {off + 4 * rank - len(buf)} bytes")
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise FormatError(f"dimension overflow: {dims} exceeds {MAX_ELEMENTS} elements")
    dtype = DTYPE_CODES[code]
    need = count * dtype.itemsize
    have = len(buf) - off
    if have < need:
        raise FormatError(f"truncated payload: missing {need - have} bytes")
    if have > need:
        raise FormatError(f"{have - need} trailing bytes after payload")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=off).reshape(dims).copy()


def load_volume(path) -> np.ndarray:
    return decode_volume(Path(path).read_bytes())


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- phantom generation -----------------------------------------------------------
@dataclass
class PhantomSpec:
    n_subjects: int = 20
    H: int = 64
    W: int = 64
    n_coils: int = 4
    contrasts: tuple[str, str] = ("T1", "T2")
    seed: int = 0
    noise: float = 0.002

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError(f"n_subjects must be >= 1, got {self.n_subjects}")
        if self.H < 32 or self.W < 32:
            raise ValueError(f"phantoms need H, W >= 32, got {self.H}x{self.W}")
        if self.n_coils < 1:
            raise ValueError(f"n_coils must be >= 1, got {self.n_coils}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        for c in self.contrasts:
            if c not in CONTRASTS:
                raise ValueError(f"unknown contrast {c!r}; choose from {sorted(CONTRASTS)}")
        self.contrasts = tuple(self.contrasts)

    @property
    def center_size(self) -> tuple[int, int]:
        return (10, 10) if self.n_coils == 1 else (16, 16)


@dataclass(eq=False)
class SubjectRecord:
    subject_id: str
    split: str
    kspace: dict[str, np.ndarray]  # contrast -> complex [C, H, W], fully sampled
    mask_seeds: dict[str, int]
    center_size: tuple[int, int]
    true_maps: SensitivityMaps | None = None
    labels: np.ndarray | None = None
    images: dict[str, np.ndarray] = field(default_factory=dict)  # noiseless ground truth
    paths: dict[str, str] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.kspace.values())).shape[1:]

    @property
    def n_coils(self) -> int:
        return next(iter(self.kspace.values())).shape[0]


@dataclass(eq=False)
class Dataset:
    records: list[SubjectRecord]
    contrasts: tuple[str, str]
    version: int = 1

    def split(self, name: str) -> list[SubjectRecord]:
        return [r for r in self.records if r.split == name]

    def by_id(self, subject_id: str) -> SubjectRecord:
        for r in self.records:
            if r.subject_id == subject_id:
                return r
        raise KeyError(subject_id)


def split_sizes(n: int) -> tuple[int, int, int]:
    """(train, val, test) counts; roughly 68/11/21 like the clinical splits."""
    n_test = int(round(0.2 * n)) if n >= 3 else 0
    n_val = int(round(0.1 * n)) if n >= 3 else 0
    return n - n_val - n_test, n_val, n_test


def _subject_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, stream]))


def _ellipse(x, y, cx, cy, a, b, theta):
    c, s = np.cos(theta), np.sin(theta)
    u = (x - cx) * c + (y - cy) * s
    v = -(x - cx) * s + (y - cy) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1


def phantom_labels(H: int, W: int, rng: np.random.Generator, supersample: int = 2) -> np.ndarray:
    """Label map at ``supersample``x resolution drawn from a randomized head geometry."""
    hs, ws = H * supersample, W * supersample
    y, x = np.mgrid[-1:1:hs * 1j, -1:1:ws * 1j]
    labels = np.zeros((hs, ws), dtype=np.int8)
    a, b = rng.uniform(0.62, 0.78), rng.uniform(0.74, 0.88)
    cx, cy = rng.uniform(-0.05, 0.05, size=2)
    th = rng.uniform(-0.25, 0.25)
    labels[_ellipse(x, y, cx, cy, a, b, th)] = 1
    thick = rng.uniform(0.08, 0.12)
    labels[_ellipse(x, y, cx, cy, a - thick, b - thick, th)] = 2
    labels[_ellipse(x, y, cx, cy, (a - thick) * 0.72, (b - thick) * 0.75, th)] = 3
    # ventricles
    for sgn in (-1, 1):
        vx = cx + sgn * rng.uniform(0.08, 0.14)
        vy = cy + rng.uniform(-0.08, 0.05)
        labels[_ellipse(x, y, vx, vy, rng.uniform(0.05, 0.09), rng.uniform(0.14, 0.22),
                        th + sgn * rng.uniform(0.1, 0.4))] = 4
    # grey-matter islands inside white matter
    for _ in range(rng.integers(2, 5)):
        r = rng.uniform(0.15, 0.4)
        ang = rng.uniform(0, 2 * np.pi)
        labels[_ellipse(x, y, cx + r * np.cos(ang), cy + r * np.sin(ang),
                        rng.uniform(0.04, 0.09), rng.uniform(0.04, 0.09), rng.uniform(0, np.pi))
               & (labels == 3)] = 2
    # lesions
    for _ in range(rng.integers(1, 4)):
        r = rng.uniform(0.0, 0.45)
        ang = rng.uniform(0, 2 * np.pi)
        labels[_ellipse(x, y, cx + r * np.cos(ang), cy + r * np.sin(ang),
                        rng.uniform(0.03, 0.07), rng.uniform(0.03, 0.07), 0.0)
               & (labels >= 2)] = 5
    return labels


def smooth_texture(shape: tuple[int, int], rng: np.random.Generator, sigma: float,
                   amplitude: float) -> np.ndarray:
    field_ = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    field_ /= np.abs(field_).max() + 1e-12
    return 1.0 + amplitude * field_


def render_contrast(labels: np.ndarray, contrast: str, texture: np.ndarray,
                    supersample: int = 2) -> np.ndarray:
    img = CONTRASTS[contrast][labels] * texture
    if supersample > 1:
        hs, ws = img.shape
        img = img.reshape(hs // supersample, supersample, ws // supersample, supersample).mean(axis=(1, 3))
    return img


def simulate_sensitivities(H: int, W: int, n_coils: int, rng: np.random.Generator) -> SensitivityMaps:
    """Smooth complex coil maps, scaled so the RSS is close to 1 in the head region."""
    if n_coils == 1:
        return SensitivityMaps.ones(H, W, 1)
    y, x = np.mgrid[-1:1:H * 1j, -1:1:W * 1j]
    offset = rng.uniform(0, 2 * np.pi)
    maps = []
    for c in range(n_coils):
        ang = offset + 2 * np.pi * c / n_coils
        rad = rng.uniform(0.85, 1.0)
        sx, sy = rad * np.cos(ang), rad * np.sin(ang)
        width = rng.uniform(0.55, 0.7)
        mag = np.exp(-((x - sx) ** 2 + (y - sy) ** 2) / (2 * width ** 2))
        p = rng.uniform(-0.8, 0.8, size=5)
        phase = p[0] * np.pi + p[1] * x + p[2] * y + 0.5 * p[3] * x * y + 0.5 * p[4] * (x * x - y * y)
        maps.append(mag * np.exp(1j * phase))
    maps = np.array(maps)
    rss = np.sqrt((np.abs(maps) ** 2).sum(axis=0))
    head = (x / 0.8) ** 2 + (y / 0.9) ** 2 <= 1
    maps /= rss[head].mean()
    return SensitivityMaps(maps, kind="true_simulated")


def _mask_seed(seed: int, index: int, contrast: str) -> int:
    ss = np.random.SeedSequence([seed, index, 7, sum(map(ord, contrast))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_subject(spec: PhantomSpec, index: int, split: str) -> SubjectRecord:
    geo = _subject_rng(spec.seed, index, 0)
    labels = phantom_labels(spec.H, spec.W, geo)
    texture = smooth_texture(labels.shape, geo, sigma=6.0, amplitude=0.06)
    sens = simulate_sensitivities(spec.H, spec.W, spec.n_coils, _subject_rng(spec.seed, index, 1))
    kspace, seeds, images = {}, {}, {}
    for ci, contrast in enumerate(spec.contrasts):
        img = render_contrast(labels, contrast, texture)
        images[contrast] = img.astype(np.float32)
        k = fft2c(coil_project(img.astype(np.complex128), sens))
        if spec.noise > 0:
            nrng = _subject_rng(spec.seed, index, 10 + ci)
            k = k + spec.noise * (nrng.standard_normal(k.shape) + 1j * nrng.standard_normal(k.shape))
        kspace[contrast] = k.astype(np.complex64)
        seeds[contrast] = _mask_seed(spec.seed, index, contrast)
    down = labels[::2, ::2] if labels.shape[0] == 2 * spec.H else labels
    return SubjectRecord(subject_id=f"sub{index:03d}", split=split, kspace=kspace,
                         mask_seeds=seeds, center_size=spec.center_size, true_maps=sens,
                         labels=down, images=images)


def generate_phantoms(spec: PhantomSpec, out_dir=None) -> Dataset:
    """Build the dataset in memory; with ``out_dir`` also write volumes and a manifest."""
    n_train, n_val, n_test = split_sizes(spec.n_subjects)
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    records = [make_subject(spec, i, s) for i, s in enumerate(splits)]
    ds = Dataset(records=records, contrasts=spec.contrasts)
    if out_dir is not None:
        write_dataset(ds, out_dir)
    return ds


# -- manifest ----------------------------------------------------------------------
def write_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [MANIFEST_HEADER]
    for r in ds.records:
        for contrast in ds.contrasts:
            rel = f"{r.subject_id}_{contrast}.ssmr"
            save_volume(out / rel, r.kspace[contrast])
            r.paths[contrast] = rel
            ch, cw = r.center_size
            lines.append("\t".join([r.subject_id, r.split, contrast, rel, "1", f"{ch}x{cw}",
                                    str(r.mask_seeds[contrast])]))
    path = out / "manifest.tsv"
    tmp = out / "manifest.tsv.tmp"
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_manifest(path) -> Dataset:
    """Parse a manifest and load every referenced volume."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.tsv"
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# ssmri-manifest"):
        raise FormatError(f"{path}: missing manifest header")
    recs: dict[str, SubjectRecord] = {}
    contrasts: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise FormatError(f"{path}:{lineno}: expected 7 tab-separated fields, got {len(parts)}")
        sid, split, contrast, rel, _r, center, seed = parts
        ch, cw = (int(v) for v in center.split("x"))
        k = load_volume(path.parent / rel)
        rec = recs.get(sid)
        if rec is None:
            rec = recs[sid] = SubjectRecord(sid, split, {}, {}, (ch, cw))
        elif rec.split != split:
            raise FormatError(f"{path}:{lineno}: subject {sid} appears in splits {rec.split} and {split}")
        rec.kspace[contrast] = k
        rec.mask_seeds[contrast] = int(seed)
        rec.paths[contrast] = rel
        if contrast not in contrasts:
            contrasts.append(contrast)
    if len(contrasts) != 2:
        raise FormatError(f"{path}: expected exactly two contrasts, found {contrasts}")
    return Dataset(records=list(recs.values()), contrasts=tuple(contrasts))


# -- acquisition / normalization -----------------------------------------------------
def simulate_acquisition(record: SubjectRecord, contrast: str, R: int,
                         mask_seed: int | None = None) -> tuple[np.ndarray, SamplingMask]:
    """Retrospectively undersample one contrast of a subject."""
    k = record.kspace[contrast]
    H, W = k.shape[1:]
    seed = record.mask_seeds[contrast] if mask_seed is None else mask_seed
    mask = generate_mask(H, W, R, record.center_size, seed)
    return apply_mask(k, mask), mask


def percentile_scale(magnitude: np.ndarray, q: float = 99.0) -> float:
    p = float(np.percentile(np.abs(magnitude), q))
    if not p > 0:
        raise ValueError("cannot normalize an all-zero volume")
    return 1.0 / p


def normalize(stack: np.ndarray, q: float = 99.0) -> tuple[np.ndarray, float]:
    """Scale so the ``q``-th percentile of ``|stack|`` equals 1; returns (scaled, scale)."""
    stack = np.asarray(stack)
    if stack.size == 0:
        raise ValueError("cannot normalize an empty stack")
    scale = percentile_scale(stack, q)
    return stack * stack.real.dtype.type(scale), scale


def denormalize(stack: np.ndarray, scale: float) -> np.ndarray:
    return np.asarray(stack) / np.asarray(stack).real.dtype.type(scale)
