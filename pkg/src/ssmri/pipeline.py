"""Training regimes, learning-rate schedule, evaluation and experiment orchestration.

Every regime reduces to the same train step over a :class:`Sample`:

* ``ssgan``: undersampled source and target, losses only on acquired target samples.
* ``fsgan``: the same with a fully-sampled target (all-ones mask).
* ``supervised_full``: fsgan with a fully-sampled source as well.
* ``casgan``: single-coil; both contrasts are first reconstructed with SparseMRI,
  then the model trains against the reconstructed target without a mask.
"""
from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .autograd import AdamState, Tape, Tensor, TrainingError, adam_step
from .csrecon import PRESETS as CS_PRESETS
from .csrecon import sparsemri_reconstruct
from .data import Dataset, SubjectRecord, load_volume, percentile_scale, save_volume
from .kspace import (
    SensitivityMaps,
    center_slices,
    coil_combine,
    estimate_sensitivities_espirit,
    generate_mask,
    ifft2c,
    to_pairs,
)
from .losses import (
    LossReport,
    LossWeights,
    forward_model,
    lsgan_discriminator_loss,
    lsgan_generator_loss,
    selective_image_loss,
    selective_kspace_loss,
    total_generator_loss,
)
from .metrics import PSNR_CAP, evaluate_pair
from .models import (
    DISCRIMINATOR_PRESETS,
    GENERATOR_PRESETS,
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    load_checkpoint,
    save_checkpoint,
)

REGIMES = ("ssgan", "fsgan", "casgan", "supervised_full")
# calibration-image p99 is mapped here, leaving room under tanh for full-resolution peaks
INTENSITY_LEVEL = 0.7


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    regime: str = "ssgan"
    r_source: int = 2
    r_target: int = 2
    n_train: int = 0  # 0 = all training subjects
    epochs: int = 30
    batch_size: int = 1
    lr0: float = 2e-4
    decay_start_epoch: int = 15
    lambda_i: float = 100.0
    lambda_k: float = 3000.0
    lambda_a: float = 1.0
    beta: float = 5000.0
    complex_l1: str = "modulus"
    source_contrast: str = "T1"
    target_contrast: str = "T2"
    mask_seed: int = 0
    rerandomize_masks: bool = False  # fresh training masks every epoch
    init_seed: int = 0
    shuffle_seed: int = 0
    threads: int = 1
    model_preset: str = "desk"
    cs_preset: str = "casgan"
    data: str = ""

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; choose from {', '.join(REGIMES)}")
        if self.regime == "fsgan" and self.r_target != 1:
            raise ConfigError("fsgan requires fully-sampled target (r_target = 1)")
        if self.regime == "supervised_full" and (self.r_source != 1 or self.r_target != 1):
            raise ConfigError("supervised_full requires r_source = r_target = 1")
        if self.r_source < 1 or self.r_target < 1:
            raise ConfigError("acceleration factors must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 <= self.decay_start_epoch <= self.epochs:
            raise ConfigError("decay_start_epoch must lie in [0, epochs]")
        if self.batch_size != 1:
            raise ConfigError("only batch_size = 1 is supported")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.model_preset not in GENERATOR_PRESETS:
            raise ConfigError(f"unknown model_preset {self.model_preset!r}")
        if self.cs_preset not in CS_PRESETS:
            raise ConfigError(f"unknown cs_preset {self.cs_preset!r}")
        try:
            self.weights
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_i, self.lambda_k, self.lambda_a, self.beta)

    @property
    def task(self) -> str:
        return f"{self.source_contrast}->{self.target_contrast}"

    @property
    def method(self) -> str:
        return {"ssgan": f"ssGAN-{self.r_target}", "fsgan": "fsGAN",
                "casgan": f"CasGAN-{self.r_target}", "supervised_full": "supervised"}[self.regime]

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines, coercing to the field types of ExperimentConfig."""
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value, types[key], f"{source}:{lineno}")
    return out


def _coerce(key: str, value: str, typ, where: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: {key} expects a boolean, got {value!r}")
    try:
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects {typ}, got {value!r}") from None
    return value


def load_config(path, **overrides) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}") from None
    d = parse_config(text, str(p))
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


# -- schedule ---------------------------------------------------------------------------
def lr_schedule(epoch: int, lr0: float, epochs: int, decay_start: int) -> float:
    """Constant lr0, then linear decay reaching zero at ``epochs``."""
    if not 0 <= epoch < epochs:
        raise ValueError(f"epoch {epoch} outside [0, {epochs})")
    if epoch < decay_start:
        return lr0
    return lr0 * (epochs - epoch) / (epochs - decay_start)


# -- samples ----------------------------------------------------------------------------
@dataclass(eq=False)
class Sample:
    subject_id: str
    source: np.ndarray  # float32 [1, 2, H, W], coil-combined source
    target: np.ndarray  # float32 [C, 2, H, W], masked multi-coil target images
    target_mask: np.ndarray | None  # None = fully sampled
    target_maps: np.ndarray  # complex64 [C, H, W]
    reference: np.ndarray  # float32 [H, W], |combined fully-sampled target|
    copy_source: np.ndarray  # float32 [H, W], |combined source|
    support: np.ndarray  # bool [H, W], where the target maps are defined


def calibration_scale(kspace: np.ndarray, center_size: tuple[int, int]) -> float:
    """Intensity scale from the always-acquired centre block, so it is the same for every R."""
    H, W = kspace.shape[-2:]
    sy, sx = center_slices(H, W, center_size)
    kc = np.zeros_like(kspace)
    kc[..., sy, sx] = kspace[..., sy, sx]
    rss = np.sqrt(np.sum(np.abs(ifft2c(kc)) ** 2, axis=0))
    return INTENSITY_LEVEL * percentile_scale(rss)


def _mask_seed(manifest_seed: int, cfg_seed: int, epoch: int | None = None) -> int:
    if epoch is not None:
        ss = np.random.SeedSequence([manifest_seed, cfg_seed, epoch])
    elif cfg_seed == 0:
        return manifest_seed
    else:
        ss = np.random.SeedSequence([manifest_seed, cfg_seed])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _acquire(record: SubjectRecord, contrast: str, R: int, cfg_seed: int, epoch: int | None = None):
    k = record.kspace[contrast].astype(np.complex128)
    k = k * calibration_scale(k, record.center_size)
    H, W = k.shape[1:]
    if R == 1:
        return k, None
    m = generate_mask(H, W, R, record.center_size, _mask_seed(record.mask_seeds[contrast], cfg_seed, epoch))
    return k * m.mask, m.mask


def estimate_maps(kspace: np.ndarray, center_size: tuple[int, int]) -> SensitivityMaps:
    if kspace.shape[0] == 1:
        return SensitivityMaps.ones(*kspace.shape[1:])
    return estimate_sensitivities_espirit(kspace, center_size)


class CsCache:
    """Content-addressed store for stage-1 reconstructions (in memory, optionally on disk)."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        self.mem: dict[str, np.ndarray] = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(kspace: np.ndarray, mask: np.ndarray, preset: str) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(kspace, dtype=np.complex128).tobytes())
        h.update(np.packbits(mask).tobytes())
        h.update(repr(CS_PRESETS[preset]).encode())
        return h.hexdigest()[:32]

    def reconstruct(self, kspace: np.ndarray, mask: np.ndarray, preset: str) -> np.ndarray:
        key = self.key(kspace, mask, preset)
        if key in self.mem:
            self.hits += 1
            return self.mem[key]
        path = self.root / f"{key}.ssmr" if self.root is not None else None
        if path is not None and path.exists():
            self.hits += 1
            img = load_volume(path).astype(np.complex128)
        else:
            self.misses += 1
            img = sparsemri_reconstruct(kspace, mask, preset).image
            if path is not None:
                self.root.mkdir(parents=True, exist_ok=True)
                save_volume(path, img.astype(np.complex64))
        self.mem[key] = img
        return img


def _stage1(k: np.ndarray, mask, cfg: ExperimentConfig, cache: CsCache) -> np.ndarray:
    """Single-coil CS reconstruction; fully-sampled data needs only the inverse FFT."""
    if mask is None:
        return ifft2c(k)
    return cache.reconstruct(k[0], mask, cfg.cs_preset)[None]


def prepare_sample(record: SubjectRecord, cfg: ExperimentConfig, cache: CsCache | None = None,
                   epoch: int | None = None) -> Sample:
    """Simulate one subject's acquisitions; ``epoch`` selects a re-randomized mask draw."""
    ks, ms = _acquire(record, cfg.source_contrast, cfg.r_source, cfg.mask_seed, epoch)
    kt, mt = _acquire(record, cfg.target_contrast, cfg.r_target, cfg.mask_seed, epoch)
    full_t = record.kspace[cfg.target_contrast].astype(np.complex128)
    full_t = full_t * calibration_scale(full_t, record.center_size)
    maps_s = estimate_maps(ks, record.center_size)
    maps_t = estimate_maps(kt, record.center_size)
    if cfg.regime == "casgan":
        if ks.shape[0] != 1:
            raise ConfigError("casgan runs on single-coil data only")
        cache = cache or CsCache()
        src_img = _stage1(ks, ms, cfg, cache)
        tgt_img = _stage1(kt, mt, cfg, cache)
        target_mask = None
    else:
        src_img = ifft2c(ks)
        tgt_img = ifft2c(kt)
        target_mask = mt
    src = coil_combine(src_img, maps_s)
    ref = np.abs(coil_combine(ifft2c(full_t), maps_t))
    return Sample(
        subject_id=record.subject_id,
        source=to_pairs(src)[None],
        target=to_pairs(tgt_img),
        target_mask=target_mask,
        target_maps=maps_t.maps.astype(np.complex64),
        reference=ref.astype(np.float32),
        copy_source=np.abs(src).astype(np.float32),
        support=maps_t.support(),
    )


def prepare_samples(records: Iterable[SubjectRecord], cfg: ExperimentConfig,
                    cache: CsCache | None = None, epoch: int | None = None) -> list[Sample]:
    cache = cache or CsCache()
    return [prepare_sample(r, cfg, cache, epoch) for r in records]


# -- training ---------------------------------------------------------------------------
@dataclass(eq=False)
class TrainState:
    G: Generator
    D: Discriminator
    opt_G: AdamState = field(default_factory=AdamState)
    opt_D: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    step: int = 0
    history: list[LossReport] = field(default_factory=list)


def init_state(cfg: ExperimentConfig) -> TrainState:
    seeds = np.random.SeedSequence(cfg.init_seed).generate_state(2)
    G = Generator(GENERATOR_PRESETS[cfg.model_preset], seed=int(seeds[0]))
    D = Discriminator(DISCRIMINATOR_PRESETS[cfg.model_preset], seed=int(seeds[1]))
    return TrainState(G=G, D=D)


def _check_finite(name: str, value: float, state: TrainState) -> None:
    if not np.isfinite(value):
        err = TrainingError(f"non-finite {name} at step {state.step}", param=name)
        err.snapshot = {"step": state.step, "epoch": state.epoch, "loss": name}
        raise err


def train_step(state: TrainState, sample: Sample, cfg: ExperimentConfig, lr: float) -> LossReport:
    """One discriminator update followed by one generator update."""
    G, D, w = state.G, state.D, cfg.weights
    maps = sample.target_maps
    real = Tensor(sample.target)
    with Tape() as gtape:
        y_hat = G(Tensor(sample.source))
        fake = forward_model(y_hat, maps, sample.target_mask)

    la_disc = 0.0
    if w.lambda_a > 0:
        with Tape() as dtape:
            ld = lsgan_discriminator_loss(D(real), D(fake.detach()))
        la_disc = ld.item()
        _check_finite("L_a_disc", la_disc, state)
        dtape.backward(ld)
        d_params = D.named_parameters()
        adam_step(d_params, {k: p.grad for k, p in d_params.items()}, state.opt_D, lr)
        D.zero_grad()

    with gtape:
        li = selective_image_loss(fake, real, cfg.complex_l1)
        lk = selective_kspace_loss(fake, real, w.beta, cfg.complex_l1)
        la = lsgan_generator_loss(D(fake)) if w.lambda_a > 0 else None
        total = total_generator_loss(w, li, lk, la)
    report = LossReport(L_i=li.item(), L_k=lk.item(), L_a_gen=la.item() if la is not None else 0.0,
                        L_a_disc=la_disc, L_total=total.item())
    _check_finite("L_total", report.L_total, state)
    gtape.backward(total)
    g_params = G.named_parameters()
    adam_step(g_params, {k: p.grad for k, p in g_params.items()}, state.opt_G, lr)
    G.zero_grad()
    D.zero_grad()
    state.step += 1
    state.history.append(report)
    return report


def epoch_order(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n)


def train(cfg: ExperimentConfig, samples: list[Sample] | Callable[[int], list[Sample]],
          state: TrainState | None = None,
          on_epoch: Callable[[TrainState], None] | None = None,
          stop_epoch: int | None = None) -> TrainState:
    """Run (or resume) training up to ``stop_epoch`` (default: all epochs).

    ``samples`` is either a fixed list or a function of the epoch index that
    returns that epoch's samples (used for per-epoch mask re-randomization).
    """
    per_epoch = samples if callable(samples) else (lambda _e: samples)
    state = state or init_state(cfg)
    stop = cfg.epochs if stop_epoch is None else stop_epoch
    with threadpool_limits(limits=cfg.threads):
        while state.epoch < stop:
            batch = per_epoch(state.epoch)
            if not batch:
                raise ConfigError("no training samples")
            lr = lr_schedule(state.epoch, cfg.lr0, cfg.epochs, cfg.decay_start_epoch)
            for i in epoch_order(len(batch), cfg.shuffle_seed, state.epoch):
                train_step(state, batch[i], cfg, lr)
            state.epoch += 1
            if on_epoch is not None:
                on_epoch(state)
    return state


# -- checkpoints ------------------------------------------------------------------------
def save_state(path, state: TrainState, cfg: ExperimentConfig) -> None:
    meta = {
        "format": 1,
        "experiment": cfg.to_dict(),
        "generator": dataclasses.asdict(state.G.cfg),
        "discriminator": dataclasses.asdict(state.D.cfg),
        "epoch": state.epoch,
        "step": state.step,
        "adam_t": {"G": state.opt_G.t, "D": state.opt_D.t},
    }
    tensors: dict[str, np.ndarray] = {}
    for tag, mod, opt in (("G", state.G, state.opt_G), ("D", state.D, state.opt_D)):
        for k, p in mod.named_parameters().items():
            tensors[f"{tag}/{k}"] = p.data
        for k in mod.named_parameters():
            if k in opt.m:
                tensors[f"{tag}.m/{k}"] = opt.m[k]
                tensors[f"{tag}.v/{k}"] = opt.v[k]
    save_checkpoint(path, meta, tensors)


def load_state(path) -> tuple[TrainState, ExperimentConfig]:
    meta, tensors = load_checkpoint(path)
    try:
        cfg = ExperimentConfig.from_dict(meta["experiment"])
        G = Generator(GeneratorConfig(**meta["generator"]))
        D = Discriminator(DiscriminatorConfig(**meta["discriminator"]))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path}: checkpoint config mismatch ({e})") from None
    state = TrainState(G=G, D=D, epoch=meta["epoch"], step=meta["step"])
    for tag, mod, opt in (("G", G, state.opt_G), ("D", D, state.opt_D)):
        try:
            mod.load_state_dict({k: tensors[f"{tag}/{k}"] for k in mod.named_parameters()})
        except (KeyError, ValueError) as e:
            raise ConfigError(f"{path}: checkpoint does not match its config ({e})") from None
        opt.t = meta["adam_t"][tag]
        for k in mod.named_parameters():
            if f"{tag}.m/{k}" in tensors:
                opt.m[k] = tensors[f"{tag}.m/{k}"]
                opt.v[k] = tensors[f"{tag}.v/{k}"]
    return state, cfg


# -- synthesis & evaluation -------------------------------------------------------------
def synthesize(G: Generator, source: np.ndarray) -> np.ndarray:
    """|G(source)| for a [1, 2, H, W] (or [2, H, W]) coil-combined source."""
    x = np.asarray(source, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    out = G(Tensor(x)).data[0]
    return np.hypot(out[0], out[1]).astype(np.float32)


def synthesize_kspace(G: Generator, kspace: np.ndarray, center_size: tuple[int, int] | None = None) -> np.ndarray:
    """Synthesize from a masked multi-coil source k-space volume [C, H, W]."""
    k = np.asarray(kspace, dtype=np.complex128)
    if k.ndim == 2:
        k = k[None]
    center = center_size or ((10, 10) if k.shape[0] == 1 else (16, 16))
    k = k * calibration_scale(k, center)
    src = coil_combine(ifft2c(k), estimate_maps(k, center))
    return synthesize(G, to_pairs(src))


def subject_metrics(reference: np.ndarray, output: np.ndarray, cap: float = PSNR_CAP) -> dict[str, float]:
    """Metrics after mapping the reference's 99th percentile to 1 (same factor on the output)."""
    s = percentile_scale(reference)
    m = evaluate_pair(reference * s, output * s, cap)
    return {"PSNR": m.psnr, "SSIM": m.ssim, "MSE100": m.mse100}


METRICS = ("PSNR", "SSIM", "MSE100")


@dataclass
class EvalResult:
    method: str
    task: str
    per_subject: dict[str, dict[str, float]]

    def summary(self) -> dict[str, tuple[float, float]]:
        out = {}
        for m in METRICS:
            vals = np.array([v[m] for v in self.per_subject.values()])
            out[m] = (float(vals.mean()), float(vals.std()))
        return out

    def lines(self) -> list[str]:
        return [f"{self.method}\t{self.task}\t{m}\t{mu:.4f}\t{sd:.4f}"
                for m, (mu, sd) in self.summary().items()]


def evaluate(G: Generator, samples: list[Sample], method: str, task: str) -> EvalResult:
    if not samples:
        raise ConfigError("no evaluation samples")
    # the coil-combined image only exists where the target maps do; outside it the
    # losses never see the output, so it is not scored
    per = {s.subject_id: subject_metrics(s.reference, synthesize(G, s.source) * s.support)
           for s in samples}
    return EvalResult(method, task, per)


def evaluate_copy_source(samples: list[Sample], task: str) -> EvalResult:
    return EvalResult("copy-source", task,
                      {s.subject_id: subject_metrics(s.reference, s.copy_source) for s in samples})


def write_report(path, results: Iterable[EvalResult]) -> None:
    text = "".join(line + "\n" for r in results for line in r.lines())
    _atomic_write(Path(path), text)


def read_report(path) -> dict[tuple[str, str, str], tuple[float, float]]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        method, task, metric, mean, std = line.split("\t")
        out[(method, task, metric)] = (float(mean), float(std))
    return out


def write_loss_curve(path, history: list[LossReport], lrs: list[float]) -> None:
    lines = [f"{i}\t{r.L_i:.8e}\t{r.L_k:.8e}\t{r.L_a_gen:.8e}\t{lr:.8e}"
             for i, (r, lr) in enumerate(zip(history, lrs))]
    _atomic_write(Path(path), "".join(s + "\n" for s in lines))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_run_manifest(path, cfg: ExperimentConfig, outputs: dict[str, str], started: str,
                       finished: str | None = None) -> None:
    doc = {
        "config": cfg.to_dict(),
        "seeds": {"mask": cfg.mask_seed, "init": cfg.init_seed, "shuffle": cfg.shuffle_seed},
        "threads": cfg.threads,
        "code_version": __version__,
        "started": started,
        "finished": finished,
        "outputs": outputs,
    }
    _atomic_write(Path(path), json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- orchestration ----------------------------------------------------------------------
@dataclass
class RunResult:
    cfg: ExperimentConfig
    state: TrainState
    test: EvalResult
    baseline: EvalResult
    lrs: list[float]


def _select_train(dataset: Dataset, cfg: ExperimentConfig) -> list[SubjectRecord]:
    recs = dataset.split("train")
    if cfg.n_train:
        if cfg.n_train > len(recs):
            raise ConfigError(f"n_train={cfg.n_train} exceeds {len(recs)} training subjects")
        recs = recs[: cfg.n_train]
    return recs


def run_experiment(cfg: ExperimentConfig, dataset: Dataset, out_dir=None,
                   cache: CsCache | None = None,
                   on_epoch: Callable[[TrainState], None] | None = None) -> RunResult:
    """Train on the train split, evaluate on the test split and (optionally) write artifacts."""
    for c in (cfg.source_contrast, cfg.target_contrast):
        if c not in dataset.contrasts:
            raise ConfigError(f"contrast {c!r} not in dataset {dataset.contrasts}")
    out = Path(out_dir) if out_dir is not None else None
    started = _now()
    outputs = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        outputs = {k: str(out / v) for k, v in (("checkpoint", "model.ssck"), ("report", "report.tsv"),
                                                 ("loss_curve", "loss_curve.tsv"))}
        write_run_manifest(out / "run_manifest.json", cfg, outputs, started)
        if cache is None and cfg.regime == "casgan":
            cache = CsCache(out / "cs_cache")
    cache = cache or CsCache()
    train_recs = _select_train(dataset, cfg)
    if not train_recs:
        raise ConfigError("no training subjects in the dataset")
    if cfg.rerandomize_masks:
        train_samples = lambda e: prepare_samples(train_recs, cfg, cache, epoch=e)  # noqa: E731
    else:
        train_samples = prepare_samples(train_recs, cfg, cache)
    test_samples = prepare_samples(dataset.split("test"), cfg, cache)
    state = train(cfg, train_samples, on_epoch=on_epoch)
    lrs = [lr_schedule(e, cfg.lr0, cfg.epochs, cfg.decay_start_epoch)
           for e in range(cfg.epochs) for _ in train_recs]
    test = evaluate(state.G, test_samples, cfg.method, cfg.task) if test_samples else None
    base = evaluate_copy_source(test_samples, cfg.task) if test_samples else None
    if out is not None:
        save_state(out / "model.ssck", state, cfg)
        write_loss_curve(out / "loss_curve.tsv", state.history, lrs)
        write_report(out / "report.tsv", [r for r in (test, base) if r is not None])
        write_run_manifest(out / "run_manifest.json", cfg, outputs, started, _now())
    return RunResult(cfg, state, test, base, lrs)


def run_casgan(cfg: ExperimentConfig, dataset: Dataset, out_dir=None, cache: CsCache | None = None) -> RunResult:
    return run_experiment(cfg.replace(regime="casgan"), dataset, out_dir, cache)


ABLATIONS = {"w/o image": "lambda_i", "w/o k-space": "lambda_k", "w/o adv": "lambda_a"}


def run_ablations(cfg: ExperimentConfig, dataset: Dataset, out_dir=None) -> dict[str, RunResult]:
    """The full model plus one run per zeroed loss weight (each in its own subdirectory)."""
    def sub(label):
        return None if out_dir is None else Path(out_dir) / label.replace("w/o ", "wo_").replace("-", "")

    runs = {"full": run_experiment(cfg, dataset, sub("full"))}
    for label, key in ABLATIONS.items():
        runs[label] = run_experiment(cfg.replace(**{key: 0.0}), dataset, sub(label))
    return runs
