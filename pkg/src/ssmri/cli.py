"""``ssmri`` command line: phantoms, masks, training, evaluation, synthesis and CS recon.

Exit codes: 0 success, 2 configuration error, 3 I/O or format error, 4 divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .autograd import TrainingError
from .csrecon import PRESETS, sparsemri_reconstruct
from .data import FormatError, PhantomSpec, generate_phantoms, load_volume, read_manifest, save_volume
from .kspace import generate_mask, ifft2c
from .models import CheckpointError
from .pipeline import (
    ConfigError,
    ExperimentConfig,
    evaluate,
    evaluate_copy_source,
    load_config,
    load_state,
    prepare_samples,
    run_experiment,
    synthesize_kspace,
    write_report,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4
log = logging.getLogger("ssmri")


def _size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}") from None
    if len(dims) == 1:
        return dims[0], dims[0]
    if len(dims) == 2:
        return dims
    raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}")


def cmd_phantom(args) -> int:
    H, W = args.size
    spec = PhantomSpec(n_subjects=args.subjects, H=H, W=W, n_coils=args.coils,
                       contrasts=tuple(args.contrasts.split(",")), seed=args.seed, noise=args.noise)
    ds = generate_phantoms(spec, args.out)
    log.info("wrote %d subjects x %d contrasts to %s", len(ds.records), len(ds.contrasts), args.out)
    return EXIT_OK


def cmd_mask(args) -> int:
    H, W = args.size
    m = generate_mask(H, W, args.r, args.center, args.seed)
    save_volume(args.out, m.mask.astype(np.float32))
    log.info("mask R=%d with %d samples -> %s", m.R, m.n_samples, args.out)
    return EXIT_OK


def _train_config(args) -> ExperimentConfig:
    overrides = {"regime": args.regime, "r_source": args.r_source, "r_target": args.r_target,
                 "epochs": args.epochs, "threads": args.threads, "data": args.data}
    if args.seed is not None:
        overrides.update(mask_seed=args.seed, init_seed=args.seed, shuffle_seed=args.seed)
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    cfg = _train_config(args)
    if not cfg.data:
        raise ConfigError("no dataset: pass --data or set 'data' in the config")
    ds = read_manifest(cfg.data)

    def progress(state):
        n = max(1, len(state.history) // state.epoch)
        recent = state.history[-n:]
        log.info("epoch %d/%d  L_i %.4f  L_k %.5f  L_a %.4f", state.epoch, cfg.epochs,
                 np.mean([r.L_i for r in recent]), np.mean([r.L_k for r in recent]),
                 np.mean([r.L_a_gen for r in recent]))

    res = run_experiment(cfg, ds, args.out, on_epoch=progress)
    if res.test is not None:
        for line in res.test.lines() + res.baseline.lines():
            print(line)
    return EXIT_OK


def cmd_eval(args) -> int:
    state, cfg = load_state(args.checkpoint)
    ds = read_manifest(args.data)
    records = ds.split(args.split)
    if not records:
        raise ConfigError(f"split {args.split!r} is empty in {args.data}")
    samples = prepare_samples(records, cfg)
    results = [evaluate(state.G, samples, cfg.method, cfg.task), evaluate_copy_source(samples, cfg.task)]
    if args.out:
        write_report(args.out, results)
    else:
        for r in results:
            print("\n".join(r.lines()))
    return EXIT_OK


def cmd_synth(args) -> int:
    state, _ = load_state(args.checkpoint)
    k = load_volume(args.input)
    if not np.iscomplexobj(k) or k.ndim not in (2, 3):
        raise ConfigError(f"{args.input}: expected complex k-space [C, H, W] or [H, W]")
    out = synthesize_kspace(state.G, k, args.center)
    save_volume(args.out, out.astype(np.float32))
    return EXIT_OK


def cmd_recon(args) -> int:
    k = load_volume(args.input)
    if not np.iscomplexobj(k):
        raise ConfigError(f"{args.input}: expected complex k-space")
    if k.ndim == 3 and k.shape[0] == 1:
        k = k[0]
    if k.ndim != 2:
        raise ConfigError(f"{args.input}: recon takes single-coil k-space, got shape {k.shape}")
    mask = load_volume(args.mask) > 0.5
    if mask.shape != k.shape:
        raise ConfigError(f"mask shape {mask.shape} does not match k-space {k.shape}")
    k = k.astype(np.complex128)
    if mask.all():
        # nothing to recover; the regularizers would only bias the inverse FFT
        img = ifft2c(k)
    else:
        res = sparsemri_reconstruct(k * mask, mask, args.preset)
        log.info("objective %.6e -> %.6e over %d iterations", res.objective[0], res.objective[-1],
                 len(res.objective) - 1)
        img = res.image
    save_volume(args.out, img.astype(np.complex64))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssmri", description=__doc__.splitlines()[0])
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", help="generate a synthetic multi-coil dataset")
    s.add_argument("--subjects", type=int, default=20)
    s.add_argument("--size", type=_size, default=(64, 64), help="N or HxW")
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--noise", type=float, default=0.002)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--contrasts", default="T1,T2")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("mask", help="write a random undersampling mask with a fully sampled centre")
    s.add_argument("--size", type=_size, default=(64, 64))
    s.add_argument("--r", type=int, required=True, help="acceleration factor")
    s.add_argument("--center", type=_size, default=(16, 16))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("train", help="train one regime and evaluate on the test split")
    s.add_argument("--config", type=Path, help="flat key = value file")
    s.add_argument("--regime")
    s.add_argument("--r-source", type=int)
    s.add_argument("--r-target", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int, help="sets the mask, init and shuffle seeds")
    s.add_argument("--threads", type=int)
    s.add_argument("--data", help="dataset directory (overrides the config)")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--split", default="test")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="synthesize the target contrast from source k-space")
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--input", required=True, type=Path)
    s.add_argument("--center", type=_size, help="calibration block (default by coil count)")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("recon", help="compressed-sensing reconstruction of single-coil k-space")
    s.add_argument("--input", required=True, type=Path)
    s.add_argument("--mask", required=True, type=Path)
    s.add_argument("--preset", choices=sorted(PRESETS), default="standalone")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_recon)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except TrainingError as e:
        print(f"ssmri: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatError, CheckpointError) as e:
        print(f"ssmri: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"ssmri: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
