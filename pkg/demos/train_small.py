"""
Training on undersampled targets
================================

A short run of the semi-supervised regime next to the fully-supervised one
on a small phantom set. The acceptance runs use 30 epochs; half that
takes about a minute on a laptop core.

Pass ``--epochs`` to train longer.
"""
import argparse
import time

from ssmri.data import PhantomSpec, generate_phantoms
from ssmri.pipeline import ExperimentConfig, run_experiment

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--epochs", type=int, default=15)
parser.add_argument("--subjects", type=int, default=20)
args = parser.parse_args()

data = generate_phantoms(PhantomSpec(n_subjects=args.subjects, H=64, W=64, n_coils=4, seed=0))
print(f"{len(data.split('train'))} training and {len(data.split('test'))} test subjects")

# %%
# Same seeds and schedule for both; only the target sampling differs.
common = dict(r_source=2, epochs=args.epochs, decay_start_epoch=args.epochs // 2)
runs = {
    "fully-sampled target": ExperimentConfig(regime="fsgan", r_target=1, **common),
    "target at R=4": ExperimentConfig(regime="ssgan", r_target=4, **common),
}
for label, cfg in runs.items():
    t0 = time.perf_counter()
    res = run_experiment(cfg, data)
    mean, std = res.test.summary()["PSNR"]
    base = res.baseline.summary()["PSNR"][0]
    print(f"{cfg.method:>8} ({label}): {mean:.2f} +/- {std:.2f} dB, copy-source {base:.2f} dB, "
          f"{time.perf_counter() - t0:.0f}s")

# %%
# The per-step losses are kept on the training state.
last = res.state.history[-1]
print(f"last step of {cfg.method}: L_i {last.L_i:.4f}  L_k {last.L_k:.3e}  L_a {last.L_a_gen:.4f}")
