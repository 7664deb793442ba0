"""Desk-scale acceptance suite: one test per criterion, one PASS/FAIL line each.

The training criteria run the real pipeline on 64x64 phantoms (about ten
minutes on one core in total). Select them alone with ``pytest -m acceptance``.
"""
import time

import numpy as np
import pytest

from oracles import mse100_loop, psnr_loop, ssim_brute
from ssmri import csrecon as cs
from ssmri.autograd import (
    Tensor,
    absolute,
    complex_abs,
    conv2d,
    conv_transpose2d,
    gradcheck,
    instance_norm,
    leaky_relu,
    pad2d,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scalar_mul,
    square,
    tanh,
)
from ssmri.data import PhantomSpec, generate_phantoms, phantom_labels, render_contrast, simulate_sensitivities
from ssmri.kspace import (
    apply_mask,
    coil_adjoint,
    coil_combine,
    coil_project,
    estimate_sensitivities_espirit,
    fft2c,
    generate_mask,
    ifft2c,
    to_pairs,
)
from ssmri.losses import (
    adversarial_losses,
    coil_project_op,
    forward_model,
    kspace_op,
    mask_op,
    selective_image_loss,
    selective_kspace_loss,
)
from ssmri.metrics import mse100, psnr, ssim
from ssmri.models import Discriminator, DiscriminatorConfig
from ssmri.pipeline import (
    ExperimentConfig,
    _acquire,
    init_state,
    lr_schedule,
    prepare_samples,
    run_ablations,
    run_experiment,
    subject_metrics,
    train_step,
)

pytestmark = pytest.mark.acceptance

TREND_CONFIGS = {
    "fsGAN": ExperimentConfig(regime="fsgan", r_source=2, r_target=1),
    "ssGAN-2": ExperimentConfig(regime="ssgan", r_source=2, r_target=2),
    "ssGAN-4": ExperimentConfig(regime="ssgan", r_source=2, r_target=4),
}


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def multicoil():
    return generate_phantoms(PhantomSpec(n_subjects=20, H=64, W=64, n_coils=4, seed=0))


@pytest.fixture(scope="module")
def singlecoil():
    return generate_phantoms(PhantomSpec(n_subjects=20, H=64, W=64, n_coils=1, seed=0))


def run_trend(dataset, root):
    out = {}
    for name, cfg in TREND_CONFIGS.items():
        t0 = time.perf_counter()
        res = run_experiment(cfg, dataset, root / name)
        out[name] = (res, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="module")
def trend(multicoil, tmp_path_factory):
    root = tmp_path_factory.mktemp("trend_a")
    return root, run_trend(multicoil, root)


# -- 1: gradients --------------------------------------------------------------------------
def _weighted(t, seed):
    # random linear functional, so every output entry contributes to the gradient
    return (t * Tensor(np.random.default_rng(seed).standard_normal(t.shape))).sum()


def _engine_ops():
    return {
        "add": (lambda a, b: a + b, [(3, 4), (3, 4)]),
        "sub": (lambda a, b: a - b, [(3, 4), (3, 4)]),
        "mul": (lambda a, b: a * b, [(3, 4), (3, 4)]),
        "scalar_mul": (lambda a: scalar_mul(a, -1.7), [(5,)]),
        "neg": (lambda a: -a, [(5,)]),
        "relu": (relu, [(4, 5)]),
        "leaky_relu": (lambda a: leaky_relu(a, 0.2), [(4, 5)]),
        "tanh": (tanh, [(4, 5)]),
        "absolute": (absolute, [(4, 5)]),
        "square": (square, [(4, 5)]),
        "complex_abs": (lambda a: complex_abs(a, axis=-3), [(2, 2, 3, 3)]),
        "reduce_sum": (lambda a: reduce_sum(a) * reduce_sum(a), [(3, 3)]),
        "reduce_mean": (lambda a: reduce_mean(a) * reduce_mean(a), [(3, 3)]),
        "reshape": (lambda a: reshape(a, (6, 2)), [(3, 4)]),
        "linear_map": (kspace_op, [(3, 2, 8, 8)]),
        "conv2d": (lambda x, w: conv2d(x, w, stride=2, padding=1), [(1, 3, 9, 9), (4, 3, 3, 3)]),
        "conv2d_bias": (lambda x, w, b: conv2d(x, w, b, stride=1, padding=2), [(2, 3, 6, 6), (4, 3, 4, 4), (4,)]),
        "conv_transpose2d": (lambda y, w, b: conv_transpose2d(y, w, b, stride=2, padding=1, output_padding=1),
                             [(1, 4, 4, 4), (4, 2, 3, 3), (2,)]),
        "pad2d_reflect": (lambda a: pad2d(a, 2, "reflect"), [(1, 2, 5, 6)]),
        "pad2d_zero": (lambda a: pad2d(a, 1, "zero"), [(1, 2, 5, 6)]),
        "instance_norm": (instance_norm, [(2, 3, 5, 5)]),
    }


def _loss_ops(seed):
    rng = np.random.default_rng(seed)
    maps = crandn(rng, 3, 16, 16) / 2
    mask = generate_mask(16, 16, 3, (4, 4), seed).mask
    target = forward_model(Tensor(to_pairs(crandn(rng, 16, 16), np.float64)[None]), maps, mask)
    D = Discriminator(DiscriminatorConfig(in_channels=2, n_layers=3, base_width=4), seed=seed)
    for p in D.named_parameters().values():
        p.data = p.data.astype(np.float64) * 10
    # D sees the three coil images as a batch of two-channel inputs
    return {
        "L_i": lambda y: selective_image_loss(forward_model(y, maps, mask), target),
        "L_k": lambda y: selective_kspace_loss(forward_model(y, maps, mask), target, beta=2.0),
        "L_k_beta5000": lambda y: selective_kspace_loss(forward_model(y, maps, mask), target, beta=5000.0),
        "L_a": lambda y: adversarial_losses(D, target, forward_model(y, maps, mask))[0],
    }


def _cs_fd_error(seed):
    rng = np.random.default_rng(seed)
    m = generate_mask(16, 16, 3, (4, 4), seed).mask
    f = cs.SparseMRIObjective(m * fft2c(crandn(rng, 16, 16)), m,
                              cs.CsParams(lambda_tv=1e-2, lambda_wav=1e-2, levels=2, mu=1e-15))
    x = crandn(rng, 16, 16)
    g = f.gradient(x).ravel()
    num, ana = [], []
    for i in rng.choice(x.size, 12, replace=False):
        for unit, part in ((1.0, np.real), (1j, np.imag)):
            e = np.zeros(x.size, complex)
            e[i] = unit * 1e-6
            e = e.reshape(x.shape)
            num.append((f(x + e) - f(x - e)) / 2e-6)
            ana.append(part(g[i]))
    num, ana = np.array(num), np.array(ana)
    return float(np.linalg.norm(num - ana) / np.linalg.norm(num))


def test_gradient_suite(criterion):
    t0 = time.perf_counter()
    ops = _engine_ops()
    worst: dict[str, float] = {}
    for seed in range(3):
        rng = np.random.default_rng(seed)
        for name, (op, shapes) in ops.items():
            arrays = [rng.standard_normal(sh) for sh in shapes]
            err = gradcheck(lambda *ts: _weighted(op(*ts), 100 + seed), arrays)
            worst[name] = max(worst.get(name, 0.0), err)
        y0 = to_pairs(crandn(rng, 16, 16), np.float64)[None]
        for name, fn in _loss_ops(seed).items():
            worst[name] = max(worst.get(name, 0.0), gradcheck(fn, [y0], max_entries=40))
        worst["cs_objective"] = max(worst.get("cs_objective", 0.0), _cs_fd_error(seed))
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, v in worst.items() if not v < 1e-4}
    top = max(worst, key=worst.get)
    criterion("C1", not bad and elapsed < 120,
              f"gradient suite: {len(worst)} ops x 3 instances, worst rel err {worst[top]:.1e} ({top}), "
              f"{elapsed:.1f}s" + (f"; failing {sorted(bad)}" if bad else ""))


# -- 2: linear operators --------------------------------------------------------------------
def test_linear_operator_suite(criterion):
    rng = np.random.default_rng(0)
    x32 = crandn(rng, 4, 64, 64).astype(np.complex64)
    k32 = fft2c(x32)
    parseval = abs(float(np.linalg.norm(k32) / np.linalg.norm(x32)) - 1)
    roundtrip = float(np.max(np.abs(ifft2c(k32) - x32)) / np.max(np.abs(x32)))

    conv_err = 0.0
    for (cin, cout, k, stride, pad, H) in [(3, 4, 3, 1, 1, 9), (2, 5, 4, 2, 1, 16), (2, 3, 7, 1, 3, 12), (4, 2, 3, 2, 0, 11)]:
        x = rng.standard_normal((2, cin, H, H))
        w = rng.standard_normal((cout, cin, k, k))
        y = conv2d(Tensor(x), Tensor(w), stride=stride, padding=pad).data
        r = rng.standard_normal(y.shape)
        outpad = H - ((y.shape[2] - 1) * stride - 2 * pad + k)
        back = conv_transpose2d(Tensor(r), Tensor(w), stride=stride, padding=pad, output_padding=outpad).data
        conv_err = max(conv_err, abs(np.sum(y * r) - np.sum(x * back)) / abs(np.sum(y * r)))

    coil_err = 0.0
    for seed in range(3):
        r2 = np.random.default_rng(seed)
        C, img, Y = crandn(r2, 4, 32, 32), crandn(r2, 32, 32), crandn(r2, 4, 32, 32)
        lhs = np.vdot(Y, coil_project(img, C))
        coil_err = max(coil_err, abs(lhs - np.vdot(coil_adjoint(Y, C), img)) / abs(lhs))

    m = generate_mask(64, 64, 4, (16, 16), 3)
    a, b = crandn(rng, 4, 64, 64), crandn(rng, 4, 64, 64)
    pa = apply_mask(a, m)
    idempotent = np.array_equal(apply_mask(pa, m), pa)
    self_adjoint = np.vdot(pa, b) == np.vdot(a, apply_mask(b, m))

    ok = parseval < 1e-5 and roundtrip < 1e-5 and conv_err < 1e-10 and coil_err < 1e-10 and idempotent and self_adjoint
    criterion("C2", bool(ok),
              f"linear operators: fft32 parseval {parseval:.1e} roundtrip {roundtrip:.1e}; conv adjoint "
              f"{conv_err:.1e}; coil adjoint {coil_err:.1e}; mask idempotent={idempotent} self-adjoint={self_adjoint}")


# -- 3: selectivity ---------------------------------------------------------------------------
def _loss_pair(fake, real):
    return np.array([selective_image_loss(fake, real).item(), selective_kspace_loss(fake, real).item()])


def test_selectivity(criterion, multicoil):
    t0 = time.perf_counter()
    worst = {}

    # single coil: the perturbation's spectrum lies entirely on unacquired frequencies
    rng = np.random.default_rng(1)
    mask = generate_mask(64, 64, 4, (10, 10), 5).mask
    ones = np.ones((1, 64, 64), np.complex64)
    y_hat = to_pairs(crandn(rng, 64, 64))[None]
    real = forward_model(Tensor(to_pairs(crandn(rng, 64, 64))[None]), ones, mask)
    base = _loss_pair(forward_model(Tensor(y_hat), ones, mask), real)
    rel = 0.0
    for _ in range(100):
        delta = to_pairs(ifft2c(crandn(rng, 64, 64) * ~mask))[None]
        got = _loss_pair(forward_model(Tensor(y_hat + delta), ones, mask), real)
        rel = max(rel, float(np.max(np.abs(got - base) / base)))
    worst["single-coil image"] = rel

    # multi-coil: per-coil perturbations of the projected data on unacquired frequencies
    sample = prepare_samples(multicoil.split("train")[:1], TREND_CONFIGS["ssGAN-4"])[0]
    maps, mask = sample.target_maps, sample.target_mask
    real = Tensor(sample.target)
    projected = coil_project_op(Tensor(to_pairs(crandn(rng, 64, 64))[None]), maps).data
    base = _loss_pair(mask_op(Tensor(projected), mask), real)
    rel = 0.0
    for _ in range(100):
        delta = to_pairs(ifft2c(crandn(rng, 4, 64, 64) * ~mask))
        got = _loss_pair(mask_op(Tensor(projected + delta), mask), real)
        rel = max(rel, float(np.max(np.abs(got - base) / base)))
    worst["multi-coil data"] = rel

    # multi-coil: image perturbations in the null space of mask * F * coil projection
    small_maps = crandn(rng, 3, 16, 16) / 2
    small_mask = generate_mask(16, 16, 4, (4, 4), 2).mask
    cols = []
    for i in range(256):
        e = np.zeros(256, complex)
        e[i] = 1
        cols.append(fft2c(small_maps * e.reshape(16, 16))[:, small_mask].ravel())
    _, s, vh = np.linalg.svd(np.array(cols).T)
    null = vh[int(np.sum(s > 1e-10 * s[0])):].conj().T
    y_small = crandn(rng, 16, 16)
    real_small = forward_model(Tensor(to_pairs(crandn(rng, 16, 16), np.float64)[None]), small_maps, small_mask)

    def small_losses(img):
        return _loss_pair(forward_model(Tensor(to_pairs(img, np.float64)[None]), small_maps, small_mask), real_small)

    base = small_losses(y_small)
    rel = 0.0
    for _ in range(100):
        delta = (null @ crandn(rng, null.shape[1])).reshape(16, 16)
        delta *= np.linalg.norm(y_small) / np.linalg.norm(delta)
        rel = max(rel, float(np.max(np.abs(small_losses(y_small + delta) - base) / base)))
    worst["operator null space"] = rel

    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-5 for v in worst.values()) and elapsed < 60
    criterion("C3", ok, "selectivity over 3x100 perturbations, max rel change "
              + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s")


# -- 4: regime reductions ----------------------------------------------------------------------
def _trace(cfg, samples, steps=5):
    state = init_state(cfg)
    rows = []
    for i in range(steps):
        r = train_step(state, samples[i % len(samples)], cfg, 2e-4)
        rows.append((r.L_i, r.L_k, r.L_a_gen, r.L_a_disc, r.L_total))
    return rows


def test_regime_reductions(criterion, multicoil, singlecoil):
    recs = multicoil.split("train")
    ss_cfg = ExperimentConfig(regime="ssgan", r_source=2, r_target=1)
    fs_cfg = ExperimentConfig(regime="fsgan", r_source=2, r_target=1)
    ss_samples = prepare_samples(recs[:5], ss_cfg)
    for s in ss_samples:
        s.target_mask = np.ones(s.reference.shape, bool)
    ss_equals_fs = _trace(ss_cfg, ss_samples) == _trace(fs_cfg, prepare_samples(recs[:5], fs_cfg))

    cas_cfg = ExperimentConfig(regime="casgan", r_source=1, r_target=1)
    sup_cfg = ExperimentConfig(regime="supervised_full", r_source=1, r_target=1)
    stage1 = True
    for rec, s in zip(singlecoil.split("train"), prepare_samples(singlecoil.split("train"), cas_cfg)):
        k, _ = _acquire(rec, "T2", 1, 0)
        stage1 &= np.array_equal(s.target, to_pairs(ifft2c(k)))
    cas = run_experiment(cas_cfg, singlecoil)
    sup = run_experiment(sup_cfg, singlecoil)
    same_weights = all(v.tobytes() == sup.state.G.state_dict()[k].tobytes()
                       for k, v in cas.state.G.state_dict().items())
    same_trace = [h.L_total for h in cas.state.history] == [h.L_total for h in sup.state.history]
    same_metrics = cas.test.per_subject == sup.test.per_subject
    ok = ss_equals_fs and stage1 and same_weights and same_trace and same_metrics
    criterion("C4", bool(ok),
              f"regime reductions: ssGAN(all-ones mask)==fsGAN over 5 steps {ss_equals_fs}; CasGAN R=1 stage 1 == "
              f"inverse FFT {bool(stage1)}; full CasGAN R=1 run == supervised_full (weights {same_weights}, "
              f"trace {same_trace}, metrics {same_metrics})")


# -- 5: desk-scale trend ------------------------------------------------------------------------
def test_desk_trend(criterion, trend):
    _, runs = trend
    psnr_of = {k: r.test.summary()["PSNR"][0] for k, (r, _) in runs.items()}
    base = runs["fsGAN"][0].baseline.summary()["PSNR"][0]
    total = sum(t for _, t in runs.values())
    a = all(v >= base + 2.0 for v in psnr_of.values())
    b = psnr_of["ssGAN-2"] >= psnr_of["fsGAN"] - 2.0
    c = psnr_of["ssGAN-4"] >= psnr_of["fsGAN"] - 2.5
    detail = ", ".join(f"{k} {v:.2f}" for k, v in psnr_of.items())
    criterion("C5", a and b and c and total <= 1800,
              f"desk trend PSNR dB: {detail}; copy-source {base:.2f}; (a) {a} (b) {b} (c) {c}; {total:.0f}s")


# -- 6: CasGAN ordering and CS ------------------------------------------------------------------
def test_casgan_ordering(criterion, singlecoil):
    ss = run_experiment(ExperimentConfig(regime="ssgan", r_source=2, r_target=4), singlecoil)
    cas = run_experiment(ExperimentConfig(regime="casgan", r_source=2, r_target=4), singlecoil)
    p_ss, p_cas = ss.test.summary()["PSNR"][0], cas.test.summary()["PSNR"][0]
    gains = []
    for rec in singlecoil.split("test"):
        for c in singlecoil.contrasts:
            k, m = _acquire(rec, c, 2, 0)
            full, _ = _acquire(rec, c, 1, 0)
            ref = np.abs(ifft2c(full[0]))
            zf = subject_metrics(ref, np.abs(ifft2c(k[0])))["PSNR"]
            csr = subject_metrics(ref, np.abs(cs.sparsemri_reconstruct(k[0], m, "standalone").image))["PSNR"]
            gains.append(csr - zf)
    order_ok = p_ss >= p_cas - 0.5
    cs_ok = float(np.mean(gains)) >= 1.0 and min(gains) >= 1.0
    criterion("C6", order_ok and cs_ok,
              f"single-coil ssGAN-4 {p_ss:.2f} dB vs CasGAN-4 {p_cas:.2f} dB (slack 0.5); CS over zero-filled at "
              f"R=2 mean +{np.mean(gains):.2f} dB, min +{min(gains):.2f} dB over {len(gains)} volumes")


# -- 7: schedule ------------------------------------------------------------------------------
def test_schedule_exactness(criterion):
    got = [lr_schedule(e, 2e-4, 100, 50) for e in (10, 75, 99)]
    criterion("C7", got == [2e-4, 1e-4, 4e-6], f"lr at epochs 10/75/99 of 100: {got}")


# -- 8: metric oracles --------------------------------------------------------------------------
def test_metric_oracles(criterion):
    rng = np.random.default_rng(8)
    worst = {"PSNR": 0.0, "SSIM": 0.0, "MSE100": 0.0, "identity": 0.0}
    for _ in range(10):
        ref = np.abs(rng.standard_normal((24, 28))) + 0.1
        test = ref + rng.uniform(0.01, 0.4) * rng.standard_normal(ref.shape)
        worst["PSNR"] = max(worst["PSNR"], abs(psnr(ref, test) - psnr_loop(ref, test)))
        worst["SSIM"] = max(worst["SSIM"], abs(ssim(ref, test) - ssim_brute(ref, test)))
        worst["MSE100"] = max(worst["MSE100"], abs(mse100(ref, test) - mse100_loop(ref, test)))
        ident = 10 * np.log10(100 * ref.max() ** 2 / mse100(ref, test))
        worst["identity"] = max(worst["identity"], abs(psnr(ref, test) - ident))
    ok = worst["PSNR"] < 1e-6 and worst["SSIM"] < 1e-6 and worst["MSE100"] < 1e-6 and worst["identity"] < 1e-9
    criterion("C8", ok, "metric oracles on 10 pairs: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# -- 9: ESPIRiT -----------------------------------------------------------------------------------
def test_espirit_fidelity(criterion):
    map_err, rt_err = 0.0, 0.0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        labels = phantom_labels(64, 64, rng)
        img = render_contrast(labels, "T1", np.ones(labels.shape))
        sens = simulate_sensitivities(64, 64, 4, rng)
        k = fft2c(coil_project(img.astype(complex), sens)) + 0.002 * crandn(rng, 4, 64, 64)
        est = estimate_sensitivities_espirit(k, (24, 24))
        sup = (img > 0) & est.support()
        true = sens.maps / np.sqrt(np.sum(np.abs(sens.maps) ** 2, axis=0))
        phase = np.exp(1j * np.angle(np.sum(np.conj(est.maps) * true, axis=0)))
        diff = est.maps * phase - true
        map_err = max(map_err, float(np.sqrt(np.sum(np.abs(diff[:, sup]) ** 2) / np.sum(np.abs(true[:, sup]) ** 2))))
        coils = ifft2c(k)
        back = coil_project(coil_combine(coils, est), est)
        rt_err = max(rt_err, float(np.sqrt(np.mean(np.abs(back[:, sup] - coils[:, sup]) ** 2)
                                           / np.mean(np.abs(coils[:, sup]) ** 2))))
    criterion("C9", map_err < 5e-2 and rt_err < 1e-2,
              f"ESPIRiT on 3 simulated 4-coil subjects: map RMS {map_err:.2e}, roundtrip RMS {rt_err:.2e}")


# -- 10: ablations ----------------------------------------------------------------------------------
def test_ablation_harness(criterion, multicoil, tmp_path):
    cfg = ExperimentConfig(regime="ssgan", r_source=2, r_target=4, epochs=3, decay_start_epoch=1)
    runs = run_ablations(cfg, multicoil, tmp_path)
    traces = {k: tuple((h.L_i, h.L_k, h.L_a_gen) for h in r.state.history) for k, r in runs.items()}
    distinct = len(set(traces.values())) == len(traces)
    la_column = [line.split("\t")[3] for line in (tmp_path / "wo_adv" / "loss_curve.tsv").read_text().splitlines()]
    adv_zero = all(float(v) == 0.0 for v in la_column) and all(h.L_a_gen == 0 for h in runs["w/o adv"].state.history)
    complete = all(len(r.state.history) == cfg.epochs * len(multicoil.split("train")) for r in runs.values())
    criterion("C10", distinct and adv_zero and complete,
              f"ablations {sorted(runs)}: completed {complete}, distinct traces {distinct}, "
              f"w/o adv L_a identically zero {adv_zero}")


# -- 11: reproducibility -----------------------------------------------------------------------------
def test_reproducibility(criterion, multicoil, trend, tmp_path):
    root_a, _ = trend
    run_trend(multicoil, tmp_path)
    same = {}
    for name in TREND_CONFIGS:
        for f in ("report.tsv", "loss_curve.tsv", "model.ssck"):
            same[f"{name}/{f}"] = (root_a / name / f).read_bytes() == (tmp_path / name / f).read_bytes()
    diff = [k for k, v in same.items() if not v]
    criterion("C11", not diff, f"repeat of the trend runs: {len(same) - len(diff)}/{len(same)} files byte-equal"
              + (f"; differing {diff}" if diff else ""))
