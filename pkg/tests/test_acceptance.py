"""End-to-end acceptance checks, one test per criterion.

Each test records PASS/FAIL with a short detail line through
``record_acceptance``; the summary is printed at the end of the pytest run.
Thresholds are asserted as stated, so a failing criterion fails its test.
"""

import time

import numpy as np
import pytest

from rtm_invert import adcore as ad
from rtm_invert.data import generate_surrogate_real, sample_synthetic, split_by_site, standardize
from rtm_invert.eval import jm_distance, jm_from_b, jm_gaussian
from rtm_invert.eval.analysis import ablation_table, bias_recovery, range_report, separability, variable_recovery
from rtm_invert.gradcheck import check_forward, check_primitives
from rtm_invert.latent import cd_to_h, fc_to_cd, scale_columns, scale_to_physical
from rtm_invert.rtm import BAND_NAMES, ForwardModel
from rtm_invert.rtm.model import plate_transmission, plate_transmission_ad
from rtm_invert.train import TrainConfig, stabilize_gradients, train_model
from rtm_invert.variables import VarRanges

from conftest import record_acceptance

SEED = 7
RUN_LIMIT_S = 600.0


def _finish(number, checks):
    """Record and assert a list of ``(label, ok, detail)`` checks."""
    failed = [label for label, ok, _ in checks if not ok]
    detail = "; ".join(f"{label} {d}" for label, _, d in checks)
    record_acceptance(number, not failed, detail)
    assert not failed, f"failed: {failed} ({detail})"


@pytest.fixture(scope="session")
def surrogate():
    return standardize(split_by_site(generate_surrogate_real(300, seed=SEED), seed=SEED))


@pytest.fixture(scope="session")
def synthetic():
    return standardize(split_by_site(sample_synthetic(5040, seed=SEED), seed=SEED))


@pytest.fixture(scope="session")
def trained(surrogate, synthetic):
    runs, seconds = {}, {}
    for tag in ("ae", "ae_rtm", "ae_rtm_corr"):
        t0 = time.process_time()
        runs[tag] = train_model(TrainConfig(model=tag, seed=SEED), surrogate)
        seconds[tag] = time.process_time() - t0
    t0 = time.process_time()
    runs["nnreg"] = train_model(TrainConfig(model="nnreg", seed=SEED), synthetic)
    seconds["nnreg"] = time.process_time() - t0
    return runs, seconds


def test_criterion_1_forward_paths_agree():
    t0 = time.perf_counter()
    z = scale_columns(np.random.default_rng(SEED).random((10_000, 7)))
    fm = ForwardModel()
    ref = fm.reference(z)
    diff = fm.differentiable(ad.Tape().lift(z)).value
    elapsed = time.perf_counter() - t0
    gap = np.abs(ref - diff)
    mismatch = float(np.mean(gap > 1e-5))
    _finish(1, [
        ("mismatch", ref.size == 110_000 and mismatch <= 0.00457, f"{100 * mismatch:.3f}% of {ref.size}"),
        ("max|diff|", gap.max() <= 1e-6, f"{gap.max():.2e}"),
        ("runtime", elapsed <= 60, f"{elapsed:.1f}s"),
    ])


def test_criterion_2_gradients():
    t0 = time.perf_counter()
    fwd = check_forward(n_points=50, seed=SEED)
    prim = check_primitives(seed=SEED)
    elapsed = time.perf_counter() - t0
    worst_f = max(fwd, key=lambda c: c.max_rel_err)
    worst_p = max(prim, key=lambda c: c.max_rel_err)
    _finish(2, [
        ("forward", all(c.passed and c.tol <= 1e-3 for c in fwd), f"worst {worst_f.name} {worst_f.max_rel_err:.1e}"),
        ("primitives", all(c.passed and c.tol <= 1e-4 for c in prim),
         f"{len(prim)} checks, worst {worst_p.name} {worst_p.max_rel_err:.1e}"),
        ("runtime", elapsed <= 60, f"{elapsed:.1f}s"),
    ])


def test_criterion_3_closed_forms():
    r = VarRanges()
    lo = scale_to_physical(np.zeros(7)).to_array()
    hi = scale_to_physical(np.ones(7)).to_array()
    cd = float(fc_to_cd(1.0, 500.0))
    h = float(cd_to_h(1.0))
    e1 = float(ad.exp1(ad.Tape().lift(1.0)).value)
    tau_ref = float(plate_transmission(1.0))
    tau_ad = float(plate_transmission_ad(ad.Tape().lift(1.0)).value)
    _finish(3, [
        ("endpoints", lo.tolist() == list(r.lo) and hi.tolist() == list(r.hi), "exact"),
        ("cd", abs(cd - 5.046265) <= 1e-5, f"{cd:.6f}"),
        ("h(cd=1)", abs(h - 8.30745) <= 1e-4, f"{h:.6f} vs 8.30745"),
        ("E1(1)", abs(e1 - 0.2193839) <= 1e-6, f"{e1:.7f}"),
        ("tau1(1)=E1(1)", tau_ad == e1 and tau_ref == pytest.approx(e1, abs=1e-15), f"{tau_ad:.7f}"),
    ])


def test_criterion_4_stabilizer(small_synthetic):
    rng = np.random.default_rng(SEED)
    steps_per_epoch = int(np.ceil(small_synthetic.mask("train").sum() / 64))
    steps = tuple(sorted(rng.choice(20 * steps_per_epoch, size=3, replace=False).tolist()))
    cfg = TrainConfig(model="ae_rtm_corr", seed=SEED, max_epochs=20, patience=20, inject_nan_steps=steps)
    ck = train_model(cfg, small_synthetic)
    finite = all(np.isfinite(r["train_mse"]) and np.isfinite(r["val_mse"]) for r in ck.history)
    grads = [rng.normal(size=(11, 64)), np.zeros(64), rng.normal(size=7)]
    before = [g.tobytes() for g in grads]
    out = stabilize_gradients(grads, np.random.default_rng(0))
    noop = all(o.tobytes() == b for o, b in zip(out, before))
    _finish(4, [
        ("nan run", len(ck.history) == 20 and finite and ck.diagnostics["injected_nan_steps"] == 3,
         f"steps {list(steps)}, {len(ck.history)} epochs, finite={finite}"),
        ("no-op", noop, "bit-exact"),
    ])


def test_criterion_5_ablation(trained, surrogate):
    runs, seconds = trained
    rows = {r["model"]: r["test_mse"] for r in ablation_table(runs, surrogate)}
    ratio = rows["ae_rtm"] / rows["ae_rtm_corr"]
    rel = rows["ae_rtm_corr"] / rows["ae"]
    slowest = max(seconds[t] for t in ("ae", "ae_rtm", "ae_rtm_corr"))
    _finish(5, [
        ("ae_rtm/corr", ratio >= 3, f"{ratio:.2f}"),
        ("corr/ae", rel <= 1.5, f"{rel:.2f}"),
        ("cpu per run", slowest <= RUN_LIMIT_S, f"{slowest:.0f}s"),
    ])


def test_criterion_6_variable_recovery(trained, surrogate):
    runs, _ = trained
    test = surrogate.mask("test")
    x, truth = surrogate.spectra[test], surrogate.truth[test]
    corr = variable_recovery(runs["ae_rtm_corr"].model.latents(x), truth)["mean_pearson"]
    base = variable_recovery(runs["nnreg"].model.latents(x), truth)["mean_pearson"]
    _finish(6, [("pearson gap", corr - base >= 0.05, f"{corr:.3f} vs {base:.3f} (gap {corr - base:+.3f})")])


def test_criterion_7_bias_direction(trained, surrogate):
    runs, _ = trained
    rec = bias_recovery(runs["ae_rtm_corr"].model, surrogate, surrogate.mask("test"))
    con, dec = rec["learned_mean"]["coniferous"], rec["learned_mean"]["deciduous"]
    nir = [BAND_NAMES.index(b) for b in ("B7", "B8", "B8a")]
    opposite = bool(np.all(np.sign(con[nir]) == -np.sign(dec[nir])))
    off = [b for b, ok in zip(BAND_NAMES, rec["band_agrees"]) if not ok]
    _finish(7, [
        ("NIR opposite", opposite, f"con {np.round(con[nir], 4).tolist()} dec {np.round(dec[nir], 4).tolist()}"),
        ("bands matching", rec["bands_matching"] >= 10, f"{rec['bands_matching']}/11, mismatched {off}"),
    ])


def test_criterion_8_jm(trained, surrogate):
    rng = np.random.default_rng(SEED)
    ok_props, worst_sym = True, 0.0
    for _ in range(200):
        d = int(rng.integers(1, 5))
        a = rng.normal(rng.normal(size=d), rng.uniform(0.5, 2), size=(40, d))
        b = rng.normal(rng.normal(size=d), rng.uniform(0.5, 2), size=(40, d))
        ab, ba = jm_distance(a, b), jm_distance(b, a)
        worst_sym = max(worst_sym, abs(ab - ba))
        ok_props &= jm_distance(a, a) == 0.0 and 0.0 <= ab <= 2.0 and abs(ab - ba) <= 1e-12
    analytic = jm_gaussian([0.0], [[1.0]], [2.0], [[1.0]])
    _, _, sep = separability(trained[0]["ae_rtm_corr"].model.physical(surrogate.spectra), surrogate.species)
    _finish(8, [
        ("properties", ok_props, f"200 pairs, max asymmetry {worst_sym:.1e}"),
        ("B=0.5", abs(analytic - 0.786939) <= 1e-6 and abs(jm_from_b(0.5) - 0.786939) <= 1e-6, f"{analytic:.6f}"),
        ("species", sep["separated"],
         f"min between {sep['min_between']:.3f} > median within {sep['median_within']:.3f}"),
    ])


def test_criterion_9_protocol(trained, surrogate, tmp_path):
    runs, _ = trained
    checks = []
    long_runs = [t for t, ck in runs.items() if len(ck.history) > 50]
    drop_ok = bool(long_runs) and all(
        runs[t].history[49]["lr"] == 1e-3 and runs[t].history[50]["lr"] == pytest.approx(1e-4, rel=1e-12)
        for t in long_runs)
    checks.append(("lr drop at 50", drop_ok, f"checked {long_runs}"))
    stops = {t: ck.epoch - ck.best_epoch for t, ck in runs.items()}
    stop_ok = all(s <= 10 for s in stops.values()) and any(
        len(ck.history) < ck.config.max_epochs for ck in runs.values())
    checks.append(("early stop", stop_ok, f"epochs past best {stops}"))
    again = train_model(TrainConfig(model="ae_rtm_corr", seed=SEED), surrogate)
    runs["ae_rtm_corr"].write_history(tmp_path / "a.csv")
    again.write_history(tmp_path / "b.csv")
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    checks.append(("repeat run", same, "byte-identical history" if same else "histories differ"))
    _finish(9, checks)


def test_criterion_10_ranges(trained, surrogate):
    runs, _ = trained
    x = surrogate.spectra
    totals = {t: range_report(runs[t].model.physical(x))["total"] for t in runs}
    raw = runs["nnreg"].model.latents(x, clip=False)
    raw_viol = int(np.sum((raw < 0) | (raw > 1)))
    _finish(10, [
        ("emitted violations", all(v == 0 for v in totals.values()), str(totals)),
        ("nnreg raw violations", raw_viol > 0, f"{raw_viol} of {raw.size}"),
    ])
