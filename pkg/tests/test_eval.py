import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtm_invert.data import generate_surrogate_real, split_by_site, standardize
from rtm_invert.eval import (
    REPORT_FILES, ablation_checks, band_residuals, build_report, config_hash, histograms, jm_distance, jm_from_b,
    jm_gaussian, jm_matrix, pearson_per_variable, range_violations, species_stats, split_within_between,
    temporal_series, write_report,
)
from rtm_invert.exceptions import ValidationError
from rtm_invert.train import TrainConfig, train_model
from rtm_invert.variables import VarRanges


def test_jm_analytic_value():
    assert jm_from_b(0.5) == pytest.approx(0.786939, abs=1e-6)
    # two 1-d unit Gaussians two standard deviations apart: B = 4 / 8 = 0.5
    assert jm_gaussian([0.0], [[1.0]], [2.0], [[1.0]]) == pytest.approx(0.786939, abs=1e-6)


def test_jm_identical_is_zero():
    x = np.random.default_rng(0).normal(size=(50, 3))
    assert jm_distance(x, x) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_jm_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(rng.normal(size=3), 1.0, size=(30, 3))
    b = rng.normal(rng.normal(size=3), 2.0, size=(30, 3))
    d1, d2 = jm_distance(a, b), jm_distance(b, a)
    assert d1 == pytest.approx(d2, rel=1e-12)
    assert 0.0 <= d1 <= 2.0


def test_jm_far_apart_saturates():
    a = np.random.default_rng(1).normal(size=(40, 2))
    assert jm_distance(a, a + 100.0) == pytest.approx(2.0)


def test_jm_too_few_samples():
    with pytest.raises(ValidationError):
        jm_distance(np.zeros((3, 3)), np.ones((3, 3)))


def test_jm_matrix_handles_small_classes():
    rng = np.random.default_rng(2)
    values = np.vstack([rng.normal(size=(20, 2)), rng.normal(3, 1, size=(20, 2)), rng.normal(size=(2, 2))])
    labels = ["a"] * 20 + ["b"] * 20 + ["c"] * 2
    m, classes = jm_matrix(values, labels)
    assert classes == ["a", "b", "c"]
    assert np.isnan(m[0, 2]) and m[2, 2] == 0 and m[0, 1] == m[1, 0] > 1


def test_within_between_split():
    m = np.array([[0, 0.1, 1.9], [0.1, 0, 1.8], [1.9, 1.8, 0]])
    w, b = split_within_between(m, ["x", "y", "z"], {"x": "A", "y": "A", "z": "B"})
    assert w.tolist() == [0.1] and sorted(b.tolist()) == [1.8, 1.9]


def test_pearson():
    t = np.random.default_rng(3).random((100, 2))
    r = pearson_per_variable(np.column_stack([2 * t[:, 0] + 1, -t[:, 1]]), t)
    np.testing.assert_allclose(r, [1.0, -1.0])
    assert np.isnan(pearson_per_variable(np.ones((5, 1)), np.arange(5.0)[:, None])[0])


def test_range_violations():
    r = VarRanges()
    z = np.array([r.lo, r.hi, np.array(r.hi) + 1])
    v = range_violations(z, r)
    assert sum(v.values()) == 7


def test_band_residuals_convention_and_stats():
    a = np.ones((4, 11))
    b = np.zeros((4, 11))
    rows = band_residuals(a, b, ["g"] * 4, "bias")
    assert len(rows) == 11 and rows[0]["mean"] == 1.0 and rows[0]["q50"] == 1.0
    with pytest.raises(ValidationError):
        band_residuals(a, b, ["g"] * 4, "other")


def test_species_and_temporal_tables():
    z = np.arange(28 * 7, dtype=float).reshape(28, 7)
    rows = species_stats(z, ["Picea abies"] * 14 + ["Quercus spp"] * 14)
    assert [r["species"] for r in rows] == ["Picea abies", "Quercus spp"]
    series = temporal_series(z, np.tile(np.arange(14), 2), ["c"] * 14 + ["d"] * 14)
    assert series[("c", "N")][0] == 0.0 and len(series[("d", "fc")]) == 14


def test_histograms_have_50_bins():
    rows = histograms(np.random.default_rng(0).random((30, 11)), ["a"] * 30)
    assert len(rows) == 11 * 50 and sum(r["count"] for r in rows if r["column"] == "B2") == 30


def test_ablation_checks():
    rows = [{"model": "ae", "test_mse": 0.01}, {"model": "ae_rtm", "test_mse": 0.09},
            {"model": "ae_rtm_corr", "test_mse": 0.012}]
    c = ablation_checks(rows)
    assert c["ordering_holds"] and c["rtm_over_corr"] == pytest.approx(7.5)


def test_config_hash_stable():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})


def test_report_bundle(tmp_path):
    ds = standardize(split_by_site(generate_surrogate_real(40, seed=2), seed=2))
    cks = {t: train_model(TrainConfig(model=t, max_epochs=1, hidden=8), ds) for t in ("ae_rtm", "ae_rtm_corr")}
    report = build_report(cks, ds)
    write_report(report, tmp_path)
    for name in REPORT_FILES + ("report.json",):
        assert (tmp_path / name).exists()
    summary = json.loads((tmp_path / "report.json").read_text())
    assert summary["primary_model"] == "ae_rtm_corr"
    assert all(v["total"] == 0 for v in summary["range_violations"].values())
    jm_lines = (tmp_path / "jm_matrix.csv").read_text().splitlines()
    assert len(jm_lines) == 13
