import numpy as np
import pytest

from rtm_invert.data import (
    CONIFEROUS, DECIDUOUS, FOREST_TYPE, N_DATES, SPECIES, BiasSpec, Dataset, canonical_species, check_no_leakage,
    generate_surrogate_real, ingest_csv, load_dataset, sample_synthetic, save_dataset, split_by_site, standardize,
)
from rtm_invert.data.surrogate import seasonal_profile, species_parameters
from rtm_invert.exceptions import DataFormatError, ValidationError
from rtm_invert.latent import scale_columns
from rtm_invert.rtm import BAND_NAMES, ForwardModel


@pytest.fixture(scope="module")
def surrogate():
    return standardize(split_by_site(generate_surrogate_real(40, seed=11), seed=11))


def test_species_lists():
    assert len(CONIFEROUS) == 5 and len(DECIDUOUS) == 7 and len(SPECIES) == 12
    assert FOREST_TYPE["Larix decidua"] == "coniferous"


def test_species_normalisation():
    assert canonical_species("Picea Abies") == "Picea abies"
    assert canonical_species("  fagus   SYLVATICA ") == "Fagus sylvatica"
    assert canonical_species("Eucalyptus") is None


def test_synthetic_is_forward_model_output():
    ds = sample_synthetic(28, seed=2)
    np.testing.assert_allclose(ds.spectra, ForwardModel().reference(scale_columns(ds.truth)), rtol=1e-15)
    assert ds.site_id.tolist() == [0] * 14 + [1] * 14
    assert np.all((ds.truth >= 0) & (ds.truth <= 1))


def test_synthetic_deterministic():
    np.testing.assert_array_equal(sample_synthetic(50, seed=4).spectra, sample_synthetic(50, seed=4).spectra)


def test_surrogate_shape_and_labels(surrogate):
    assert len(surrogate) == 40 * N_DATES
    assert set(surrogate.date_index) == set(range(N_DATES))
    for s in surrogate.sites:
        assert len(set(surrogate.species[surrogate.site_id == s])) == 1
    assert surrogate.bias is not None


def test_surrogate_deterministic():
    a, b = generate_surrogate_real(30, seed=3), generate_surrogate_real(30, seed=3)
    np.testing.assert_array_equal(a.spectra, b.spectra)
    np.testing.assert_array_equal(a.truth, b.truth)
    assert not np.array_equal(a.spectra, generate_surrogate_real(30, seed=4).spectra)


def test_surrogate_is_biased_forward_model():
    bias = BiasSpec.default(noise=0.0)
    ds = generate_surrogate_real(30, bias=bias, seed=5)
    clean = ForwardModel().reference(scale_columns(ds.truth))
    np.testing.assert_allclose(ds.spectra, bias.apply(clean, ds.forest_type), rtol=1e-14)


def test_default_bias_direction():
    b = BiasSpec.default()
    assert np.all(b.gains["coniferous"] > 1) and np.all(b.gains["deciduous"] < 1)
    assert np.all(b.offsets["coniferous"] > 0) and np.all(b.offsets["deciduous"] < 0)


def test_bias_spec_limits():
    ones = np.ones(11)
    with pytest.raises(ValidationError):
        BiasSpec({"coniferous": ones * 1.5, "deciduous": ones}, {"coniferous": ones * 0, "deciduous": ones * 0}, 0.0)
    with pytest.raises(ValidationError):
        BiasSpec({"coniferous": ones, "deciduous": ones}, {"coniferous": ones * 0.1, "deciduous": ones * 0}, 0.0)
    with pytest.raises(ValidationError):
        BiasSpec({"coniferous": ones}, {"coniferous": ones}, 0.0)


def test_bias_spec_roundtrip():
    b = BiasSpec.default()
    c = BiasSpec.from_dict(b.to_dict())
    for t in ("coniferous", "deciduous"):
        np.testing.assert_array_equal(b.gains[t], c.gains[t])


def test_seasonal_pattern(surrogate):
    prof = seasonal_profile()
    assert prof.argmax() in (6, 7) and abs(prof.mean()) < 1e-15
    lai, laiu = 4, 5
    ft = surrogate.forest_type
    for t in ("coniferous", "deciduous"):
        m = ft == t
        lai_series = [surrogate.truth[m & (surrogate.date_index == d), lai].mean() for d in range(N_DATES)]
        laiu_series = [surrogate.truth[m & (surrogate.date_index == d), laiu].mean() for d in range(N_DATES)]
        assert np.corrcoef(lai_series, prof)[0, 1] > 0.8
        assert np.corrcoef(laiu_series, prof)[0, 1] < -0.5
    rng = {t: np.ptp([surrogate.truth[(ft == t) & (surrogate.date_index == d), lai].mean() for d in range(N_DATES)])
           for t in ("coniferous", "deciduous")}
    assert rng["deciduous"] > rng["coniferous"]


def test_species_parameters_fixed():
    a, b = species_parameters(), species_parameters()
    assert set(a) == set(SPECIES)
    np.testing.assert_array_equal(a["Picea abies"][0], b["Picea abies"][0])


def test_surrogate_needs_30_sites():
    with pytest.raises(ValidationError):
        generate_surrogate_real(10)


def test_split_by_site_no_leakage(surrogate):
    check_no_leakage(surrogate)
    counts = {s: len(set(surrogate.site_id[surrogate.split == s])) for s in ("train", "val", "test")}
    assert counts == {"train": 28, "val": 6, "test": 6}


def test_split_validation():
    ds = sample_synthetic(28)
    with pytest.raises(ValidationError):
        split_by_site(ds)
    with pytest.raises(ValidationError):
        split_by_site(sample_synthetic(140), fractions=(0.5, 0.5, 0.5))


def test_leakage_detected(surrogate):
    from dataclasses import replace
    split = surrogate.split.copy()
    first = np.flatnonzero(surrogate.site_id == surrogate.site_id[0])
    split[first[0]] = "test" if split[first[1]] != "test" else "train"
    with pytest.raises(ValidationError):
        check_no_leakage(replace(surrogate, split=split))


def test_standardize_uses_train_only(surrogate):
    train = surrogate.spectra[surrogate.mask("train")]
    np.testing.assert_allclose(surrogate.stats["mean"], train.mean(axis=0))
    z = surrogate.standardized()[surrogate.mask("train")]
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)


def test_dataset_roundtrip(surrogate, tmp_path):
    save_dataset(surrogate, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    np.testing.assert_array_equal(back.spectra, surrogate.spectra)
    np.testing.assert_array_equal(back.truth, surrogate.truth)
    assert list(back.split) == list(surrogate.split)
    np.testing.assert_array_equal(back.bias.gains["coniferous"], surrogate.bias.gains["coniferous"])
    save_dataset(back, tmp_path / "e")
    assert (tmp_path / "d" / "records.csv").read_bytes() == (tmp_path / "e" / "records.csv").read_bytes()


def test_dataset_shape_checks():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((3, 10)), [0, 0, 0], [0, 1, 2], ["x"] * 3)
    with pytest.raises(ValidationError):
        Dataset(np.zeros((3, 11)), [0, 0], [0, 1, 2], ["x"] * 3)


def _write_csv(path, rows, header=None):
    header = header or ["site_id", "date", "species", *BAND_NAMES]
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")


def test_ingest_valid(tmp_path):
    rows = [[s, d, "Picea Abies" if s else "fagus sylvatica", *([0.1] * 11)] for s in range(3) for d in range(14)]
    p = tmp_path / "real.csv"
    _write_csv(p, rows)
    ds = ingest_csv(p)
    assert len(ds) == 42 and ds.truth is None
    assert set(ds.species) == {"Picea abies", "Fagus sylvatica"}


def test_ingest_iso_dates_ranked(tmp_path):
    rows = [[0, f"2019-0{m}-01", "Quercus spp", *([0.2] * 11)] for m in (5, 3, 4)]
    p = tmp_path / "real.csv"
    _write_csv(p, rows)
    assert ingest_csv(p).date_index.tolist() == [2, 0, 1]


def test_ingest_rejects_many_bad_rows(tmp_path):
    rows = [[0, d, "Quercus spp", *([0.2] * 11)] for d in range(14)]
    rows[3][5] = "nan"
    rows[4][2] = "Eucalyptus"
    p = tmp_path / "bad.csv"
    _write_csv(p, rows)
    with pytest.raises(DataFormatError) as err:
        ingest_csv(p)
    lines = [line for line, _ in err.value.row_errors]
    assert lines == [5, 6]


def test_ingest_drops_few_bad_rows(tmp_path):
    rows = [[s, d % 14, "Quercus spp", *([0.2] * 11)] for s in range(10) for d in range(14)]
    rows[7][4] = 1.7
    p = tmp_path / "ok.csv"
    _write_csv(p, rows)
    ds = ingest_csv(p)
    assert len(ds) == 139 and ds.meta["row_errors"][0][0] == 9


def test_ingest_missing_column(tmp_path):
    p = tmp_path / "m.csv"
    _write_csv(p, [[0, 0, "Quercus spp", *([0.2] * 10)]], header=["site_id", "date", "species", *BAND_NAMES[:-1]])
    with pytest.raises(DataFormatError):
        ingest_csv(p)
