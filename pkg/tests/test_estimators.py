import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rtm_invert.data import sample_synthetic
from rtm_invert.estimators import NNRegressor, RTMInverter, SpectraStandardizer
from rtm_invert.exceptions import ValidationError
from rtm_invert.latent import scale_columns
from rtm_invert.variables import VarRanges


@pytest.fixture(scope="module")
def data():
    ds = sample_synthetic(280, seed=8)
    return ds.spectra, scale_columns(ds.truth), ds.site_id


def test_params_and_clone():
    est = RTMInverter(model="ae_rtm", hidden=16, max_epochs=2)
    params = est.get_params()
    assert params["model"] == "ae_rtm" and params["hidden"] == 16
    c = clone(est)
    assert c.get_params() == params and c is not est
    c.set_params(lr=5e-4)
    assert c.lr == 5e-4 and est.lr == 1e-3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        RTMInverter().predict(np.zeros((2, 11)))


def test_standardizer_roundtrip(data):
    X = data[0]
    s = SpectraStandardizer().fit(X)
    np.testing.assert_allclose(s.inverse_transform(s.transform(X)), X, rtol=1e-12)


def test_inverter_fit_predict(data):
    X, _, groups = data
    est = RTMInverter(hidden=16, max_epochs=2, random_state=1).fit(X, groups=groups)
    z = est.predict(X)
    r = VarRanges()
    assert z.shape == (len(X), 7)
    assert np.all(z >= r.lo_array) and np.all(z <= np.asarray(r.hi))
    lam = est.transform(X)
    assert np.all((lam > 0) & (lam < 1))
    assert est.inverse_transform(z).shape == X.shape
    assert est.score(X) < 0 and len(est.history_) == 2


def test_inverter_is_deterministic(data):
    X, _, groups = data
    a = RTMInverter(hidden=8, max_epochs=1).fit(X, groups=groups).predict(X[:5])
    b = RTMInverter(hidden=8, max_epochs=1).fit(X, groups=groups).predict(X[:5])
    np.testing.assert_array_equal(a, b)


def test_inverter_rejects_bad_model(data):
    with pytest.raises(ValidationError):
        RTMInverter(model="nnreg").fit(data[0])


def test_inverter_rejects_wrong_width():
    with pytest.raises(ValidationError):
        RTMInverter(max_epochs=1).fit(np.zeros((40, 10)))


def test_regressor(data):
    X, y, groups = data
    est = NNRegressor(hidden=16, max_epochs=3).fit(X, y, groups=groups)
    pred = est.predict(X)
    r = VarRanges()
    assert np.all(pred >= r.lo_array - 1e-12) and np.all(pred <= np.asarray(r.hi) + 1e-12)
    assert est.predict_raw(X).shape == pred.shape
    assert np.isfinite(est.latent_mse(X, y))
    assert est.score(X, y) <= 1


def test_regressor_shape_check(data):
    X, y, _ = data
    with pytest.raises(ValidationError):
        NNRegressor(max_epochs=1).fit(X, y[:, :5])
