"""scikit-learn style wrappers around the training and inference code.

``RTMInverter`` covers the three auto-encoder set-ups (``transform`` gives
latents, ``predict`` physical variables, ``inverse_transform`` simulated
spectra).  ``NNRegressor`` is the supervised baseline and is usually fitted
on forward-model samples from :func:`rtm_invert.data.sample_synthetic`.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data.dataset import (
    N_DATES, SYNTHETIC_SPECIES, Dataset, apply_standardization, compute_stats, invert_standardization,
)
from .exceptions import ValidationError
from .latent import scale_columns
from .train.config import TrainConfig
from .train.loops import train_model
from .train.optim import mse
from .variables import VARIABLES, VarRanges

N_BANDS = 11


def _check_spectra(X):
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != N_BANDS:
        raise ValidationError(f"expected {N_BANDS} bands, got {X.shape[1]}")
    return X


def _holdout_dataset(X, y, groups, validation_fraction, seed):
    """Dataset with a site-level train/validation assignment (no test split)."""
    n = len(X)
    groups = np.arange(n) // N_DATES if groups is None else np.asarray(groups)
    if len(groups) != n:
        raise ValidationError("groups must have one entry per sample")
    sites = np.unique(groups)
    if len(sites) < 2:
        raise ValidationError("need at least two groups to hold out a validation set")
    if not 0 < validation_fraction < 1:
        raise ValidationError("validation_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(sites)
    n_val = min(max(1, int(round(validation_fraction * len(sites)))), len(sites) - 1)
    val_sites = set(order[:n_val].tolist())
    split = np.array(["val" if g in val_sites else "train" for g in groups.tolist()], dtype=object)
    site_codes = np.unique(groups, return_inverse=True)[1]
    ds = Dataset(X, site_codes, np.arange(n) % N_DATES, [SYNTHETIC_SPECIES] * n, y, split=split)
    ds.stats = compute_stats(X[split == "train"])
    return ds


class _TrainedMixin:
    """Shared constructor parameters and config assembly."""

    def _config(self, tag):
        return TrainConfig(
            model=tag, batch_size=self.batch_size, lr=self.lr, weight_decay=self.weight_decay,
            max_epochs=self.max_epochs, patience=self.patience, seed=self.random_state,
            hidden=self.hidden, stabilizer=self.stabilizer,
        )

    def _ranges(self):
        return self.ranges if self.ranges is not None else VarRanges()


class SpectraStandardizer(TransformerMixin, BaseEstimator):
    """Per-band z-scoring with statistics from the data passed to ``fit``."""

    def fit(self, X, y=None):
        X = _check_spectra(X)
        stats = compute_stats(X)
        self.mean_, self.scale_ = stats["mean"], stats["std"]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        return apply_standardization(_check_spectra(X), {"mean": self.mean_, "std": self.scale_})

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        return invert_standardization(X, {"mean": self.mean_, "std": self.scale_})


class RTMInverter(_TrainedMixin, TransformerMixin, BaseEstimator):
    """Physics-constrained auto-encoder inversion of 11-band spectra.

    Parameters
    ----------
    model : {"ae_rtm_corr", "ae_rtm", "ae"}
        ``ae`` has a free decoder and therefore no physical interpretation of
        its latents beyond their (0, 1) range.
    groups passed to ``fit`` identify sites; whole sites are held out for
    early stopping.
    """

    def __init__(self, model="ae_rtm_corr", batch_size=64, lr=1e-3, weight_decay=1e-4, max_epochs=100,
                 patience=10, hidden=64, stabilizer=True, validation_fraction=0.15, random_state=0,
                 ranges=None):
        self.model = model
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.hidden = hidden
        self.stabilizer = stabilizer
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.ranges = ranges

    def fit(self, X, y=None, groups=None):
        if self.model not in ("ae", "ae_rtm", "ae_rtm_corr"):
            raise ValidationError(f"RTMInverter model must be ae, ae_rtm or ae_rtm_corr, not {self.model!r}")
        X = _check_spectra(X)
        ds = _holdout_dataset(X, None, groups, self.validation_fraction, self.random_state)
        ckpt = train_model(self._config(self.model), ds, ranges=self._ranges())
        self.checkpoint_ = ckpt
        self.model_ = ckpt.model
        self.history_ = ckpt.history
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Latent variables in (0, 1), one column per entry of ``VARIABLES``."""
        check_is_fitted(self, "model_")
        return self.model_.latents(_check_spectra(X))

    def predict(self, X):
        """Physical variables, always inside the configured ranges."""
        check_is_fitted(self, "model_")
        return self.model_.physical(_check_spectra(X))

    def inverse_transform(self, Z):
        """Spectra for physical variables ``Z`` (forward model plus learned correction)."""
        check_is_fitted(self, "model_")
        Z = check_array(Z, dtype=np.float64)
        if Z.shape[1] != len(VARIABLES):
            raise ValidationError(f"expected {len(VARIABLES)} variables, got {Z.shape[1]}")
        if self.model_.tag == "ae":
            from .nets import mlp_forward
            lam = (Z - self._ranges().lo_array) / self._ranges().width_array
            return invert_standardization(mlp_forward(self.model_.components["decoder"], lam), self.model_.stats)
        return self.model_.correct(self.model_.simulate(Z))

    def reconstruct(self, X):
        check_is_fitted(self, "model_")
        return self.model_.reconstruct(_check_spectra(X))

    def score(self, X, y=None):
        """Negative reconstruction MSE in the training standardization space."""
        check_is_fitted(self, "model_")
        X = _check_spectra(X)
        return -mse(self.model_.reconstruct_standardized(X), self.model_.standardize(X))


class NNRegressor(_TrainedMixin, RegressorMixin, BaseEstimator):
    """Supervised spectra -> variables network (the classical inversion baseline).

    ``fit`` takes physical variables ``y`` (``target="physical"``) or
    normalised latents (``target="latent"``).  ``predict`` clips to the
    ranges; ``predict_raw`` exposes the unconstrained output.
    """

    def __init__(self, target="physical", batch_size=64, lr=1e-3, weight_decay=1e-4, max_epochs=100,
                 patience=10, hidden=64, stabilizer=True, validation_fraction=0.15, random_state=0,
                 ranges=None):
        self.target = target
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.hidden = hidden
        self.stabilizer = stabilizer
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.ranges = ranges

    def _to_latent(self, y):
        r = self._ranges()
        return (y - r.lo_array) / r.width_array if self.target == "physical" else y

    def fit(self, X, y, groups=None):
        if self.target not in ("physical", "latent"):
            raise ValidationError("target must be 'physical' or 'latent'")
        X = _check_spectra(X)
        y = check_array(y, dtype=np.float64)
        if y.shape != (len(X), len(VARIABLES)):
            raise ValidationError(f"y must have shape ({len(X)}, {len(VARIABLES)})")
        ds = _holdout_dataset(X, self._to_latent(y), groups, self.validation_fraction, self.random_state)
        ckpt = train_model(self._config("nnreg"), ds, ranges=self._ranges())
        self.checkpoint_ = ckpt
        self.model_ = ckpt.model
        self.history_ = ckpt.history
        self.n_features_in_ = X.shape[1]
        return self

    def predict_raw(self, X):
        check_is_fitted(self, "model_")
        lam = self.model_.latents(_check_spectra(X), clip=False)
        return scale_columns(lam, self._ranges()) if self.target == "physical" else lam

    def predict(self, X):
        check_is_fitted(self, "model_")
        lam = np.clip(self.model_.latents(_check_spectra(X), clip=False), 0.0, 1.0)
        return scale_columns(lam, self._ranges()) if self.target == "physical" else lam

    def latent_mse(self, X, y):
        """MSE against ``y`` in normalised latent units, on unclipped predictions."""
        check_is_fitted(self, "model_")
        y = check_array(y, dtype=np.float64)
        return mse(self.model_.latents(_check_spectra(X), clip=False), self._to_latent(y))


__all__ = ["NNRegressor", "RTMInverter", "SpectraStandardizer"]
