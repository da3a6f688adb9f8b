"""Uniform sampling of the forward model: the synthetic training set for regression."""

import numpy as np

from ..latent import scale_columns
from ..rtm.model import ForwardModel
from ..variables import VarRanges
from .dataset import N_DATES, SYNTHETIC_SPECIES, Dataset


def sample_synthetic(n, ranges=None, seed=0, noise=0.0, forward_model=None):
    """Draw ``n`` latents uniformly from (0, 1)^7 and simulate their spectra.

    Records are grouped into pseudo-sites of 14 so that site-level splitting
    behaves as it does for the real data.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    ranges = ranges or VarRanges()
    fm = forward_model or ForwardModel()
    rng = np.random.default_rng(seed)
    lam = rng.random((n, 7))
    spectra = fm.reference(scale_columns(lam, ranges))
    if noise > 0:
        spectra = spectra + rng.normal(0.0, noise, spectra.shape)
    idx = np.arange(n)
    meta = {"kind": "synthetic", "seed": seed, "noise": noise, "ranges": ranges.as_dict()}
    return Dataset(spectra, idx // N_DATES, idx % N_DATES, [SYNTHETIC_SPECIES] * n, lam, meta=meta)
