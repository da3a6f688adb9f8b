"""Surrogate "real" dataset: seasonal forest trajectories seen through a biased sensor.

Each site gets a species, a base latent vector drawn from that species'
Gaussian, and 14 dates of seasonal modulation.  Spectra are the forward model's
output passed through a per-forest-type affine distortion plus Gaussian noise,
so the forward model is systematically wrong in a known, recoverable way.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError
from ..latent import scale_columns
from ..rtm.bands import BAND_NAMES
from ..rtm.model import ForwardModel
from ..variables import VARIABLES, VarRanges
from .dataset import CONIFEROUS, DECIDUOUS, FOREST_TYPE, N_DATES, SPECIES, Dataset

FOREST_TYPES = ("coniferous", "deciduous")
_IDX = {v: i for i, v in enumerate(VARIABLES)}

# Latent-space centre of each forest type, VARIABLES order.
TYPE_CENTRES = {
    "coniferous": np.array([0.30, 0.35, 0.50, 0.50, 0.45, 0.40, 0.75]),
    "deciduous": np.array([0.60, 0.60, 0.50, 0.50, 0.60, 0.55, 0.45]),
}
SPECIES_SPREAD = 0.07
SITE_STD = 0.045
DATE_JITTER = 0.01
SEASONAL_AMPLITUDE = {  # (LAI, LAIu, fc) amplitudes in latent units
    "coniferous": (0.06, 0.04, 0.015),
    "deciduous": (0.32, 0.20, 0.08),
}
_SPECIES_TABLE_SEED = 2018


def species_parameters():
    """Per-species latent mean and std, fixed independently of the dataset seed."""
    rng = np.random.default_rng(_SPECIES_TABLE_SEED)
    params = {}
    for species in SPECIES:
        centre = TYPE_CENTRES[FOREST_TYPE[species]]
        mean = np.clip(centre + rng.uniform(-SPECIES_SPREAD, SPECIES_SPREAD, centre.size), 0.05, 0.95)
        std = SITE_STD * rng.uniform(0.8, 1.2, centre.size)
        params[species] = (mean, std)
    return params


@dataclass
class BiasSpec:
    """Affine distortion ``gain * x + offset`` per forest type and band, plus noise std."""

    gains: dict
    offsets: dict
    noise: np.ndarray

    def __post_init__(self):
        n = len(BAND_NAMES)
        self.gains = {k: np.asarray(v, dtype=float) for k, v in self.gains.items()}
        self.offsets = {k: np.asarray(v, dtype=float) for k, v in self.offsets.items()}
        self.noise = np.broadcast_to(np.asarray(self.noise, dtype=float), (n,)).copy()
        for t in FOREST_TYPES:
            if t not in self.gains or t not in self.offsets:
                raise ValidationError(f"bias spec lacks forest type {t!r}")
            if self.gains[t].shape != (n,) or self.offsets[t].shape != (n,):
                raise ValidationError(f"bias spec for {t} needs {n} values per band")
            if np.any((self.gains[t] < 0.7) | (self.gains[t] > 1.3)):
                raise ValidationError("bias gains must lie in [0.7, 1.3]")
            if np.any(np.abs(self.offsets[t]) > 0.05):
                raise ValidationError("bias offsets must lie within +/-0.05")
        if np.any(self.noise < 0):
            raise ValidationError("noise std must be non-negative")

    @classmethod
    def default(cls, noise=0.005):
        """Simulated spectra come out too dark for conifers and too bright for broadleaves.

        Measured = gain * simulated + offset, flat across bands.
        """
        n = len(BAND_NAMES)
        return cls(
            {"coniferous": np.full(n, 1.25), "deciduous": np.full(n, 0.75)},
            {"coniferous": np.full(n, 0.02), "deciduous": np.full(n, -0.02)},
            noise,
        )

    @classmethod
    def identity(cls):
        ones, zeros = np.ones(len(BAND_NAMES)), np.zeros(len(BAND_NAMES))
        return cls({t: ones for t in FOREST_TYPES}, {t: zeros for t in FOREST_TYPES}, 0.0)

    def apply(self, x, forest_type):
        """Distort simulated spectra ``x`` (n, 11) row-wise by forest type (no noise)."""
        gain = np.stack([self.gains[t] for t in forest_type])
        offset = np.stack([self.offsets[t] for t in forest_type])
        return gain * x + offset

    def to_dict(self):
        return {
            "gains": {k: v.tolist() for k, v in self.gains.items()},
            "offsets": {k: v.tolist() for k, v in self.offsets.items()},
            "noise": self.noise.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["gains"], d["offsets"], d["noise"])


def seasonal_profile():
    """Zero-mean hump over the 14 dates, peaking mid-sequence."""
    t = np.arange(N_DATES)
    hump = np.sin(np.pi * t / (N_DATES - 1))
    return hump - hump.mean()


def generate_surrogate_real(n_sites=300, bias=None, seed=0, ranges=None, forward_model=None):
    """Generate ``n_sites * 14`` biased spectra with stored truth latents.

    Every site draws from its own RNG substream ``(seed, site)``, so the result
    does not depend on generation order.
    """
    if n_sites < 30:
        raise ValidationError("the surrogate needs at least 30 sites")
    bias = bias if bias is not None else BiasSpec.default()
    ranges = ranges or VarRanges()
    fm = forward_model or ForwardModel()
    params = species_parameters()
    profile = seasonal_profile()

    lam = np.empty((n_sites * N_DATES, len(VARIABLES)))
    species = []
    noise_draws = np.empty((n_sites * N_DATES, len(BAND_NAMES)))
    for site in range(n_sites):
        rng = np.random.default_rng([seed, site])
        sp = SPECIES[rng.integers(len(SPECIES))]
        mean, std = params[sp]
        base = np.clip(rng.normal(mean, std), 0.03, 0.97)
        traj = np.tile(base, (N_DATES, 1))
        a_lai, a_laiu, a_fc = SEASONAL_AMPLITUDE[FOREST_TYPE[sp]]
        traj[:, _IDX["LAI"]] += a_lai * profile
        traj[:, _IDX["LAIu"]] -= a_laiu * profile
        traj[:, _IDX["fc"]] += a_fc * profile
        traj += rng.normal(0.0, DATE_JITTER, traj.shape)
        rows = slice(site * N_DATES, (site + 1) * N_DATES)
        lam[rows] = np.clip(traj, 0.02, 0.98)
        noise_draws[rows] = rng.standard_normal((N_DATES, len(BAND_NAMES)))
        species.extend([sp] * N_DATES)

    species = np.array(species, dtype=object)
    clean = fm.reference(scale_columns(lam, ranges))
    spectra = bias.apply(clean, [FOREST_TYPE[s] for s in species])
    if np.any(bias.noise > 0):
        spectra = spectra + noise_draws * bias.noise
    idx = np.arange(len(lam))
    meta = {
        "kind": "surrogate",
        "seed": seed,
        "n_sites": n_sites,
        "ranges": ranges.as_dict(),
        "species_parameters": {s: {"mean": m.tolist(), "std": d.tolist()} for s, (m, d) in params.items()},
        "seasonal_amplitude": SEASONAL_AMPLITUDE,
    }
    return Dataset(spectra, idx // N_DATES, idx % N_DATES, species, lam, bias=bias, meta=meta)


__all__ = ["BiasSpec", "CONIFEROUS", "DECIDUOUS", "FOREST_TYPES", "generate_surrogate_real", "species_parameters"]
