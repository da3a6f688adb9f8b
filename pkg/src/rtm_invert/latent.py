"""Mapping between normalised latents in (0, 1) and physical variables.

Latents are the encoder's sigmoid outputs, one per variable in ``VARIABLES``
order.  Every function here works on floats, numpy arrays, and tape ``Var``
handles alike, so the same code serves the plain and differentiable paths.
"""

from dataclasses import dataclass

import numpy as np

from . import adcore as ad
from .exceptions import RangeError, ValidationError
from .variables import VARIABLES, PhysVars, VarRanges

LATENT_EPS = 1e-6
ALLOMETRY_INTERCEPT = 2.117
ALLOMETRY_SLOPE = 0.507


@dataclass
class LatentVars:
    """Normalised variables, shape ``(..., 7)``; each component strictly inside (0, 1)."""

    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.shape[-1] != len(VARIABLES):
            raise ValidationError(f"expected {len(VARIABLES)} latent components, got {self.lam.shape[-1]}")


def clamp_latent(lam):
    """Keep latents away from 0 and 1 so the inverse map and gradients stay finite."""
    if isinstance(lam, ad.Var):
        return ad.clip(lam, LATENT_EPS, 1.0 - LATENT_EPS)
    return np.clip(lam, LATENT_EPS, 1.0 - LATENT_EPS)


def scale_to_physical(lam, ranges=None, sd=500.0):
    """Z = (max - min) * lam + min, applied per variable.

    ``lam`` is an array of shape ``(..., 7)`` or a :class:`LatentVars`.
    Returns :class:`PhysVars` with the allometric ``cd`` and ``h`` filled in.
    """
    ranges = ranges or VarRanges()
    if isinstance(lam, LatentVars):
        lam = lam.lam
    z = np.asarray(lam, dtype=float) * ranges.width_array + ranges.lo_array
    return PhysVars.from_array(z, sd=sd)


def scale_columns(lam, ranges=None):
    """Affine latent -> physical map returning a plain array or a ``Var``."""
    ranges = ranges or VarRanges()
    return lam * ranges.width_array + ranges.lo_array


def physical_to_latent(z, ranges=None):
    """Inverse of :func:`scale_to_physical`; raises :class:`RangeError` outside ``ranges``."""
    ranges = ranges or VarRanges()
    arr = z.to_array() if isinstance(z, PhysVars) else np.asarray(z, dtype=float)
    for j, (name, lo, hi) in enumerate(zip(VARIABLES, ranges.lo, ranges.hi)):
        col = np.atleast_1d(arr[..., j])
        bad = ~((col >= lo) & (col <= hi))
        if np.any(bad):
            raise RangeError(name, float(col[bad][0]), lo, hi)
    return LatentVars((arr - ranges.lo_array) / ranges.width_array)


def fc_to_cd(fc, sd=500.0):
    """Crown diameter (m) from fractional cover and stem density (stems/ha)."""
    if isinstance(fc, ad.Var):
        return 2.0 * ad.sqrt(fc * (10000.0 / (np.pi * sd)))
    return 2.0 * np.sqrt(np.asarray(fc, dtype=float) * 10000.0 / (np.pi * sd))


def cd_to_h(cd):
    """Tree height (m) from crown diameter through the temperate-forest allometry."""
    if isinstance(cd, ad.Var):
        return ad.exp(ALLOMETRY_INTERCEPT + ALLOMETRY_SLOPE * ad.log(cd))
    return np.exp(ALLOMETRY_INTERCEPT + ALLOMETRY_SLOPE * np.log(np.asarray(cd, dtype=float)))


def cd_to_fc(cd, sd=500.0):
    return np.pi * sd * (np.asarray(cd, dtype=float) / 2.0) ** 2 / 10000.0
