"""Sentinel-2 band definitions and spectral resampling."""

import csv
from dataclasses import dataclass

import numpy as np

from .. import adcore as ad
from ..exceptions import BandError

SENTINEL2_BANDS = (
    ("B2", 490.0), ("B3", 560.0), ("B4", 665.0), ("B5", 705.0), ("B6", 740.0),
    ("B7", 783.0), ("B8", 842.0), ("B8a", 865.0), ("B9", 940.0), ("B11", 1610.0),
    ("B12", 2190.0),
)
BAND_NAMES = tuple(name for name, _ in SENTINEL2_BANDS)


@dataclass(frozen=True)
class BandSet:
    names: tuple = BAND_NAMES
    centers: tuple = tuple(c for _, c in SENTINEL2_BANDS)
    halfwidths: tuple = None

    def __post_init__(self):
        if len(self.names) != len(self.centers):
            raise BandError("band names and centers differ in length")
        if self.halfwidths is not None and len(self.halfwidths) != len(self.centers):
            raise BandError("one half-width per band is required")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)


def load_band_set(path):
    """Read ``name,center_nm[,halfwidth_nm]`` rows."""
    names, centers, widths = [], [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("name", "") or row[0].startswith("#"):
                continue
            try:
                names.append(row[0].strip())
                centers.append(float(row[1]))
                if len(row) > 2 and row[2].strip():
                    widths.append(float(row[2]))
            except (IndexError, ValueError) as exc:
                raise BandError(f"{path}: malformed band row {row!r}") from exc
    if widths and len(widths) != len(names):
        raise BandError(f"{path}: half-widths must be given for all bands or none")
    return BandSet(tuple(names), tuple(centers), tuple(widths) if widths else None)


def resample_weights(wavelengths, bands, mode="nearest"):
    """Matrix ``W`` of shape (n_bands, n_grid) with ``band = W @ rho``.

    ``nearest`` picks the grid point closest to each centre (ties go to the
    shorter wavelength).  ``box`` averages the piecewise-linear interpolant of
    the spectrum over ``center +/- halfwidth``.
    """
    wl = np.asarray(wavelengths, dtype=float)
    W = np.zeros((len(bands), wl.size))
    for i, c in enumerate(bands.centers):
        if not wl[0] <= c <= wl[-1]:
            raise BandError(f"band {bands.names[i]} centre {c} nm outside grid [{wl[0]}, {wl[-1]}]")
        if mode == "nearest":
            W[i, int(np.argmin(np.abs(wl - c)))] = 1.0
        elif mode == "box":
            if bands.halfwidths is None:
                raise BandError("box resampling needs band half-widths")
            lo, hi = c - bands.halfwidths[i], c + bands.halfwidths[i]
            if lo < wl[0] or hi > wl[-1]:
                raise BandError(f"band {bands.names[i]} window [{lo}, {hi}] leaves the grid")
            W[i] = _box_weights(wl, lo, hi)
        else:
            raise BandError(f"unknown resampling mode {mode!r}")
    return W


def _box_weights(wl, lo, hi):
    w = np.zeros(wl.size)
    for j in range(wl.size - 1):
        a, b = wl[j], wl[j + 1]
        s, e = max(a, lo), min(b, hi)
        if e <= s:
            continue
        d = b - a
        w[j] += ((b - s) ** 2 - (b - e) ** 2) / (2 * d)
        w[j + 1] += ((e - a) ** 2 - (s - a) ** 2) / (2 * d)
    return w / (hi - lo)


def resample_to_bands(rho, wavelengths, bands=None, mode="nearest"):
    """Band-average a spectrum (array or ``Var``) whose last axis follows ``wavelengths``."""
    W = resample_weights(wavelengths, bands or BandSet(), mode)
    if isinstance(rho, ad.Var):
        return ad.matmul(rho, W.T)
    return np.asarray(rho, dtype=float) @ W.T
