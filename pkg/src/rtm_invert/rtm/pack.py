"""Per-wavelength optical constants consumed by the leaf model."""

import csv
import functools
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..exceptions import PackFormatError

PACK_COLUMNS = (
    "wavelength_nm", "refractive", "k_cab", "k_car", "k_anth",
    "k_brown", "k_cw", "k_cm", "soil_dry", "soil_wet",
)
ABSORPTION_COLUMNS = ("k_cab", "k_car", "k_anth", "k_brown", "k_cw", "k_cm")

DEFAULT_PACK_FILE = "default_pack.csv"
DEFAULT_PACK_SEED = 20


@dataclass(frozen=True)
class CoefficientPack:
    wavelengths: np.ndarray
    refractive: np.ndarray
    k_cab: np.ndarray
    k_car: np.ndarray
    k_anth: np.ndarray
    k_brown: np.ndarray
    k_cw: np.ndarray
    k_cm: np.ndarray
    soil_dry: np.ndarray
    soil_wet: np.ndarray

    def __post_init__(self):
        for name in PACK_COLUMNS:
            attr = "wavelengths" if name == "wavelength_nm" else name
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))
        self.validate()

    def validate(self):
        n = self.wavelengths.shape
        if len(n) != 1 or n[0] < 2:
            raise PackFormatError("wavelength grid must be a 1-d array with at least two points")
        if np.any(np.diff(self.wavelengths) <= 0):
            raise PackFormatError("wavelength grid must be strictly increasing")
        for name in PACK_COLUMNS[1:]:
            arr = getattr(self, name)
            if arr.shape != n:
                raise PackFormatError(f"{name} has {arr.size} points, expected {n[0]}")
            if not np.all(np.isfinite(arr)):
                raise PackFormatError(f"{name} contains non-finite values")
        for name in ABSORPTION_COLUMNS:
            if np.any(getattr(self, name) < 0):
                raise PackFormatError(f"{name} must be non-negative")
        if np.any(self.refractive <= 1):
            raise PackFormatError("refractive index must exceed 1")
        for name in ("soil_dry", "soil_wet"):
            arr = getattr(self, name)
            if np.any((arr < 0) | (arr > 1)):
                raise PackFormatError(f"{name} must lie in [0, 1]")

    def columns(self):
        return {
            name: (self.wavelengths if name == "wavelength_nm" else getattr(self, name))
            for name in PACK_COLUMNS
        }

    def subset(self, index):
        """Pack restricted to the grid points in ``index``."""
        return CoefficientPack(*(col[index] for col in self.columns().values()))


def _bumps(wl, spec):
    out = np.zeros_like(wl)
    for centre, amp, width in spec:
        out += amp * np.exp(-0.5 * ((wl - centre) / width) ** 2)
    return out


def make_default_pack(seed=DEFAULT_PACK_SEED, step=10.0):
    """Procedurally generate the smooth stand-in coefficient pack.

    Absorption curves are sums of Gaussian bumps whose centres and heights are
    jittered by a fixed-seed generator; the refractive index falls linearly
    from 1.52 to 1.40 and the soil spectra are gentle ramps.
    """
    rng = np.random.default_rng(seed)
    wl = np.arange(400.0, 2500.0 + step / 2, step)

    def jittered(spec):
        return [(c + rng.uniform(-3, 3), a * rng.uniform(0.97, 1.03), w) for c, a, w in spec]

    k_cab = _bumps(wl, jittered([(430, 0.055, 30), (665, 0.024, 28), (560, 0.006, 45)]))
    k_car = _bumps(wl, jittered([(470, 0.035, 32), (430, 0.02, 25)]))
    k_anth = _bumps(wl, jittered([(550, 0.012, 40)]))
    k_brown = 0.25 * np.exp(-(wl - 400.0) / 250.0) + _bumps(wl, jittered([(700, 0.03, 120)]))
    k_cw = 0.05 + _bumps(wl, jittered([
        (975, 0.55, 35), (1200, 1.2, 45), (1450, 30.0, 65), (1940, 110.0, 75),
        (1650, 9.0, 160), (2250, 30.0, 180),
    ]))
    k_cm = 2.0 + 4.0 * (wl - 400.0) / 2100.0 + _bumps(wl, jittered([
        (1730, 22.0, 90), (2100, 55.0, 110), (2300, 45.0, 80), (1200, 6.0, 150),
    ]))
    refractive = np.linspace(1.52, 1.40, wl.size)
    x = (wl - 400.0) / 2100.0
    soil_dry = 0.12 + 0.30 * x + 0.08 * np.sin(np.pi * x) - 0.06 * _bumps(wl, [(1940, 1.0, 60), (1450, 0.6, 50)])
    soil_wet = 0.55 * soil_dry
    return CoefficientPack(wl, refractive, k_cab, k_car, k_anth, k_brown, k_cw, k_cm, soil_dry, soil_wet)


def save_coefficient_pack(pack, path):
    cols = pack.columns()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PACK_COLUMNS)
        for i in range(pack.wavelengths.size):
            writer.writerow([format(float(cols[c][i]), ".17g") for c in PACK_COLUMNS])


def load_coefficient_pack(path):
    """Read a comma-separated pack file with a ``PACK_COLUMNS`` header."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as exc:
        raise PackFormatError(f"cannot read coefficient pack {path}: {exc}") from exc
    missing = [c for c in PACK_COLUMNS if c not in header]
    if missing:
        raise PackFormatError(f"{path}: missing columns {missing}")
    try:
        data = np.array([[float(r[header.index(c)]) for c in PACK_COLUMNS] for r in rows])
    except (ValueError, IndexError) as exc:
        raise PackFormatError(f"{path}: malformed row ({exc})") from exc
    if data.ndim != 2 or data.shape[0] == 0:
        raise PackFormatError(f"{path}: no data rows")
    return CoefficientPack(*data.T)


@functools.lru_cache(maxsize=None)
def default_pack():
    """The bundled pack shipped with the package."""
    ref = resources.files(__package__).joinpath(DEFAULT_PACK_FILE)
    with resources.as_file(ref) as path:
        return load_coefficient_pack(path)
