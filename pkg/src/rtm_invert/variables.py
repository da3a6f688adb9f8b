"""Biophysical variables of the forest reflectance model and their ranges."""

import csv
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import RangeError, ValidationError

VARIABLES = ("N", "cab", "cw", "cm", "LAI", "LAIu", "fc")

UNITS = {
    "N": "-",
    "cab": "ug/cm2",
    "cw": "cm",
    "cm": "g/cm2",
    "LAI": "m2/m2",
    "LAIu": "m2/m2",
    "fc": "-",
}

DEFAULT_RANGES = {
    "N": (1.0, 3.0),
    "cab": (10.0, 80.0),
    "cw": (0.001, 0.02),
    "cm": (0.005, 0.05),
    "LAI": (0.01, 5.0),
    "LAIu": (0.01, 1.0),
    "fc": (0.1, 1.0),
}


@dataclass(frozen=True)
class VarRanges:
    """Per-variable (min, max) sample ranges, in ``VARIABLES`` order."""

    lo: tuple = tuple(DEFAULT_RANGES[v][0] for v in VARIABLES)
    hi: tuple = tuple(DEFAULT_RANGES[v][1] for v in VARIABLES)

    def __post_init__(self):
        if len(self.lo) != len(VARIABLES) or len(self.hi) != len(VARIABLES):
            raise ValidationError("VarRanges needs one (min, max) pair per variable")
        for name, a, b in zip(VARIABLES, self.lo, self.hi):
            if not a < b:
                raise ValidationError(f"range for {name} must satisfy min < max, got [{a}, {b}]")

    @classmethod
    def from_mapping(cls, mapping):
        merged = dict(DEFAULT_RANGES)
        for name, pair in mapping.items():
            if name not in DEFAULT_RANGES:
                raise ValidationError(f"unknown variable {name!r}")
            merged[name] = (float(pair[0]), float(pair[1]))
        return cls(tuple(merged[v][0] for v in VARIABLES), tuple(merged[v][1] for v in VARIABLES))

    @classmethod
    def from_csv(cls, path):
        """Read a ``variable,min,max`` override file; unlisted variables keep defaults."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if rows and rows[0][0].strip().lower() == "variable":
            rows = rows[1:]
        try:
            return cls.from_mapping({r[0].strip(): (r[1], r[2]) for r in rows})
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed ranges file ({exc})") from exc

    def as_dict(self):
        return {v: (a, b) for v, a, b in zip(VARIABLES, self.lo, self.hi)}

    @property
    def lo_array(self):
        return np.asarray(self.lo, dtype=float)

    @property
    def width_array(self):
        return np.asarray(self.hi, dtype=float) - self.lo_array


@dataclass(frozen=True)
class FixedVars:
    """Variables held at their default values during inversion.

    ``cp``, ``cbc``, ``hspot``, ``tto``, ``psi`` and ``typeLIDF`` are carried for
    interface compatibility with richer canopy models; the built-in forward model ignores them.
    """

    psoil: float = 0.8
    car: float = 10.0
    cbrown: float = 0.25
    anth: float = 2.0
    cp: float = 0.0015
    cbc: float = 0.01
    hspot: float = 0.01
    tto: float = 0.0
    tts: float = 30.0
    psi: float = 0.0
    sd: float = 500.0
    typeLIDF: str = "beta"

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        bad = set(mapping) - known
        if bad:
            raise ValidationError(f"unknown fixed variables: {sorted(bad)}")
        return cls(**mapping)


@dataclass
class PhysVars:
    """Physical variables for one sample or a batch (each field scalar or 1-d array).

    ``cd`` and ``h`` are derived from ``fc`` through the allometric chain when
    not supplied.
    """

    N: object
    cab: object
    cw: object
    cm: object
    LAI: object
    LAIu: object
    fc: object
    cd: object = None
    h: object = None
    sd: float = field(default=500.0, repr=False)

    def __post_init__(self):
        from .latent import cd_to_h, fc_to_cd

        for name in VARIABLES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.cd is None:
            self.cd = fc_to_cd(self.fc, self.sd)
        if self.h is None:
            self.h = cd_to_h(self.cd)

    @classmethod
    def from_array(cls, arr, sd=500.0):
        arr = np.asarray(arr, dtype=float)
        cols = arr.T if arr.ndim == 2 else arr
        return cls(*cols[: len(VARIABLES)], sd=sd)

    def to_array(self):
        return np.stack([np.asarray(getattr(self, v), dtype=float) for v in VARIABLES], axis=-1)

    def validate(self, ranges=None):
        """Raise :class:`RangeError` naming the first variable outside ``ranges``."""
        ranges = ranges or VarRanges()
        for name, lo, hi in zip(VARIABLES, ranges.lo, ranges.hi):
            v = np.atleast_1d(getattr(self, name))
            bad = ~((v >= lo) & (v <= hi))
            if np.any(bad):
                raise RangeError(name, float(v[bad][0]), lo, hi)
        return self
