"""Record containers, site-level splitting, standardization and on-disk format."""

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import DataFormatError, ValidationError
from ..rtm.bands import BAND_NAMES
from ..variables import VARIABLES

SPLITS = ("train", "val", "test")

CONIFEROUS = (
    "Pseudotsuga menziesii", "Picea abies", "Pinus nigra", "Larix decidua", "Pinus sylvestris",
)
DECIDUOUS = (
    "Prunus spp", "Fagus sylvatica", "Carpinus betulus", "Quercus spp",
    "Acer pseudoplatanus", "Fraxinus excelsior", "Alnus glutinosa",
)
SPECIES = CONIFEROUS + DECIDUOUS
FOREST_TYPE = {**{s: "coniferous" for s in CONIFEROUS}, **{s: "deciduous" for s in DECIDUOUS}}
SYNTHETIC_SPECIES = "synthetic"
N_DATES = 14

_CANONICAL = {s.lower(): s for s in SPECIES}


def canonical_species(name):
    """Case- and punctuation-insensitive species lookup; ``None`` when unknown."""
    key = " ".join(name.replace("'", "").replace("_", " ").split()).lower()
    return _CANONICAL.get(key)


@dataclass(frozen=True)
class SampleRecord:
    site_id: int
    date_index: int
    species: str
    forest_type: str
    spectrum: np.ndarray
    truth: np.ndarray = None


@dataclass
class Dataset:
    """Column-oriented collection of spectra with site/date/species labels.

    ``truth`` holds generator latents (absent for ingested data); ``split``
    assigns every record to train/val/test by site; ``stats`` holds per-band
    mean and std computed on the train split.
    """

    spectra: np.ndarray
    site_id: np.ndarray
    date_index: np.ndarray
    species: np.ndarray
    truth: np.ndarray = None
    split: np.ndarray = None
    stats: dict = None
    bias: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.spectra = np.asarray(self.spectra, dtype=float)
        self.site_id = np.asarray(self.site_id, dtype=int)
        self.date_index = np.asarray(self.date_index, dtype=int)
        self.species = np.asarray(self.species, dtype=object)
        n = len(self.spectra)
        if self.spectra.ndim != 2 or self.spectra.shape[1] != len(BAND_NAMES):
            raise ValidationError(f"spectra must have shape (n, {len(BAND_NAMES)})")
        for name in ("site_id", "date_index", "species"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            if self.truth.shape != (n, len(VARIABLES)):
                raise ValidationError("truth latents must have shape (n, 7)")

    def __len__(self):
        return len(self.spectra)

    @property
    def forest_type(self):
        return np.array([FOREST_TYPE.get(s, "none") for s in self.species], dtype=object)

    @property
    def sites(self):
        return np.unique(self.site_id)

    def mask(self, split):
        if self.split is None:
            raise ValidationError("dataset has no split assignment")
        return self.split == split

    def subset(self, selector):
        """Records selected by a boolean mask, index array, or split name."""
        if isinstance(selector, str):
            selector = self.mask(selector)
        pick = lambda a: None if a is None else a[selector]
        return replace(
            self, spectra=self.spectra[selector], site_id=self.site_id[selector],
            date_index=self.date_index[selector], species=self.species[selector],
            truth=pick(self.truth), split=pick(self.split), meta=dict(self.meta),
        )

    def records(self):
        ftype = self.forest_type
        for i in range(len(self)):
            yield SampleRecord(
                int(self.site_id[i]), int(self.date_index[i]), str(self.species[i]), str(ftype[i]),
                self.spectra[i], None if self.truth is None else self.truth[i],
            )

    def standardized(self, x=None):
        x = self.spectra if x is None else x
        return apply_standardization(x, self.stats)


def split_by_site(ds, fractions=(0.7, 0.15, 0.15), seed=0):
    """Assign whole sites to train/val/test.

    Sites are shuffled and cut by count, so each split gets ``round(f * n_sites)``
    sites (at least one each); all records of a site share a split.
    """
    sites = ds.sites
    n = len(sites)
    if n < 3:
        raise ValidationError(f"need at least 3 sites to split, got {n}")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) <= 0:
        raise ValidationError("fractions must be three positive numbers summing to 1")
    order = np.random.default_rng(seed).permutation(sites)
    n_train = min(max(1, int(round(fractions[0] * n))), n - 2)
    n_val = min(max(1, int(round(fractions[1] * n))), n - n_train - 1)
    assign = {}
    for i, s in enumerate(order):
        assign[int(s)] = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
    split = np.array([assign[int(s)] for s in ds.site_id], dtype=object)
    out = replace(ds, split=split, meta=dict(ds.meta))
    out.meta["split_seed"] = seed
    return out


def check_no_leakage(ds):
    """Raise if any site appears in more than one split."""
    seen = {}
    for s, sp in zip(ds.site_id, ds.split):
        if seen.setdefault(int(s), sp) != sp:
            raise ValidationError(f"site {s} spans splits {seen[int(s)]!r} and {sp!r}")


def compute_stats(x):
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        raise ValidationError("cannot standardize an empty train split")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    if np.any(std <= 0):
        raise ValidationError(f"zero variance in band(s) {np.flatnonzero(std <= 0).tolist()}")
    return {"mean": mean, "std": std}


def apply_standardization(x, stats):
    return (x - stats["mean"]) / stats["std"]


def invert_standardization(xs, stats):
    return xs * stats["std"] + stats["mean"]


def standardize(ds):
    """Attach per-band train-split statistics to ``ds``."""
    train = ds.spectra[ds.mask("train")] if ds.split is not None else ds.spectra
    out = replace(ds, stats=compute_stats(train), meta=dict(ds.meta))
    return out


# --- persistence ----------------------------------------------------------

RECORDS_FILE = "records.csv"
MANIFEST_FILE = "manifest.json"


def _fmt(v):
    return format(float(v), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_dataset(ds, directory):
    """Write ``records.csv`` and ``manifest.json`` into ``directory``."""
    from .surrogate import BiasSpec

    os.makedirs(directory, exist_ok=True)
    header = ["site_id", "date", "species", "forest_type", *BAND_NAMES]
    if ds.truth is not None:
        header += [f"lam_{v}" for v in VARIABLES]
    ftype = ds.forest_type
    with open(os.path.join(directory, RECORDS_FILE), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [int(ds.site_id[i]), int(ds.date_index[i]), ds.species[i], ftype[i]]
            row += [_fmt(v) for v in ds.spectra[i]]
            if ds.truth is not None:
                row += [_fmt(v) for v in ds.truth[i]]
            w.writerow(row)
    manifest = dict(ds.meta)
    manifest["n_records"] = len(ds)
    manifest["bands"] = list(BAND_NAMES)
    if ds.split is not None:
        manifest["split"] = {str(int(s)): sp for s, sp in sorted(set(zip(ds.site_id.tolist(), ds.split)))}
    if ds.stats is not None:
        manifest["stats"] = {k: list(map(float, v)) for k, v in ds.stats.items()}
    if isinstance(ds.bias, BiasSpec):
        manifest["bias"] = ds.bias.to_dict()
    write_json(os.path.join(directory, MANIFEST_FILE), manifest)


def load_dataset(directory):
    from .surrogate import BiasSpec

    path = os.path.join(directory, RECORDS_FILE)
    if not os.path.exists(path):
        raise DataFormatError(f"{directory}: no {RECORDS_FILE}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    col = {h: i for i, h in enumerate(header)}
    try:
        spectra = np.array([[float(r[col[b]]) for b in BAND_NAMES] for r in rows])
        truth = None
        if f"lam_{VARIABLES[0]}" in col:
            truth = np.array([[float(r[col[f"lam_{v}"]]) for v in VARIABLES] for r in rows])
        site = [int(r[col["site_id"]]) for r in rows]
        date = [int(r[col["date"]]) for r in rows]
        species = [r[col["species"]] for r in rows]
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed records ({exc})") from exc
    manifest = {}
    mpath = os.path.join(directory, MANIFEST_FILE)
    if os.path.exists(mpath):
        with open(mpath) as fh:
            manifest = json.load(fh)
    split = stats = bias = None
    if "split" in manifest:
        split = np.array([manifest["split"][str(s)] for s in site], dtype=object)
    if "stats" in manifest:
        stats = {k: np.asarray(v, dtype=float) for k, v in manifest["stats"].items()}
    if "bias" in manifest:
        bias = BiasSpec.from_dict(manifest["bias"])
    meta = {k: v for k, v in manifest.items() if k not in ("split", "stats", "bias", "n_records", "bands")}
    return Dataset(spectra, site, date, species, truth, split, stats, bias, meta)
