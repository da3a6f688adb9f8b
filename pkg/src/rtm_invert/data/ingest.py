"""Reading externally supplied Sentinel-2 spectra."""

import csv
import math

import numpy as np

from ..exceptions import DataFormatError
from ..rtm.bands import BAND_NAMES
from .dataset import Dataset, canonical_species

REQUIRED_COLUMNS = ("site_id", "date", "species", *BAND_NAMES)
MAX_BAD_FRACTION = 0.01


def ingest_csv(path, band_set=None):
    """Validate and load ``site_id,date,species,B2..B12`` rows.

    Bad rows (unknown species, unparsable or non-finite values, reflectance
    outside [0, 1]) are collected; the file is rejected with
    :class:`DataFormatError` when more than 1% of rows are bad, otherwise bad
    rows are dropped and reported in ``meta["row_errors"]``.  ``date`` may be
    an integer index or any sortable label (e.g. ISO dates), which is ranked.
    """
    bands = tuple(band_set.names) if band_set is not None else BAND_NAMES
    required = ("site_id", "date", "species", *bands)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in required if c not in header]
    if missing:
        raise DataFormatError(f"{path}: missing columns {missing}")
    col = {h: i for i, h in enumerate(header)}

    good, errors = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            site = int(row[col["site_id"]])
            date = row[col["date"]].strip()
            raw_species = row[col["species"]]
            species = canonical_species(raw_species)
            if species is None:
                raise ValueError(f"unknown species {raw_species!r}")
            refl = [float(row[col[b]]) for b in bands]
            for b, v in zip(bands, refl):
                if not math.isfinite(v):
                    raise ValueError(f"{b} is not finite")
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{b}={v} outside [0, 1]")
        except (ValueError, IndexError) as exc:
            errors.append((lineno, str(exc)))
            continue
        good.append((site, date, species, refl))

    total = len(good) + len(errors)
    if total == 0:
        raise DataFormatError(f"{path}: no data rows")
    if len(errors) / total > MAX_BAD_FRACTION:
        raise DataFormatError(
            f"{path}: {len(errors)} of {total} rows invalid (limit {MAX_BAD_FRACTION:.0%})", errors
        )
    dates = [g[1] for g in good]
    if all(d.lstrip("-").isdigit() for d in dates):
        date_index = [int(d) for d in dates]
    else:
        rank = {d: i for i, d in enumerate(sorted(set(dates)))}
        date_index = [rank[d] for d in dates]
    return Dataset(
        np.array([g[3] for g in good]), [g[0] for g in good], date_index, [g[2] for g in good],
        meta={"kind": "ingested", "source": str(path), "row_errors": errors},
    )
