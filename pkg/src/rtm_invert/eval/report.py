"""Report bundle: the CSV tables plus a JSON summary with provenance hashes."""

import csv
import hashlib
import json
import os

import numpy as np

from ..data.dataset import write_json
from ..variables import VARIABLES
from . import analysis

REPORT_FILES = ("mse.csv", "bias_by_band.csv", "species_stats.csv", "jm_matrix.csv", "temporal.csv")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_rows(path, rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])


def config_hash(obj):
    """Stable SHA-256 of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, default=lambda o: np.asarray(o).tolist()).encode()
    return hashlib.sha256(blob).hexdigest()


def dataset_hash(dataset):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.spectra).tobytes())
    h.update(np.ascontiguousarray(dataset.site_id).tobytes())
    h.update(np.ascontiguousarray(dataset.date_index).tobytes())
    return h.hexdigest()


def build_report(checkpoints, dataset, jm_scale="physical"):
    """Compute every report table for ``checkpoints`` (``{tag: Checkpoint}``) on ``dataset``.

    Bias, species, temporal and JM tables describe the primary model:
    ``ae_rtm_corr`` when present, otherwise the first checkpoint given.
    """
    from ..train.loops import evaluate_loss

    if not checkpoints:
        raise ValueError("no checkpoints to report on")
    if jm_scale not in ("physical", "latent"):
        raise ValueError("jm_scale must be 'physical' or 'latent'")
    primary_tag = "ae_rtm_corr" if "ae_rtm_corr" in checkpoints else next(iter(checkpoints))
    model = checkpoints[primary_tag].model
    x = dataset.spectra
    groups = dataset.forest_type
    summary = {"primary_model": primary_tag, "n_records": len(dataset)}

    mse_rows = []
    for tag, ck in checkpoints.items():
        for split, v in evaluate_loss(ck, dataset).items():
            mse_rows.append({"model": tag, "split": split, "mse": v})
    summary["mse"] = {f"{r['model']}/{r['split']}": r["mse"] for r in mse_rows}

    if model.tag == "ae":
        bias_rows = analysis.band_residuals(model.reconstruct(x), x, groups, "reconstruction")
        residual = model.reconstruct(x) - x
    else:
        sim = model.simulate(model.physical(x))
        if model.tag == "ae_rtm_corr":
            corrected = model.correct(sim)
            bias_rows = analysis.band_residuals(sim, corrected, groups, "bias")
            residual = sim - corrected
        else:
            bias_rows = analysis.band_residuals(sim, x, groups, "reconstruction")
            residual = sim - x

    lam = model.latents(x)
    z = model.physical(x)
    species_rows = analysis.species_stats(z, dataset.species)
    series = analysis.temporal_series(z, dataset.date_index, groups)
    jm_values = lam if jm_scale == "latent" else z
    matrix, classes, sep = analysis.separability(jm_values, dataset.species)
    summary["jm"] = {**sep, "scale": jm_scale}
    summary["range_violations"] = {tag: analysis.range_report(ck.model.physical(x), ck.model.ranges)
                                   for tag, ck in checkpoints.items()}
    if "nnreg" in checkpoints:
        raw = checkpoints["nnreg"].model.latents(x, clip=False)
        summary["nnreg_raw_latent_violations"] = int(np.count_nonzero((raw < 0) | (raw > 1)))
    if dataset.truth is not None:
        summary["variable_recovery"] = {tag: analysis.variable_recovery(ck.model.latents(x), dataset.truth)
                                        for tag, ck in checkpoints.items()}
    if dataset.truth is not None and dataset.bias is not None and model.tag != "ae":
        rec = analysis.bias_recovery(model, dataset)
        summary["bias_recovery"] = {
            "bands_matching": rec["bands_matching"],
            "learned_mean": {k: v.tolist() for k, v in rec["learned_mean"].items()},
            "injected_mean": {k: v.tolist() for k, v in rec["injected_mean"].items()},
            "corrector_gap": rec["corrector_gap"].tolist(),
            "within_two_sigma": bool(np.all(rec["corrector_gap"] <= 2 * rec["noise"])),
        }
    summary["config_hashes"] = {tag: config_hash(ck.config.to_dict()) for tag, ck in checkpoints.items()}
    summary["dataset_hash"] = dataset_hash(dataset)
    return {
        "mse": mse_rows,
        "bias_by_band": bias_rows,
        "species_stats": species_rows,
        "jm_matrix": (matrix, classes),
        "temporal": analysis.temporal_rows(series),
        "hist_residuals": analysis.histograms(residual, groups),
        "hist_variables": analysis.histograms(z, dataset.species, labels=VARIABLES),
        "summary": summary,
    }


def write_report(report, directory):
    """Write a report from :func:`build_report` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_rows(os.path.join(directory, "mse.csv"), report["mse"], ["model", "split", "mse"])
    write_rows(os.path.join(directory, "bias_by_band.csv"), report["bias_by_band"])
    write_rows(os.path.join(directory, "species_stats.csv"), report["species_stats"])
    matrix, classes = report["jm_matrix"]
    with open(os.path.join(directory, "jm_matrix.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["species", *classes])
        for name, row in zip(classes, matrix):
            w.writerow([name, *[_cell(v) for v in row]])
    write_rows(os.path.join(directory, "temporal.csv"), report["temporal"],
               ["group", "variable", "date_index", "mean"])
    write_rows(os.path.join(directory, "hist_residuals.csv"), report["hist_residuals"])
    write_rows(os.path.join(directory, "hist_variables.csv"), report["hist_variables"])
    write_json(os.path.join(directory, "report.json"), report["summary"])
    return directory


