"""Tables behind the bias, variable and ablation analyses."""

import numpy as np

from ..data.dataset import FOREST_TYPE, N_DATES, SPECIES
from ..exceptions import ValidationError
from ..latent import scale_columns
from ..rtm.bands import BAND_NAMES
from ..variables import VARIABLES, VarRanges
from .metrics import jm_matrix, pearson_per_variable, range_violations, split_within_between

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
RESIDUAL_CONVENTIONS = ("bias", "reconstruction")


def band_residuals(a, b, groups, convention="bias"):
    """Per-group, per-band residual statistics.

    With ``convention="bias"`` ``a`` is the simulated and ``b`` the corrected
    spectrum and the residual is ``a - b`` (positive where the forward model
    over-estimates).  With ``"reconstruction"`` ``a`` is the reconstruction and
    ``b`` the target, residual ``a - b`` as well; the flag only labels the rows.
    Returns a list of dict rows, one per (group, band).
    """
    if convention not in RESIDUAL_CONVENTIONS:
        raise ValidationError(f"convention must be one of {RESIDUAL_CONVENTIONS}")
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("residual inputs must be aligned")
    groups = np.asarray(groups, dtype=object)
    res = a - b
    rows = []
    for g in sorted(set(groups)):
        r = res[groups == g]
        if len(r) == 0:
            raise ValidationError(f"group {g!r} is empty")
        q = np.quantile(r, QUANTILES, axis=0)
        for j, band in enumerate(BAND_NAMES[:res.shape[1]]):
            row = {"convention": convention, "group": g, "band": band, "n": len(r),
                   "mean": r[:, j].mean(), "std": r[:, j].std()}
            row.update({f"q{int(p * 100):02d}": q[i, j] for i, p in enumerate(QUANTILES)})
            rows.append(row)
    return rows


def residual_means(rows):
    """``{group: array of per-band means}`` from :func:`band_residuals` rows."""
    out = {}
    for row in rows:
        out.setdefault(row["group"], []).append(row["mean"])
    return {g: np.array(v) for g, v in out.items()}


def histograms(values, groups, bins=50, labels=BAND_NAMES):
    """50-bin histograms per group and column over the observed range of each column."""
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups, dtype=object)
    rows = []
    for j, name in enumerate(labels[:values.shape[1]]):
        lo, hi = values[:, j].min(), values[:, j].max()
        if hi <= lo:
            hi = lo + 1e-12
        edges = np.linspace(lo, hi, bins + 1)
        for g in sorted(set(groups)):
            counts, _ = np.histogram(values[groups == g, j], edges)
            for k in range(bins):
                rows.append({"column": name, "group": g, "bin": k, "lo": edges[k], "hi": edges[k + 1],
                             "count": int(counts[k])})
    return rows


def species_stats(z, species):
    """Mean and std of each physical variable per species (rows in species order)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    species = np.asarray(species, dtype=object)
    present = [s for s in SPECIES if s in set(species)] + sorted(set(species) - set(SPECIES))
    rows = []
    for s in present:
        zs = z[species == s]
        if len(zs) == 0:
            raise ValidationError(f"species {s!r} has no records")
        row = {"species": s, "forest_type": FOREST_TYPE.get(s, "none"), "n": len(zs)}
        for j, v in enumerate(VARIABLES):
            row[f"{v}_mean"] = zs[:, j].mean()
            row[f"{v}_std"] = zs[:, j].std()
        rows.append(row)
    return rows


def temporal_series(values, date_index, groups, n_dates=N_DATES):
    """Mean per date for each group and variable: ``{(group, variable): array(n_dates)}``.

    Dates with no records in a group are NaN.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    date_index = np.asarray(date_index, dtype=int)
    groups = np.asarray(groups, dtype=object)
    if np.any((date_index < 0) | (date_index >= n_dates)):
        raise ValidationError(f"date_index must lie in [0, {n_dates - 1}]")
    out = {}
    for g in sorted(set(groups)):
        in_g = groups == g
        for j, v in enumerate(VARIABLES[:values.shape[1]]):
            series = np.full(n_dates, np.nan)
            for d in range(n_dates):
                sel = in_g & (date_index == d)
                if sel.any():
                    series[d] = values[sel, j].mean()
            out[(g, v)] = series
    return out


def temporal_rows(series):
    rows = []
    for (g, v), s in series.items():
        for d, val in enumerate(s):
            rows.append({"group": g, "variable": v, "date_index": d, "mean": val})
    return rows


def ablation_table(checkpoints, dataset):
    """Test/val/train MSE for the ae, ae_rtm and ae_rtm_corr checkpoints.

    All checkpoints must share seed and optimisation settings; only the
    model tag may differ.
    """
    from ..train.loops import evaluate_loss

    order = ("ae", "ae_rtm", "ae_rtm_corr")
    missing = [t for t in order if t not in checkpoints]
    if missing:
        raise ValidationError(f"ablation needs checkpoints for {missing}")
    ref = {k: v for k, v in checkpoints[order[0]].config.to_dict().items() if k != "model"}
    rows = []
    for tag in order:
        ck = checkpoints[tag]
        cfg = {k: v for k, v in ck.config.to_dict().items() if k != "model"}
        if cfg != ref:
            diff = sorted(k for k in cfg if cfg[k] != ref.get(k))
            raise ValidationError(f"ablation checkpoints differ in config keys {diff}")
        if ck.model.tag != tag:
            raise ValidationError(f"checkpoint in slot {tag!r} is a {ck.model.tag!r} model")
        loss = evaluate_loss(ck, dataset)
        rows.append({"model": tag, **{f"{s}_mse": loss.get(s, np.nan) for s in ("train", "val", "test")}})
    return rows


def ablation_checks(rows):
    """The two orderings the ablation is expected to show, computed on test MSE."""
    mse = {r["model"]: r["test_mse"] for r in rows}
    ratio = mse["ae_rtm"] / mse["ae_rtm_corr"]
    rel = mse["ae_rtm_corr"] / mse["ae"]
    return {"rtm_over_corr": ratio, "corr_over_ae": rel, "ordering_holds": bool(ratio >= 3.0 and rel <= 1.5)}


def injected_bias(clean, bias, forest_type):
    """Per-record injected bias in the simulated-minus-measured convention."""
    return clean - bias.apply(clean, forest_type)


def bias_recovery(model, dataset, mask=None):
    """How well the learned corrector reproduces the injected bias.

    Returns per-group mean residuals (learned and injected), the number of
    bands whose signs agree for both forest types, and the per-band mean
    absolute gap between the corrector's action on clean simulated spectra
    and the injected affine distortion.
    """
    if dataset.truth is None or dataset.bias is None:
        raise ValidationError("bias recovery needs a surrogate dataset with truth and bias")
    mask = np.ones(len(dataset), bool) if mask is None else mask
    x = dataset.spectra[mask]
    ft = dataset.forest_type[mask]
    sim = model.simulate(model.physical(x))
    learned = sim - model.correct(sim)
    clean = model.simulate(scale_columns(dataset.truth[mask], model.ranges))
    injected = injected_bias(clean, dataset.bias, ft)
    types = [t for t in ("coniferous", "deciduous") if np.any(ft == t)]
    lm = {t: learned[ft == t].mean(axis=0) for t in types}
    im = {t: injected[ft == t].mean(axis=0) for t in types}
    agree = np.ones(learned.shape[1], bool)
    for t in types:
        agree &= np.sign(lm[t]) == np.sign(im[t])
    action_gap = np.abs(model.correct(clean) - dataset.bias.apply(clean, ft)).mean(axis=0)
    return {
        "learned_mean": lm, "injected_mean": im, "bands_matching": int(agree.sum()),
        "band_agrees": agree, "corrector_gap": action_gap,
        "noise": np.asarray(dataset.bias.noise, dtype=float),
    }


def variable_recovery(latents, truth):
    r = pearson_per_variable(latents, truth)
    return {"pearson": dict(zip(VARIABLES, r.tolist())), "mean_pearson": float(np.nanmean(r))}


def separability(z, species, forest_type_of=FOREST_TYPE):
    """JM matrix over the 12 species plus the within/between forest-type summary."""
    matrix, classes = jm_matrix(z, species, SPECIES)
    within, between = split_within_between(matrix, classes, forest_type_of)
    summary = {
        "min_between": float(between.min()) if between.size else float("nan"),
        "median_within": float(np.median(within)) if within.size else float("nan"),
    }
    summary["separated"] = bool(summary["min_between"] > summary["median_within"])
    return matrix, classes, summary


def range_report(z, ranges=None):
    ranges = ranges or VarRanges()
    v = range_violations(z, ranges)
    return {"per_variable": v, "total": int(sum(v.values()))}
