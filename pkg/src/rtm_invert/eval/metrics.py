"""Separability and agreement metrics."""

import itertools

import numpy as np

from ..exceptions import RTMInvertError, ValidationError
from ..variables import VARIABLES

JM_REGULARIZATION = 1e-6


def _gaussian(samples, reg):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < d + 2:
        raise ValidationError(f"JM distance needs at least {d + 2} samples per class, got {n}")
    cov = np.atleast_2d(np.cov(x, rowvar=False)) + reg * np.eye(d)
    return x.mean(axis=0), cov


def bhattacharyya(mu1, cov1, mu2, cov2):
    """Bhattacharyya distance between two Gaussians."""
    mu1, mu2 = np.atleast_1d(mu1).astype(float), np.atleast_1d(mu2).astype(float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    cov = 0.5 * (cov1 + cov2)
    s, logdet = np.linalg.slogdet(cov)
    s1, logdet1 = np.linalg.slogdet(cov1)
    s2, logdet2 = np.linalg.slogdet(cov2)
    if min(s, s1, s2) <= 0:
        raise RTMInvertError("covariance is singular after regularization")
    diff = mu1 - mu2
    maha = diff @ np.linalg.solve(cov, diff)
    return 0.125 * maha + 0.5 * (logdet - 0.5 * (logdet1 + logdet2))


def jm_from_b(b):
    return 2.0 * (1.0 - np.exp(-b))


def jm_gaussian(mu1, cov1, mu2, cov2):
    """Jeffreys-Matusita distance between two Gaussians, in [0, 2]."""
    return float(np.clip(jm_from_b(bhattacharyya(mu1, cov1, mu2, cov2)), 0.0, 2.0))


def jm_distance(a, b, reg=JM_REGULARIZATION):
    """JM distance between two sample sets under a Gaussian model of each class.

    Covariances get ``reg * I`` added.  Identical inputs give exactly 0.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape == b.shape and np.array_equal(a, b):
        _gaussian(a, reg)
        return 0.0
    mu1, cov1 = _gaussian(a, reg)
    mu2, cov2 = _gaussian(b, reg)
    if mu1.shape != mu2.shape:
        raise ValidationError("both classes need the same dimensionality")
    return jm_gaussian(mu1, cov1, mu2, cov2)


def jm_matrix(values, labels, classes=None, reg=JM_REGULARIZATION):
    """Pairwise JM matrix over ``classes`` (default: sorted unique labels).

    Rows/columns for classes with too few samples are NaN apart from the
    zero diagonal.
    """
    labels = np.asarray(labels, dtype=object)
    classes = list(classes) if classes is not None else sorted(set(labels))
    values = np.asarray(values, dtype=float)
    d = values.shape[1] if values.ndim == 2 else 1
    groups = {c: values[labels == c] for c in classes}
    ok = {c: len(g) >= d + 2 for c, g in groups.items()}
    k = len(classes)
    out = np.full((k, k), np.nan)
    np.fill_diagonal(out, 0.0)
    for i, j in itertools.combinations(range(k), 2):
        ci, cj = classes[i], classes[j]
        if ok[ci] and ok[cj]:
            out[i, j] = out[j, i] = jm_distance(groups[ci], groups[cj], reg)
    return out, classes


def split_within_between(matrix, classes, group_of):
    """Off-diagonal JM entries split by whether both classes share a group."""
    within, between = [], []
    for i, j in itertools.combinations(range(len(classes)), 2):
        v = matrix[i, j]
        if np.isnan(v):
            continue
        (within if group_of[classes[i]] == group_of[classes[j]] else between).append(v)
    return np.array(within), np.array(between)


def pearson_per_variable(pred, truth):
    """Pearson r per column; NaN where either column is constant."""
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValidationError("prediction and truth shapes differ")
    pc = pred - pred.mean(axis=0)
    tc = truth - truth.mean(axis=0)
    denom = np.sqrt((pc ** 2).sum(axis=0) * (tc ** 2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, (pc * tc).sum(axis=0) / denom, np.nan)


def range_violations(z, ranges):
    """Count of physical values outside ``ranges``, per variable."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    lo, hi = ranges.lo_array, np.asarray(ranges.hi, dtype=float)
    bad = (z < lo) | (z > hi)
    return dict(zip(VARIABLES, bad.sum(axis=0).astype(int).tolist()))


def latent_violations(lam):
    """Number of latent values outside [0, 1]."""
    lam = np.asarray(lam, dtype=float)
    return int(np.count_nonzero((lam < 0) | (lam > 1)))
