"""Finite-difference checks of AD gradients: primitives and the full forward model."""

from dataclasses import dataclass

import numpy as np

from . import adcore as ad
from .latent import scale_columns
from .rtm.model import ForwardModel
from .variables import VARIABLES, VarRanges

PRIMITIVE_TOL = 1e-4
FORWARD_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self):
        return bool(self.max_rel_err <= self.tol)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


# (name, function of Vars, list of input samplers)
_UNARY = {
    "neg": (ad.neg, (-3, 3)),
    "square": (ad.square, (-3, 3)),
    "exp": (ad.exp, (-3, 3)),
    "log": (ad.log, (0.1, 5)),
    "sqrt": (ad.sqrt, (0.1, 5)),
    "sigmoid": (ad.sigmoid, (-6, 6)),
    "tanh": (ad.tanh, (-3, 3)),
    "relu": (ad.relu, (0.05, 3)),
    "exp1": (ad.exp1, (0.05, 8)),
    "power_const": (lambda x: ad.power(x, 2.7), (0.1, 3)),
    "clip": (lambda x: ad.clip(x, -1.0, 1.0), (-0.9, 0.9)),
}
_BINARY = {
    "add": (ad.add, (-3, 3), (-3, 3)),
    "sub": (ad.sub, (-3, 3), (-3, 3)),
    "mul": (ad.mul, (-3, 3), (-3, 3)),
    "div": (ad.div, (-3, 3), (0.5, 3)),
    "power": (ad.power, (0.5, 3), (-2, 2)),
    "maximum": (ad.maximum, (-3, -0.5), (0.5, 3)),
    "minimum": (ad.minimum, (-3, -0.5), (0.5, 3)),
}


def check_primitives(n_points=20, seed=0, tol=PRIMITIVE_TOL):
    """Compare every primitive's pullback with a central difference at random points."""
    rng = np.random.default_rng(seed)
    results = []
    for name, (fn, (lo, hi)) in _UNARY.items():
        worst = 0.0
        for x in rng.uniform(lo, hi, n_points):
            g = ad.scalar_derivative(fn, x)
            fd = ad.central_difference(fn, x)
            worst = max(worst, float(rel_err(g, fd)))
        results.append(CheckResult(name, worst, tol))
    for name, (fn, ra, rb) in _BINARY.items():
        worst = 0.0
        for a, b in zip(rng.uniform(*ra, n_points), rng.uniform(*rb, n_points)):
            ga = ad.scalar_derivative(lambda v: fn(v, b), a)
            gb = ad.scalar_derivative(lambda v: fn(a, v), b)
            fa = ad.central_difference(lambda v: fn(v, b), a)
            fb = ad.central_difference(lambda v: fn(a, v), b)
            worst = max(worst, float(rel_err(ga, fa)), float(rel_err(gb, fb)))
        results.append(CheckResult(name, worst, tol))
    results.append(_check_matmul(rng, tol))
    return results


def _check_matmul(rng, tol):
    A = rng.normal(size=(3, 4))
    B = rng.normal(size=(4, 2))
    w = rng.normal(size=(3, 2))
    tape = ad.Tape()
    a, b = tape.lift(A), tape.lift(B)
    grads = ad.backward(ad.sum(ad.matmul(a, b) * w))
    worst = 0.0
    for var, M, other in ((a, A, "A"), (b, B, "B")):
        g = ad.grad(grads, var)
        fd = np.zeros_like(M)
        for idx in np.ndindex(M.shape):
            h = 1e-6
            Mp, Mm = M.copy(), M.copy()
            Mp[idx] += h
            Mm[idx] -= h
            fp = np.sum(((Mp @ B) if other == "A" else (A @ Mp)) * w)
            fm = np.sum(((Mm @ B) if other == "A" else (A @ Mm)) * w)
            fd[idx] = (fp - fm) / (2 * h)
        worst = max(worst, float(rel_err(g, fd).max()))
    return CheckResult("matmul", worst, tol)


def forward_jacobians(z, forward_model=None, ranges=None):
    """AD and central-difference Jacobians of band reflectance w.r.t. physical variables.

    Returns two arrays of shape ``(n, 11, 7)``.  Differences use a step of
    ``1e-4`` of each variable's range width, and both Jacobians are expressed
    per unit of range width so that all seven columns share a scale.
    """
    fm = forward_model or ForwardModel()
    ranges = ranges or VarRanges()
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = len(z)
    width = ranges.width_array
    nb = fm.n_bands
    jac_ad = np.zeros((n, nb, len(VARIABLES)))
    for band in range(nb):
        tape = ad.Tape()
        zv = tape.lift(z)
        out = fm.differentiable(zv)
        grads = ad.backward(ad.sum(out[:, band]))
        jac_ad[:, band, :] = ad.grad(grads, zv) * width
    jac_fd = np.zeros_like(jac_ad)
    for j in range(len(VARIABLES)):
        h = 1e-4 * width[j]
        zp, zm = z.copy(), z.copy()
        zp[:, j] += h
        zm[:, j] -= h
        jac_fd[:, :, j] = (fm.reference(zp) - fm.reference(zm)) / (2 * h) * width[j]
    return jac_ad, jac_fd


def check_forward(n_points=50, seed=0, tol=FORWARD_TOL, forward_model=None, ranges=None, floor=1e-6):
    """Per-variable worst relative error between AD and finite-difference gradients.

    Points are drawn uniformly inside the ranges, kept one finite-difference
    step away from the bounds.
    """
    ranges = ranges or VarRanges()
    rng = np.random.default_rng(seed)
    lam = rng.uniform(1e-3, 1 - 1e-3, size=(n_points, len(VARIABLES)))
    z = scale_columns(lam, ranges)
    jac_ad, jac_fd = forward_jacobians(z, forward_model, ranges)
    err = rel_err(jac_ad, jac_fd, floor)
    return [CheckResult(f"forward/{v}", float(err[:, :, j].max()), tol) for j, v in enumerate(VARIABLES)]


def run_all(n_points=50, seed=0):
    return check_primitives(seed=seed) + check_forward(n_points=n_points, seed=seed)
