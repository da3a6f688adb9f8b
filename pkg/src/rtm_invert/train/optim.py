"""Loss, Adam, learning-rate schedule and the NaN-gradient stabilizer."""

from dataclasses import dataclass, field

import numpy as np

from .. import adcore as ad
from ..exceptions import ValidationError

STABILIZER_EPS = 1e-7


def mse(pred, target):
    """Mean squared error over all elements; works on arrays and tape ``Var``s."""
    if np.shape(pred.value if isinstance(pred, ad.Var) else pred) != np.shape(
        target.value if isinstance(target, ad.Var) else target
    ):
        raise ValidationError("mse: prediction and target shapes differ")
    if isinstance(pred, ad.Var) or isinstance(target, ad.Var):
        return ad.mean(ad.square(pred - target))
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(diff * diff))


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update with L2 weight decay added to the gradient.

    Returns the new parameter list; ``state`` is updated in place.
    """
    if len(params) != len(grads):
        raise ValidationError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay:
            g = g + weight_decay * p
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        out.append(p - lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + eps))
    return out


def learning_rate(epoch, lr=1e-3, drop_epoch=50, factor=0.1):
    """Rate used during 1-based ``epoch``: ``lr`` up to ``drop_epoch``, then ``lr * factor``."""
    return lr * factor if epoch > drop_epoch else lr


def stabilize_gradients(grads, rng, strict_nan=False, eps=STABILIZER_EPS):
    """Replace NaN (and zero) entries of NaN-containing gradient tensors.

    Only tensors that contain at least one NaN are touched.  Inside those,
    entries that are NaN or exactly zero (NaN only when ``strict_nan``) become
    ``u * eps`` with ``u ~ Uniform(0, 1)`` drawn from ``rng``.  Other tensors
    are returned as the same objects.
    """
    out = []
    for g in grads:
        nan = np.isnan(g)
        if not nan.any():
            out.append(g)
            continue
        mask = nan if strict_nan else (nan | (g == 0))
        noise = rng.random(g.shape) * eps
        out.append(np.where(mask, noise, g))
    return out
