"""Forest reflectance forward model (leaf -> canopy -> forest -> bands).

The model is written out twice.  The ``*_reference`` functions use plain numpy
plus :func:`scipy.special.exp1`; the ``*_ad`` functions record every step on an
:class:`~rtm_invert.adcore.Tape` and use the engine's own E1.  Keeping the two
paths separate is what makes the reference path a meaningful check on the
differentiable one.

Batches: physical variables are columns of shape ``(n, 1)`` and spectral
quantities have shape ``(n, n_wavelengths)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import exp1 as scipy_exp1

from .. import adcore as ad
from ..latent import cd_to_h, fc_to_cd
from ..variables import VARIABLES, FixedVars, PhysVars
from .bands import BandSet, resample_weights
from .pack import default_pack

OMEGA_FLOOR = 1e-9
_EPS = np.finfo(float).eps


@dataclass
class Spectrum:
    """Band reflectances, shape ``(11,)`` or ``(n, 11)``; ``values`` may be a tape ``Var``."""

    values: object
    band_set: BandSet = BandSet()

    def __post_init__(self):
        arr = self.array
        if arr.shape[-1] != len(self.band_set):
            raise ValueError(f"spectrum has {arr.shape[-1]} bands, band set has {len(self.band_set)}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("spectrum contains non-finite values")

    @property
    def array(self):
        return self.values.value if isinstance(self.values, ad.Var) else np.asarray(self.values)


def _bump(diag, key, count):
    if diag is not None and count:
        diag[key] = diag.get(key, 0) + int(count)


def _col(x):
    return np.atleast_1d(np.asarray(x, dtype=float))[:, None]


# --- reference path -------------------------------------------------------


def plate_transmission(k):
    """Single-plate transmission for absorption coefficient ``k``."""
    return (1.0 - k) * np.exp(-k) + k ** 2 * scipy_exp1(k)


def plate_transmission_ad(k):
    return (1.0 - k) * ad.exp(-k) + ad.square(k) * ad.exp1(k)


def leaf_reference(N, cab, cw, cm, fixed, pack, diag=None):
    """Leaf reflectance and transmittance; inputs are ``(n, 1)`` columns."""
    k = (cab * pack.k_cab + fixed.car * pack.k_car + fixed.anth * pack.k_anth
         + fixed.cbrown * pack.k_brown + cw * pack.k_cw + cm * pack.k_cm) / N
    k = np.where(k == 0, _EPS, k)
    tau1 = plate_transmission(k)
    return _plate_stack_reference(tau1, pack.refractive, N, diag)


def _plate_stack_reference(tau1, n_ref, N, diag=None):
    rs = ((n_ref - 1.0) / (n_ref + 1.0)) ** 2
    denom = 1.0 - rs ** 2 * tau1 ** 2
    rho1 = rs + (1.0 - rs) ** 2 * tau1 ** 2 * rs / denom
    t1 = (1.0 - rs) ** 2 * tau1 / denom
    d2 = (t1 ** 2 - rho1 ** 2 - 1.0) ** 2 - 4.0 * rho1 ** 2
    _bump(diag, "delta_clamp", np.count_nonzero(d2 < 0))
    delta = np.sqrt(np.maximum(d2, 0.0))
    a = (1.0 + rho1 ** 2 - t1 ** 2 + delta) / (2.0 * rho1)
    b = (1.0 - rho1 ** 2 + t1 ** 2 + delta) / (2.0 * t1)
    bN = b ** N
    bmN = 1.0 / bN
    den = a * bN - bmN / a
    return (bN - bmN) / den, (a - 1.0 / a) / den


def canopy_reference(rho_leaf, tau_leaf, lai, rho_bg, tts):
    """Two-stream layer of leaves with area index ``lai`` over a background."""
    omega = np.maximum(rho_leaf + tau_leaf, OMEGA_FLOOR)
    ks = 2.0 * (1.0 - omega) / omega
    r_inf = 1.0 + ks - np.sqrt(ks ** 2 + 2.0 * ks)
    k_ext = 0.5 / np.cos(np.radians(tts))
    att = np.exp(-2.0 * k_ext * lai)
    return r_inf * (1.0 - att) + rho_bg * att


def forest_reference(cols, fixed, pack, diag=None):
    """Forest reflectance from a dict of ``(n, 1)`` variable columns."""
    rho_l, tau_l = leaf_reference(cols["N"], cols["cab"], cols["cw"], cols["cm"], fixed, pack, diag)
    fc = cols["fc"]
    rho_s = fixed.psoil * pack.soil_dry + (1.0 - fixed.psoil) * pack.soil_wet
    rho_u = canopy_reference(rho_l, tau_l, cols["LAIu"], rho_s, fixed.tts)
    rho_cr = canopy_reference(rho_l, tau_l, cols["LAI"] / fc, rho_u, fixed.tts)
    cd = fc_to_cd(fc, fixed.sd)
    h = cd_to_h(cd)
    shadow = np.clip(0.5 * fc * (h / cd) * np.tan(np.radians(fixed.tts)), 0.0, 1.0 - fc)
    return fc * rho_cr + shadow * 0.5 * rho_u + (1.0 - fc - shadow) * rho_u


# --- differentiable path --------------------------------------------------


def leaf_ad(N, cab, cw, cm, fixed, pack, diag=None):
    k = (cab * pack.k_cab + (fixed.car * pack.k_car + fixed.anth * pack.k_anth
         + fixed.cbrown * pack.k_brown) + cw * pack.k_cw + cm * pack.k_cm) / N
    zero = k.value == 0
    if np.any(zero):
        k = ad.where(zero, _EPS, k)
    tau1 = plate_transmission_ad(k)
    return _plate_stack_ad(tau1, pack.refractive, N, diag)


def _plate_stack_ad(tau1, n_ref, N, diag=None):
    rs = ((n_ref - 1.0) / (n_ref + 1.0)) ** 2
    tau_sq = ad.square(tau1)
    denom = 1.0 - rs ** 2 * tau_sq
    rho1 = rs + (1.0 - rs) ** 2 * rs * tau_sq / denom
    t1 = (1.0 - rs) ** 2 * tau1 / denom
    rho_sq, t_sq = ad.square(rho1), ad.square(t1)
    d2 = ad.square(t_sq - rho_sq - 1.0) - 4.0 * rho_sq
    _bump(diag, "delta_clamp", np.count_nonzero(d2.value < 0))
    delta = ad.sqrt(ad.relu(d2))
    a = (1.0 + rho_sq - t_sq + delta) / (2.0 * rho1)
    b = (1.0 - rho_sq + t_sq + delta) / (2.0 * t1)
    bN = ad.power(b, N)
    bmN = 1.0 / bN
    den = a * bN - bmN / a
    return (bN - bmN) / den, (a - 1.0 / a) / den


def canopy_ad(rho_leaf, tau_leaf, lai, rho_bg, tts):
    omega = ad.maximum(rho_leaf + tau_leaf, OMEGA_FLOOR)
    ks = 2.0 * (1.0 - omega) / omega
    r_inf = 1.0 + ks - ad.sqrt(ad.square(ks) + 2.0 * ks)
    k_ext = 0.5 / np.cos(np.radians(tts))
    att = ad.exp(-2.0 * k_ext * lai)
    return r_inf * (1.0 - att) + rho_bg * att


def forest_ad(cols, fixed, pack, diag=None):
    rho_l, tau_l = leaf_ad(cols["N"], cols["cab"], cols["cw"], cols["cm"], fixed, pack, diag)
    fc = cols["fc"]
    rho_s = fixed.psoil * pack.soil_dry + (1.0 - fixed.psoil) * pack.soil_wet
    rho_u = canopy_ad(rho_l, tau_l, cols["LAIu"], rho_s, fixed.tts)
    rho_cr = canopy_ad(rho_l, tau_l, cols["LAI"] / fc, rho_u, fixed.tts)
    cd = fc_to_cd(fc, fixed.sd)
    h = cd_to_h(cd)
    shadow = ad.clip(0.5 * np.tan(np.radians(fixed.tts)) * fc * (h / cd), 0.0, 1.0 - fc)
    return fc * rho_cr + shadow * 0.5 * rho_u + (1.0 - fc - shadow) * rho_u


# --- public API -----------------------------------------------------------


def _columns(v):
    if isinstance(v, PhysVars):
        return {name: _col(getattr(v, name)) for name in VARIABLES}
    arr = np.atleast_2d(np.asarray(v, dtype=float))
    return {name: arr[:, j:j + 1] for j, name in enumerate(VARIABLES)}


def leaf_model(v, fixed=None, pack=None, diag=None):
    """Leaf (reflectance, transmittance) over the pack's wavelength grid."""
    fixed, pack = fixed or FixedVars(), pack or default_pack()
    c = _columns(v)
    rho, tau = leaf_reference(c["N"], c["cab"], c["cw"], c["cm"], fixed, pack, diag)
    return _squeeze_like(v, rho), _squeeze_like(v, tau)


def canopy_layer(rho_leaf, tau_leaf, lai, rho_background, tts=30.0):
    return canopy_reference(np.asarray(rho_leaf, float), np.asarray(tau_leaf, float),
                            np.asarray(lai, float), np.asarray(rho_background, float), tts)


def forest_model(v, fixed=None, pack=None, diag=None):
    """Forest reflectance over the pack's full wavelength grid (reference path)."""
    fixed, pack = fixed or FixedVars(), pack or default_pack()
    return _squeeze_like(v, forest_reference(_columns(v), fixed, pack, diag))


def _squeeze_like(v, out):
    scalar = isinstance(v, PhysVars) and np.ndim(v.N) == 0
    return out[0] if scalar else out


class ForwardModel:
    """Callable F: physical variables -> 11-band reflectance.

    The leaf/canopy/forest chain is pointwise in wavelength, so only the grid
    points that carry resampling weight are evaluated.
    """

    def __init__(self, fixed=None, pack=None, bands=None, mode="nearest"):
        self.fixed = fixed or FixedVars()
        self.pack = pack or default_pack()
        self.bands = bands or BandSet()
        self.mode = mode
        W = resample_weights(self.pack.wavelengths, self.bands, mode)
        self._index = np.flatnonzero(np.any(W != 0, axis=0))
        self._weights_t = W[:, self._index].T
        self._sub = self.pack.subset(self._index)

    @property
    def n_bands(self):
        return len(self.bands)

    def reference(self, z, diag=None):
        """Plain numpy evaluation for an ``(n, 7)`` array (or PhysVars) of physical values."""
        rho = forest_reference(_columns(z), self.fixed, self._sub, diag)
        return rho @ self._weights_t

    def differentiable(self, z, diag=None):
        """Tape evaluation; ``z`` is a ``Var`` of shape ``(n, 7)`` or a dict of ``(n, 1)`` Vars."""
        if isinstance(z, ad.Var):
            cols = {name: z[:, j:j + 1] for j, name in enumerate(VARIABLES)}
        else:
            cols = z
        rho = forest_ad(cols, self.fixed, self._sub, diag)
        return ad.matmul(rho, self._weights_t)

    def __call__(self, z, diag=None):
        return self.reference(z, diag)


def forward(v, fixed=None, pack=None, bands=None, differentiable=False, tape=None, mode="nearest", diag=None,
            ranges=None):
    """Simulate band reflectance for ``v`` (PhysVars or ``(n, 7)`` array).

    With ``differentiable=True`` the result's ``values`` is a ``Var`` on
    ``tape`` (a fresh tape when none is given) whose inputs are the lifted
    variables.  Inputs outside ``ranges`` (default: the standard ranges)
    raise :class:`~rtm_invert.exceptions.RangeError`.
    """
    model = ForwardModel(fixed, pack, bands, mode)
    arr = v.to_array() if isinstance(v, PhysVars) else np.asarray(v, dtype=float)
    scalar = arr.ndim == 1
    arr = np.atleast_2d(arr)
    PhysVars.from_array(arr).validate(ranges)
    if differentiable:
        tape = tape if tape is not None else ad.Tape()
        out = model.differentiable(tape.lift(arr), diag)
        if scalar:
            out = out[0]
        return Spectrum(out, model.bands)
    out = model.reference(arr, diag)
    return Spectrum(out[0] if scalar else out, model.bands)
