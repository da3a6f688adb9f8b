"""The four training set-ups and checkpoint persistence.

``ae``           encoder -> free decoder
``ae_rtm``       encoder -> latent scaling -> forward model
``ae_rtm_corr``  encoder -> latent scaling -> forward model -> residual corrector
``nnreg``        supervised regressor from spectra to latents (trained on synthetic data)

All reconstruction losses live in standardized spectral space; the forward
model's reflectance output is standardized with the same train-split band
statistics as the input.
"""

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import adcore as ad
from .. import nets
from ..data.dataset import apply_standardization, compute_stats, invert_standardization
from ..exceptions import CheckpointError, NonFiniteInput, TrainingError, ValidationError
from ..latent import clamp_latent, scale_columns
from ..rtm.model import ForwardModel
from ..variables import FixedVars, VarRanges
from .config import TrainConfig
from .optim import AdamState, adam_step, learning_rate, mse, stabilize_gradients

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

COMPONENTS = {
    "ae": ("encoder", "decoder"),
    "ae_rtm": ("encoder",),
    "ae_rtm_corr": ("encoder", "corrector"),
    "nnreg": ("regressor",),
}


@dataclass
class InversionModel:
    """Trained networks plus everything needed to apply them."""

    tag: str
    components: dict
    stats: dict
    ranges: VarRanges = field(default_factory=VarRanges)
    fixed: FixedVars = field(default_factory=FixedVars)
    _fm: ForwardModel = field(default=None, repr=False)

    @classmethod
    def initialise(cls, tag, stats, seed=0, hidden=64, ranges=None, fixed=None):
        comps = {name: nets.init(name, seed=seed + i, hidden=hidden) for i, name in enumerate(COMPONENTS[tag])}
        return cls(tag, comps, stats, ranges or VarRanges(), fixed or FixedVars())

    @property
    def forward_model(self):
        if self._fm is None:
            self._fm = ForwardModel(self.fixed)
        return self._fm

    @property
    def uses_rtm(self):
        return self.tag in ("ae_rtm", "ae_rtm_corr")

    def param_list(self):
        return [a for name in COMPONENTS[self.tag] for a in self.components[name].arrays()]

    def set_param_list(self, arrays):
        i = 0
        for name in COMPONENTS[self.tag]:
            n = 2 * len(self.components[name].layers)
            self.components[name].set_arrays(arrays[i:i + n])
            i += n

    def copy(self):
        return InversionModel(self.tag, {k: v.copy() for k, v in self.components.items()},
                              {k: v.copy() for k, v in self.stats.items()}, self.ranges, self.fixed)

    # --- numpy inference -------------------------------------------------

    def standardize(self, x):
        return apply_standardization(np.asarray(x, dtype=float), self.stats)

    def latents(self, x, clip=True):
        """Latent estimates for reflectance spectra ``x``.

        The regressor's raw (unbounded) output is returned when ``clip`` is False.
        """
        xs = self.standardize(x)
        if self.tag == "nnreg":
            lam = nets.mlp_forward(self.components["regressor"], xs)
        else:
            lam = nets.mlp_forward(self.components["encoder"], xs)
        return clamp_latent(lam) if clip else lam

    def physical(self, x):
        return scale_columns(self.latents(x), self.ranges)

    def simulate(self, z):
        """Forward model reflectance for physical variables ``z`` (n, 7)."""
        return self.forward_model.reference(z)

    def reconstruct_standardized(self, x, loss_stats=None):
        """Reconstruction of ``x`` in the loss space defined by ``loss_stats``."""
        loss_stats = loss_stats or self.stats
        if self.tag == "ae":
            return nets.mlp_forward(self.components["decoder"], self.latents(x))
        sim = apply_standardization(self.simulate(self.physical(x)), loss_stats)
        if self.tag == "ae_rtm_corr":
            sim = nets.corrector_forward(self.components["corrector"], sim)
        return sim

    def reconstruct(self, x, loss_stats=None):
        loss_stats = loss_stats or self.stats
        return invert_standardization(self.reconstruct_standardized(x, loss_stats), loss_stats)

    def correct(self, simulated):
        """Apply the learned corrector to forward-model reflectance (identity without one)."""
        if self.tag != "ae_rtm_corr":
            return np.asarray(simulated, dtype=float)
        s = apply_standardization(simulated, self.stats)
        return invert_standardization(nets.corrector_forward(self.components["corrector"], s), self.stats)

    # --- tape evaluation -------------------------------------------------

    def tape_loss(self, tape, xs, target):
        """Batch loss on ``tape``; returns (loss, lifted parameter Vars, latent values)."""
        lifted = {name: self.components[name].lift(tape) for name in COMPONENTS[self.tag]}
        x = tape.lift(xs)
        if self.tag == "nnreg":
            out = nets.mlp_forward(lifted["regressor"], x)
            return mse(out, target), lifted, None
        lam = nets.mlp_forward(lifted["encoder"], x)
        if self.tag == "ae":
            out = nets.mlp_forward(lifted["decoder"], lam)
            return mse(out, target), lifted, None
        lam = clamp_latent(lam)
        z = scale_columns(lam, self.ranges)
        sim = self.forward_model.differentiable(z)
        out = (sim - self.stats["mean"]) / self.stats["std"]
        if self.tag == "ae_rtm_corr":
            out = nets.corrector_forward(lifted["corrector"], out)
        return mse(out, target), lifted, lam.value


@dataclass
class Checkpoint:
    model: InversionModel
    config: TrainConfig
    opt_state: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    best_epoch: int = 0
    best_val: float = float("inf")
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def write_history(self, path):
        write_history_csv(self.history, path)


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse", "lr"])
        for row in history:
            w.writerow([row["epoch"], format(row["train_mse"], ".17g"), format(row["val_mse"], ".17g"),
                        format(row["lr"], ".17g")])


def _targets(model, ds, xs):
    if model.tag == "nnreg":
        if ds.truth is None:
            raise ValidationError("nnreg needs a dataset with truth latents")
        return ds.truth
    return xs


def _check_ranges(model, lam):
    if lam is None:
        return
    if not np.all((lam > 0) & (lam < 1)):
        raise TrainingError("latent left (0, 1)")
    z = scale_columns(lam, model.ranges)
    lo, hi = model.ranges.lo_array, np.asarray(model.ranges.hi)
    if not np.all((z >= lo) & (z <= hi)):
        raise TrainingError("physical variables left their ranges")


def _check_resume(cfg, resume):
    saved = {k: v for k, v in resume.config.to_dict().items() if k != "max_epochs"}
    wanted = {k: v for k, v in cfg.to_dict().items() if k != "max_epochs"}
    if saved != wanted:
        diff = sorted(k for k in saved if saved[k] != wanted.get(k))
        raise ValidationError(f"cannot resume: config differs from the checkpoint in {diff}")
    if resume.model.tag != cfg.model:
        raise ValidationError(f"cannot resume a {resume.model.tag!r} checkpoint as {cfg.model!r}")


def train_model(cfg, dataset, ranges=None, fixed=None, callback=None, resume=None):
    """Train the model named by ``cfg.model`` on the train split of ``dataset``.

    Validation MSE drives early stopping; the returned checkpoint carries the
    best-validation weights and the per-epoch history.

    ``resume`` continues from a saved checkpoint: its weights, optimizer
    moments, history and best-so-far record are kept and epochs count on from
    ``resume.epoch``.  Only ``max_epochs`` may differ from the saved config.
    The shuffling stream after a resume is seeded by ``(seed, epoch)``, so a
    resumed run is deterministic but not identical to an uninterrupted one.
    """
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    if dataset.split is None:
        raise ValidationError("dataset must be split by site before training")
    train_mask, val_mask = dataset.mask("train"), dataset.mask("val")
    if not train_mask.any() or not val_mask.any():
        raise ValidationError("train and validation splits must be non-empty")
    if resume is not None:
        _check_resume(cfg, resume)
        model = resume.model.copy()
    else:
        stats = compute_stats(dataset.spectra[train_mask])
        model = InversionModel.initialise(cfg.model, stats, cfg.seed, cfg.hidden, ranges, fixed)
    xs_all = model.standardize(dataset.spectra)
    y_all = _targets(model, dataset, xs_all)
    train_idx = np.flatnonzero(train_mask)
    x_val, y_val = xs_all[val_mask], y_all[val_mask]

    params = model.param_list()
    first_epoch = 1
    if resume is None:
        rng = np.random.default_rng(cfg.seed)
        inject_rng = np.random.default_rng([cfg.seed, 7919])
        state = AdamState.zeros_like(params)
        ckpt = Checkpoint(model, cfg, state)
        best = None
    else:
        rng = np.random.default_rng([cfg.seed, resume.epoch])
        inject_rng = np.random.default_rng([cfg.seed, 7919, resume.epoch])
        state = AdamState([m.copy() for m in resume.opt_state.m], [v.copy() for v in resume.opt_state.v],
                          resume.opt_state.t)
        ckpt = Checkpoint(model, cfg, state, resume.epoch, resume.best_epoch, resume.best_val,
                          [dict(r) for r in resume.history], dict(resume.diagnostics))
        best = model.copy()
        first_epoch = resume.epoch + 1
    diag = ckpt.diagnostics
    step = 0
    bad_losses = 0

    for epoch in range(first_epoch, cfg.max_epochs + 1):
        lr = learning_rate(epoch, cfg.lr, cfg.lr_drop_epoch, cfg.lr_drop_factor)
        order = rng.permutation(train_idx)
        losses, counts = [], []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            tape = ad.Tape()
            try:
                loss, lifted, lam = model.tape_loss(tape, xs_all[idx], y_all[idx])
                value = float(loss.value)
            except NonFiniteInput:  # parameters already corrupted
                value = float("nan")
            if not np.isfinite(value):
                bad_losses += 1
                diag["nonfinite_losses"] = diag.get("nonfinite_losses", 0) + 1
                if bad_losses >= cfg.max_nonfinite_losses:
                    raise TrainingError(
                        f"{bad_losses} consecutive non-finite losses at epoch {epoch}, step {step}; "
                        f"diagnostics={diag}"
                    )
                step += 1
                continue
            bad_losses = 0
            if cfg.check_ranges:
                _check_ranges(model, lam)
            grads = ad.backward(loss)
            g = [ad.grad(grads, v) for name in COMPONENTS[model.tag]
                 for layer in lifted[name] for v in (layer.weight, layer.bias)]
            if step in cfg.inject_nan_steps:
                k = int(inject_rng.integers(len(g)))
                g[k] = g[k].copy()
                g[k][inject_rng.random(g[k].shape) < 0.25] = np.nan
                g[k].flat[0] = np.nan
                diag["injected_nan_steps"] = diag.get("injected_nan_steps", 0) + 1
            if any(np.isnan(t).any() for t in g):
                diag["nan_gradient_steps"] = diag.get("nan_gradient_steps", 0) + 1
                if cfg.stabilizer:
                    g = stabilize_gradients(g, rng, cfg.stabilizer_strict_nan)
            params = adam_step(params, g, state, lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
            model.set_param_list(params)
            losses.append(value)
            counts.append(len(idx))
            step += 1

        train_mse = float(np.average(losses, weights=counts)) if losses else float("nan")
        val_mse = mse(model.reconstruct_standardized(dataset.spectra[val_mask]), y_val) \
            if model.tag != "nnreg" else mse(model.latents(dataset.spectra[val_mask], clip=False), y_val)
        ckpt.history.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse, "lr": lr})
        ckpt.epoch = epoch
        log.info("%s epoch %d train %.5f val %.5f lr %.1e", cfg.model, epoch, train_mse, val_mse, lr)
        if callback is not None:
            callback(epoch, ckpt)
        if val_mse < ckpt.best_val:
            ckpt.best_val, ckpt.best_epoch = val_mse, epoch
            best = model.copy()
        elif epoch - ckpt.best_epoch >= cfg.patience:
            break

    if best is None:
        raise TrainingError("validation loss never became finite")
    ckpt.model = best
    return ckpt


def evaluate_loss(ckpt_or_model, dataset, kind="reconstruction"):
    """MSE per split.

    ``reconstruction`` compares reconstructed and input spectra in the
    dataset's standardized space (train-split statistics); ``latent`` compares
    predicted and true latents.
    """
    model = ckpt_or_model.model if isinstance(ckpt_or_model, Checkpoint) else ckpt_or_model
    splits = ("train", "val", "test") if dataset.split is not None else ("all",)
    masks = {s: (dataset.mask(s) if s != "all" else np.ones(len(dataset), bool)) for s in splits}
    out = {}
    if kind == "latent":
        if dataset.truth is None:
            raise ValidationError("latent loss needs truth latents")
        for s, m in masks.items():
            if m.any():
                out[s] = mse(model.latents(dataset.spectra[m], clip=False), dataset.truth[m])
        return out
    stats = dataset.stats
    if stats is None:
        stats = compute_stats(dataset.spectra[masks["train"]] if "train" in masks else dataset.spectra)
    for s, m in masks.items():
        if m.any():
            x = dataset.spectra[m]
            out[s] = mse(model.reconstruct_standardized(x, stats), apply_standardization(x, stats))
    return out


# --- persistence ----------------------------------------------------------


def save_checkpoint(ckpt, path):
    """Write a versioned ``.npz``: named arrays plus a JSON metadata record."""
    model = ckpt.model
    arrays = {}
    for name, params in model.components.items():
        arrays.update(params.to_dict(prefix=f"{name}/"))
    arrays["stats/mean"] = model.stats["mean"]
    arrays["stats/std"] = model.stats["std"]
    for i, (m, v) in enumerate(zip(ckpt.opt_state.m, ckpt.opt_state.v)):
        arrays[f"opt/m/{i}"] = m
        arrays[f"opt/v/{i}"] = v
    meta = {
        "version": CHECKPOINT_VERSION,
        "tag": model.tag,
        "components": {name: p.describe() for name, p in model.components.items()},
        "config": ckpt.config.to_dict(),
        "ranges": {k: list(v) for k, v in model.ranges.as_dict().items()},
        "fixed": {k: getattr(model.fixed, k) for k in model.fixed.__dataclass_fields__},
        "opt_t": ckpt.opt_state.t,
        "epoch": ckpt.epoch,
        "best_epoch": ckpt.best_epoch,
        "best_val": ckpt.best_val,
        "history": ckpt.history,
        "diagnostics": ckpt.diagnostics,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    try:
        with np.load(path) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: missing metadata")
    meta = json.loads(arrays.pop("meta").tobytes().decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    tag = meta["tag"]
    if set(meta["components"]) != set(COMPONENTS.get(tag, ())):
        raise CheckpointError(f"{path}: components {sorted(meta['components'])} do not match model {tag!r}")
    comps = {name: nets.MlpParams.from_dict(desc, arrays, prefix=f"{name}/")
             for name, desc in meta["components"].items()}
    stats = {"mean": arrays["stats/mean"], "std": arrays["stats/std"]}
    if stats["mean"].shape != (11,) or stats["std"].shape != (11,):
        raise CheckpointError(f"{path}: standardization statistics have the wrong shape")
    model = InversionModel(tag, comps, stats, VarRanges.from_mapping(meta["ranges"]),
                           FixedVars.from_mapping(meta["fixed"]))
    n_opt = sum(1 for k in arrays if k.startswith("opt/m/"))
    state = AdamState([arrays[f"opt/m/{i}"] for i in range(n_opt)],
                      [arrays[f"opt/v/{i}"] for i in range(n_opt)], meta["opt_t"])
    for p, m in zip(model.param_list(), state.m):
        if p.shape != m.shape:
            raise CheckpointError(f"{path}: optimizer moment shape {m.shape} does not match parameter {p.shape}")
    return Checkpoint(model, TrainConfig.from_mapping(meta["config"]), state, meta["epoch"],
                      meta["best_epoch"], meta["best_val"], meta["history"], meta.get("diagnostics", {}))
