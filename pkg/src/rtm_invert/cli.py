"""Command-line entry point: ``rtm-invert <command> ...``.

Exit codes: 0 success, 1 validation error, 2 runtime or numerical failure.
Every command that writes outputs also writes ``resolved_config.json`` next
to them.
"""

import argparse
import contextlib
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .exceptions import DataFormatError, RTMInvertError, ValidationError

log = logging.getLogger("rtm_invert")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
THREADS_ENV = "RTM_INVERT_THREADS"


def _thread_limit():
    """Cap BLAS/OpenMP pools when ``RTM_INVERT_THREADS`` is set."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _load_json(path, allow_list=False):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not (isinstance(data, dict) or (allow_list and isinstance(data, list))):
        raise ValidationError(f"{path}: expected a JSON object")
    return data


def _write_resolved(directory, command, settings):
    from .data.dataset import write_json

    os.makedirs(directory, exist_ok=True)
    write_json(os.path.join(directory, "resolved_config.json"),
               {"command": command, "version": __version__, **settings})


def _ranges(args):
    from .variables import VarRanges

    return VarRanges.from_csv(args.ranges) if getattr(args, "ranges", None) else VarRanges()


def _fixed(args):
    from .variables import FixedVars

    return FixedVars.from_mapping(_load_json(args.fixed)) if getattr(args, "fixed", None) else FixedVars()


def _out_dir(path):
    """Directory that holds ``path`` (itself when it has no suffix)."""
    return path if not os.path.splitext(path)[1] else (os.path.dirname(path) or ".")


# --- simulate -------------------------------------------------------------


def _read_vars(args):
    from .variables import VARIABLES

    rows = []
    if args.vars:
        if args.vars.endswith(".json"):
            data = _load_json(args.vars, allow_list=True)
            rows = data if isinstance(data, list) else [data]
        else:
            with open(args.vars, newline="") as fh:
                rows = list(csv.DictReader(fh))
    else:
        rows = [{v: getattr(args, v) for v in VARIABLES}]
    out = []
    for i, row in enumerate(rows):
        missing = [v for v in VARIABLES if row.get(v) in (None, "")]
        if missing:
            raise ValidationError(f"record {i}: missing variables {missing}")
        try:
            out.append([float(row[v]) for v in VARIABLES])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"record {i}: {exc}") from exc
    return np.array(out)


def cmd_simulate(args):
    from . import adcore as ad
    from .rtm.bands import BAND_NAMES
    from .rtm.model import ForwardModel
    from .variables import PhysVars

    ranges = _ranges(args)
    z = _read_vars(args)
    for row in z:
        PhysVars.from_array(row).validate(ranges)
    fm = ForwardModel(_fixed(args), mode=args.resample)
    if args.differentiable:
        tape = ad.Tape()
        out = fm.differentiable(tape.lift(z))
        spectra = out.value
        if args.dump_tape:
            tape.dump(args.dump_tape)
    else:
        spectra = fm.reference(z)
    lines = [",".join(BAND_NAMES)] + [",".join(format(v, ".10g") for v in row) for row in spectra]
    text = "\n".join(lines) + "\n"
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text)
        _write_resolved(_out_dir(os.path.dirname(os.path.abspath(args.out))), "simulate", {
            "vars": z.tolist(), "differentiable": args.differentiable, "resample": args.resample,
            "fixed": args.fixed, "ranges": args.ranges,
        })
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- datasets -------------------------------------------------------------


def _finish_dataset(ds, args):
    from .data.dataset import check_no_leakage, save_dataset, split_by_site, standardize

    ds = standardize(split_by_site(ds, tuple(args.fractions), seed=args.split_seed))
    check_no_leakage(ds)
    save_dataset(ds, args.out)
    return ds


def cmd_sample(args):
    from .data.synthetic import sample_synthetic

    cfg = {**_load_json(args.config)}
    n = args.n if args.n is not None else cfg.get("n", 10000)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    noise = args.noise if args.noise is not None else cfg.get("noise", 0.0)
    if args.split_seed is None:
        args.split_seed = seed
    ds = sample_synthetic(n, _ranges(args), seed=seed, noise=noise)
    _finish_dataset(ds, args)
    _write_resolved(args.out, "sample", {"n": n, "seed": seed, "noise": noise, "ranges": args.ranges,
                                         "fractions": args.fractions, "split_seed": args.split_seed})
    print(f"wrote {len(ds)} records to {args.out}")
    return EXIT_OK


def cmd_surrogate(args):
    from .data.surrogate import BiasSpec, generate_surrogate_real

    cfg = _load_json(args.config)
    sites = args.sites if args.sites is not None else cfg.get("sites", 300)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    noise = args.noise if args.noise is not None else cfg.get("noise", 0.005)
    if args.bias:
        bias = BiasSpec.from_dict(_load_json(args.bias))
    elif "bias" in cfg:
        bias = BiasSpec.from_dict(cfg["bias"])
    else:
        bias = BiasSpec.default(noise)
    if args.split_seed is None:
        args.split_seed = seed
    ds = generate_surrogate_real(sites, bias, seed=seed, ranges=_ranges(args))
    _finish_dataset(ds, args)
    _write_resolved(args.out, "surrogate", {"sites": sites, "seed": seed, "bias": bias.to_dict(),
                                            "ranges": args.ranges, "fractions": args.fractions,
                                            "split_seed": args.split_seed})
    print(f"wrote {len(ds)} records from {sites} sites to {args.out}")
    return EXIT_OK


def cmd_ingest(args):
    from .data.ingest import ingest_csv
    from .rtm.bands import load_band_set

    bands = load_band_set(args.bands) if args.bands else None
    try:
        ds = ingest_csv(args.path, bands)
    except DataFormatError as exc:
        for line, msg in exc.row_errors[:50]:
            print(f"  line {line}: {msg}", file=sys.stderr)
        if len(exc.row_errors) > 50:
            print(f"  ... {len(exc.row_errors) - 50} more", file=sys.stderr)
        raise
    for line, msg in ds.meta["row_errors"]:
        print(f"dropped line {line}: {msg}", file=sys.stderr)
    if args.split_seed is None:
        args.split_seed = 0
    _finish_dataset(ds, args)
    _write_resolved(args.out, "ingest", {"path": os.path.abspath(args.path), "bands": args.bands,
                                         "fractions": args.fractions, "split_seed": args.split_seed})
    print(f"ingested {len(ds)} records into {args.out}")
    return EXIT_OK


# --- training -------------------------------------------------------------


def _train_config(args, model=None):
    from .train.config import TrainConfig

    cfg = _load_json(getattr(args, "config", None))
    if model is not None:
        cfg["model"] = model
    for key in ("seed", "max_epochs", "batch_size", "lr", "patience", "hidden"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "stabilizer_strict_nan", False):
        cfg["stabilizer_strict_nan"] = True
    if getattr(args, "no_stabilizer", False):
        cfg["stabilizer"] = False
    return TrainConfig.from_mapping(cfg)


def _load(path):
    from .data.dataset import load_dataset

    ds = load_dataset(path)
    if ds.split is None:
        raise ValidationError(f"{path}: dataset has no split assignment")
    return ds


def _dump_first_tape(path, ckpt_model, ds):
    from . import adcore as ad

    tape = ad.Tape()
    idx = np.flatnonzero(ds.mask("train"))[:4]
    xs = ckpt_model.standardize(ds.spectra[idx])
    target = ds.truth[idx] if ckpt_model.tag == "nnreg" else xs
    ckpt_model.tape_loss(tape, xs, target)
    tape.dump(path)


def cmd_train(args):
    from .train.loops import InversionModel, save_checkpoint, train_model

    cfg = _train_config(args, args.model)
    ds = _load(args.data)
    ranges = _ranges(args)
    if args.dump_tape:
        from .data.dataset import compute_stats

        probe = InversionModel.initialise(cfg.model, compute_stats(ds.spectra[ds.mask("train")]),
                                          cfg.seed, cfg.hidden, ranges)
        _dump_first_tape(args.dump_tape, probe, ds)
    ckpt = train_model(cfg, ds, ranges=ranges, fixed=_fixed(args))
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_checkpoint(ckpt, args.out)
    stem = os.path.splitext(args.out)[0]
    ckpt.write_history(args.history or stem + "_history.csv")
    _write_resolved(os.path.dirname(os.path.abspath(args.out)), "train",
                    {"train": cfg.to_dict(), "data": os.path.abspath(args.data), "out": args.out})
    print(f"{cfg.model}: best val MSE {ckpt.best_val:.6g} at epoch {ckpt.best_epoch} "
          f"(stopped after {ckpt.epoch}); saved {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from .eval.report import build_report, write_report
    from .train.loops import load_checkpoint

    ds = _load(args.data)
    checkpoints = {}
    for path in args.checkpoint:
        ck = load_checkpoint(path)
        checkpoints[ck.model.tag] = ck
    report = build_report(checkpoints, ds, jm_scale=args.jm_scale)
    write_report(report, args.out)
    _write_resolved(args.out, "eval", {"checkpoints": [os.path.abspath(p) for p in args.checkpoint],
                                       "data": os.path.abspath(args.data), "jm_scale": args.jm_scale})
    for row in report["mse"]:
        print(f"{row['model']:12s} {row['split']:5s} {row['mse']:.6g}")
    return EXIT_OK


def cmd_ablation(args):
    from .eval.analysis import ablation_checks, ablation_table
    from .eval.report import write_rows
    from .train.loops import save_checkpoint, train_model

    ds = _load(args.data)
    ranges = _ranges(args)
    checkpoints = {}
    os.makedirs(args.out, exist_ok=True)
    for tag in ("ae", "ae_rtm", "ae_rtm_corr"):
        cfg = _train_config(args, tag)
        ck = train_model(cfg, ds, ranges=ranges)
        save_checkpoint(ck, os.path.join(args.out, f"{tag}.npz"))
        ck.write_history(os.path.join(args.out, f"{tag}_history.csv"))
        checkpoints[tag] = ck
    rows = ablation_table(checkpoints, ds)
    write_rows(os.path.join(args.out, "ablation.csv"), rows, ["model", "train_mse", "val_mse", "test_mse"])
    checks = ablation_checks(rows)
    _write_resolved(args.out, "ablation", {"train": _train_config(args, "ae").to_dict(),
                                           "data": os.path.abspath(args.data), "checks": checks})
    print(f"{'model':12s} {'train':>10s} {'val':>10s} {'test':>10s}")
    for r in rows:
        print(f"{r['model']:12s} {r['train_mse']:10.5f} {r['val_mse']:10.5f} {r['test_mse']:10.5f}")
    print(f"ae_rtm/ae_rtm_corr = {checks['rtm_over_corr']:.3f} (>= 3), "
          f"ae_rtm_corr/ae = {checks['corr_over_ae']:.3f} (<= 1.5)")
    if args.no_assert or checks["ordering_holds"]:
        return EXIT_OK
    print("ablation ordering does not hold", file=sys.stderr)
    return EXIT_RUNTIME


def cmd_gradcheck(args):
    from .gradcheck import check_forward, check_primitives

    results = check_primitives(seed=args.seed) + check_forward(n_points=args.points, seed=args.seed)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:18s} max rel err {r.max_rel_err:.3e} (tol {r.tol:g})")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


# --- parser ---------------------------------------------------------------


def _add_dataset_options(p):
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--fractions", type=float, nargs=3, default=(0.7, 0.15, 0.15), metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--split-seed", type=int, default=None, help="defaults to --seed")


def _add_train_options(p):
    p.add_argument("--config", help="JSON training config; flags override its values")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--stabilizer-strict-nan", action="store_true",
                   help="replace only NaN gradient entries, not zeros")
    p.add_argument("--no-stabilizer", action="store_true")
    p.add_argument("--ranges", help="variable,min,max override file")


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    from .variables import VARIABLES

    parser = _Parser(prog="rtm-invert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="forward-model spectra for given variables")
    p.add_argument("--vars", help="CSV with a header of variable names, or JSON object/list")
    for v in VARIABLES:
        p.add_argument(f"--{v}", type=float)
    p.add_argument("--differentiable", action="store_true", help="evaluate through the AD tape")
    p.add_argument("--resample", choices=("nearest", "box"), default="nearest")
    p.add_argument("--fixed", help="JSON overrides for the fixed variables")
    p.add_argument("--ranges", help="variable,min,max override file")
    p.add_argument("--out", help="CSV output (stdout when omitted)")
    p.add_argument("--dump-tape", help="write the AD tape to this file (with --differentiable)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sample", help="uniform synthetic dataset from the forward model")
    p.add_argument("-n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--config")
    p.add_argument("--ranges")
    _add_dataset_options(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("surrogate", help="biased seasonal surrogate of real observations")
    p.add_argument("--sites", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--bias", help="JSON bias specification (gains, offsets, noise)")
    p.add_argument("--config")
    p.add_argument("--ranges")
    _add_dataset_options(p)
    p.set_defaults(func=cmd_surrogate)

    p = sub.add_parser("ingest", help="validate and import a site_id,date,species,B2..B12 CSV")
    p.add_argument("path")
    p.add_argument("--bands", help="band set file (name,center_nm[,halfwidth_nm])")
    _add_dataset_options(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--model", required=True, choices=("ae", "ae_rtm", "ae_rtm_corr", "nnreg"))
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--history", help="loss history CSV (default: <out>_history.csv)")
    p.add_argument("--fixed", help="JSON overrides for the fixed variables")
    p.add_argument("--dump-tape", help="write the tape of one initial training step to this file")
    _add_train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report bundle for one or more checkpoints")
    p.add_argument("--checkpoint", required=True, action="append")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jm-scale", choices=("physical", "latent"), default="physical")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablation", help="train ae, ae_rtm and ae_rtm_corr and compare")
    _add_train_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-assert", action="store_true", help="exit 0 even if the expected ordering fails")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("gradcheck", help="finite-difference checks of AD primitives and the forward model")
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RTMInvertError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
