"""Command-line front end.

    betashap gen    --kind gaussian-classification --n 200 --seed 0 --out-dir run/
    betashap value  --train run/train.csv --val run/val.csv --alpha 16 --beta 1 --engine mc --out-dir vals/
    betashap task detect --values vals/values.csv --noise run/noise.json --out-dir det/

Every command writes its outputs plus ``manifest.json`` into ``--out-dir``.
Outputs are a pure function of the inputs and flags; wall-clock timings are
only recorded with ``--timings`` because they would break byte-identity.

Exit codes: 0 success, 1 usage, 2 input or validation error,
3 non-convergence under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from ._seeding import derive_seed
from .data import SYNTHETIC_KINDS, NoiseRecord, flip_labels, generate_splits, load_csv, save_csv
from .errors import BetaShapError, ParseError
from .exact import ValueVector, marginal_profiles, semivalue_from_profiles, utility_table, write_profiles_csv
from .game import TrainingConfig, UtilityGame, UtilitySpec
from .mc import McConfig, mc_estimate
from .tasks import detect_noisy, point_curve, snr_scan, subsample_train_eval
from .weights import BetaParams, make_scheme

log = logging.getLogger("betashap")

EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


class Run:
    """Collects what a command read, wrote and configured; emits the manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.out_dir = args.out_dir
        os.makedirs(self.out_dir, exist_ok=True)
        self.inputs = {}
        self.outputs = []
        self.config = {}
        self.counts = {}
        self.t0 = time.perf_counter()

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def read(self, path):
        if not os.path.isfile(path):
            raise FileNotFoundError(f"input file not found: {path}")
        self.inputs[path] = _sha256(path)
        return path

    def finish(self):
        manifest = {
            "tool": "betashap",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "inputs": [{"path": p, "sha256": h} for p, h in self.inputs.items()],
            "outputs": [
                {"path": name, "sha256": _sha256(os.path.join(self.out_dir, name))}
                for name in self.outputs
            ],
            "utility_evaluations": self.counts,
        }
        if getattr(self.args, "timings", False):
            manifest["wall_clock_seconds"] = round(time.perf_counter() - self.t0, 3)
        _write_json(manifest, os.path.join(self.out_dir, "manifest.json"))


# --------------------------------------------------------------------------
# helpers shared by commands

def _training(args):
    return TrainingConfig(reg=args.reg, max_iter=args.newton_max_iter, tol=args.newton_tol)


def _utility_spec(args, validation):
    metric = args.metric
    model = args.model or ("logistic-regression" if metric == "accuracy" else "linear-regression")
    return UtilitySpec(model, metric, validation, _training(args))


def _scheme_from_args(args, n):
    if args.data_shapley:
        # alias of Beta(1,1)
        return make_scheme(n, "beta", params=BetaParams(1.0, 1.0))
    if args.loo_first:
        return make_scheme(n, "loo-first")
    if args.loo_last:
        return make_scheme(n, "loo-last")
    if args.alpha is None or args.beta is None:
        raise UsageError("choose a scheme: --alpha A --beta B, --data-shapley, --loo-first or --loo-last")
    return make_scheme(n, "beta", params=BetaParams(args.alpha, args.beta))


def load_values(path):
    """Read an ``id,value[,...]`` CSV into a :class:`ValueVector`."""
    ids, vals = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames or "value" not in reader.fieldnames:
            raise ParseError("values file needs 'id' and 'value' columns", row=1)
        for lineno, rec in enumerate(reader, start=2):
            try:
                ids.append(int(rec["id"]))
                vals.append(float(rec["value"]))
            except (TypeError, ValueError):
                raise ParseError("bad id/value", row=lineno) from None
    return ValueVector(np.array(ids, dtype=np.int64), np.array(vals), None, "file")


def _load_dataset(run, path, label):
    return load_csv(run.read(path), label=label)


def _aligned(values, data):
    if not np.array_equal(values.ids, data.ids):
        pos = data.positions_of(values.ids)
        if len(pos) != data.n:
            raise BetaShapError("values file does not cover every training point")
        order = np.argsort(pos)
        return ValueVector(values.ids[order], values.values[order], None, values.mode)
    return values


# --------------------------------------------------------------------------
# commands

def cmd_gen(args):
    run = Run(args, "gen")
    sizes = [args.n, args.val, args.test]
    run.config = {"kind": args.kind, "n": args.n, "val": args.val, "test": args.test,
                  "seed": args.seed, "flip": args.flip}
    train, val, test = generate_splits(args.kind, sizes, derive_seed(args.seed, "gen"))
    noise = {}
    if args.flip > 0:
        train, rec = flip_labels(train, args.flip, derive_seed(args.seed, "flip", "train"))
        noise["train"] = rec.to_dict()
        if args.val:
            val, vrec = flip_labels(val, args.flip, derive_seed(args.seed, "flip", "val"))
            noise["val"] = vrec.to_dict()
    save_csv(train, run.path("train.csv"))
    if args.val:
        save_csv(val, run.path("val.csv"))
    if args.test:
        save_csv(test, run.path("test.csv"))
    if noise:
        _write_json(noise["train"], run.path("noise.json"))
        if "val" in noise:
            _write_json(noise["val"], run.path("noise_val.json"))
    run.finish()
    return 0


def cmd_value(args):
    run = Run(args, "value")
    train = _load_dataset(run, args.train, args.label)
    val = _load_dataset(run, args.val, args.label)
    spec = _utility_spec(args, val)
    scheme = _scheme_from_args(args, train.n)
    game = UtilityGame(train, spec, threads=args.threads)
    run.config = {"engine": args.engine, "scheme": scheme.to_dict(), "utility": spec.to_dict(),
                  "threads_independent": True}
    code = 0
    if args.engine == "exact":
        table = utility_table(game)
        profiles = marginal_profiles(game, table)
        vv = ValueVector(train.ids.copy(), semivalue_from_profiles(profiles, scheme), scheme, "exact")
        vv.write_csv(run.path("values.csv"))
        _write_json({**vv.to_dict(), "utility_calls": game.calls,
                     "unique_evaluations": game.unique_evaluations}, run.path("report.json"))
        write_profiles_csv(profiles, run.path("profiles.csv"))
    else:
        cfg = McConfig(chains=args.chains, rho=args.rho, min_iterations_per_chain=args.min_iter,
                       max_iterations_per_chain=args.max_iter, check_every=args.check_every,
                       seed=derive_seed(args.seed, "mc"))
        run.config["mc"] = {**cfg.to_dict(), "root_seed": args.seed}
        rep = mc_estimate(game, scheme, cfg)
        rep.write_csv(run.path("values.csv"))
        rep.write_json(run.path("report.json"))
        if not rep.converged:
            log.warning("not converged after %d iterations per chain", rep.iterations)
            if args.strict:
                code = EXIT_NONCONVERGED
    run.counts = {"calls": game.calls, "unique_subsets": game.unique_evaluations,
                  "model_fits": game.fits, "nonconverged_fits": game.nonconverged}
    run.finish()
    return code


def cmd_detect(args):
    run = Run(args, "task detect")
    values = load_values(run.read(args.values))
    with open(run.read(args.noise), encoding="utf-8") as fh:
        record = NoiseRecord.from_dict(json.load(fh))
    res = detect_noisy(values, record)
    run.config = {"task": "detect"}
    res.write_json(run.path("detection.json"))
    run.finish()
    return 0


def cmd_subsample(args):
    run = Run(args, "task subsample")
    train = _load_dataset(run, args.train, args.label)
    test = _load_dataset(run, args.test, args.label)
    values = _aligned(load_values(run.read(args.values)), train)
    spec = UtilitySpec("logistic-regression", "accuracy", test, _training(args))
    res = subsample_train_eval(train, values, spec, keep=args.keep, seed=derive_seed(args.seed, "subsample"))
    run.config = {"task": "subsample", "keep": args.keep, "seed": args.seed, "utility": spec.to_dict()}
    res.write_json(run.path("subsample.json"))
    run.finish()
    return 0


def cmd_curve(args):
    run = Run(args, "task curve")
    train = _load_dataset(run, args.train, args.label)
    val = _load_dataset(run, args.val, args.label)
    values = _aligned(load_values(run.read(args.values)), train)
    spec = _utility_spec(args, val)
    game = UtilityGame(train, spec, threads=args.threads)
    res = point_curve(game, values, args.direction, steps=args.steps, init_size=args.init_size,
                      seed=derive_seed(args.seed, "curve"), ordering=args.ordering)
    run.config = {"task": "curve", "direction": args.direction, "steps": args.steps,
                  "init_size": args.init_size, "ordering": args.ordering, "seed": args.seed,
                  "utility": spec.to_dict()}
    res.write_csv(run.path("curve.csv"))
    res.write_json(run.path("curve.json"))
    run.counts = {"calls": game.calls, "unique_subsets": game.unique_evaluations}
    run.finish()
    return 0


def cmd_snr(args):
    run = Run(args, "task snr")
    try:
        grid = [int(x) for x in args.grid.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--grid must be comma-separated integers, got {args.grid!r}") from None
    prof = snr_scan(args.kind, args.n, grid, repeats=args.repeats, samples=args.samples,
                    seed=derive_seed(args.seed, "snr"), n_validation=args.n_val,
                    flip_target=args.flip_target, noise_fraction=args.noise,
                    training=_training(args), threads=args.threads)
    run.config = {"task": "snr", "kind": args.kind, "n": args.n, "grid": grid, "repeats": args.repeats,
                  "samples": args.samples, "n_val": args.n_val, "flip_target": args.flip_target,
                  "noise": args.noise, "seed": args.seed}
    prof.write_csv(run.path("snr.csv"))
    prof.write_json(run.path("snr.json"))
    run.finish()
    return 0


# --------------------------------------------------------------------------
# parser

def _add_common(p):
    p.add_argument("--out-dir", required=True, help="directory for outputs and manifest.json")
    p.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    p.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
    p.add_argument("--timings", action="store_true", help="record wall-clock time in the manifest")


def _add_training(p):
    p.add_argument("--reg", type=float, default=1.0, help="L2 strength on coefficients")
    p.add_argument("--newton-max-iter", type=int, default=100)
    p.add_argument("--newton-tol", type=float, default=1e-8)


def _add_utility(p):
    p.add_argument("--metric", choices=["accuracy", "negative-mse"], default="accuracy")
    p.add_argument("--model", choices=["logistic-regression", "linear-regression", "constant-predictor-only"])
    p.add_argument("--label", default="y", help="label column name")
    _add_training(p)


def build_parser():
    parser = _Parser(prog="betashap", description="Data valuation with Beta(alpha, beta) semivalues")
    parser.add_argument("--version", action="version", version=f"betashap {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True, choices=SYNTHETIC_KINDS)
    p.add_argument("--n", type=int, required=True, help="number of valued points")
    p.add_argument("--val", type=int, default=0, help="validation points")
    p.add_argument("--test", type=int, default=0, help="held-out test points")
    p.add_argument("--flip", type=float, default=0.0, help="label-flip fraction for train and val")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("value", help="compute data values")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data-shapley", action="store_true")
    g.add_argument("--loo-first", action="store_true")
    g.add_argument("--loo-last", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--engine", choices=["exact", "mc"], default="mc")
    p.add_argument("--chains", type=int, default=10)
    p.add_argument("--rho", type=float, default=1.0005)
    p.add_argument("--min-iter", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=50000)
    p.add_argument("--check-every", type=int, default=100)
    p.add_argument("--strict", action="store_true", help="exit 3 if the Monte-Carlo run did not converge")
    _add_utility(p)
    _add_common(p)
    p.set_defaults(func=cmd_value)

    task = sub.add_parser("task", help="downstream tasks")
    tsub = task.add_subparsers(dest="task", required=True, parser_class=_Parser)

    p = tsub.add_parser("detect", help="noisy-label detection")
    p.add_argument("--values", required=True)
    p.add_argument("--noise", required=True, help="noise record JSON")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = tsub.add_parser("subsample", help="learning with value-weighted subsamples")
    p.add_argument("--values", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--keep", type=float, default=0.25)
    p.add_argument("--label", default="y")
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_subsample)

    p = tsub.add_parser("curve", help="point addition / removal curve")
    p.add_argument("--values", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True, help="dataset scoring each step")
    p.add_argument("--direction", choices=["add", "remove"], required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--init-size", type=int, default=10)
    p.add_argument("--ordering", choices=["value", "random"], default="value")
    _add_utility(p)
    _add_common(p)
    p.set_defaults(func=cmd_curve)

    p = tsub.add_parser("snr", help="signal-to-noise scan of marginal contributions")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, default="snr-classification")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--grid", default="2,50,150,400")
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--samples", type=int, default=50, help="subsets per cardinality per repeat")
    p.add_argument("--n-val", type=int, default=500)
    p.add_argument("--flip-target", action="store_true")
    p.add_argument("--noise", type=float, default=0.0, help="label-flip fraction for backgrounds")
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_snr)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"betashap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BetaShapError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"betashap: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
