"""Command-line front end: gen-data, train, approx, verify, report.

Exit codes: 0 success, 1 constraint or verification failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

from . import __version__
from .bench import default_library, training_suite
from .dataset import DEFAULT_DEPTH_LIMIT, DatasetError, as_arrays, generate_training_data, read_dataset, \
    split_dataset, write_dataset
from .errorprop import sampled_error_rate, signal_probabilities
from .mlp import ModelError, Mlp, accuracy
from .netlist import LibraryError, NetlistError, export_blif, read_blif, read_library
from .optimizer import ApproxConfig, DnnPredictor, OraclePredictor, approximate
from .powermodel import cost_report
from .truthtable import DEFAULT_PI_CAP, exact_error_rate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_lib(args):
    if args.lib is None:
        return default_library()
    return read_library(args.lib)


def _load_netlists(paths, lib):
    return [read_blif(p, lib) for p in paths]


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def _fmt(v: float) -> str:
    return f"{v:.6f}"


# -- commands ------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    lib = _load_lib(args)
    nets = _load_netlists(args.inputs, lib) if args.inputs else training_suite(lib)
    samples = generate_training_data(nets, lib, args.depth_limit, jobs=args.jobs)
    if args.out is None:
        raise UsageError("gen-data needs --out")
    write_dataset(samples, args.out)
    print(f"circuits: {len(nets)}")
    print(f"samples: {len(samples)}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.data is None or args.out is None:
        raise UsageError("train needs --data and --out")
    samples = read_dataset(args.data)
    if not samples:
        raise DatasetError(f"{args.data}: empty dataset")
    train, val, test = split_dataset(samples, (0.6, 0.2, 0.2), seed=args.seed)
    xt, yt = as_arrays(train)
    xv, yv = as_arrays(val)
    xs, ys = as_arrays(test)
    print(f"train: lr {args.lr:g} epochs {args.epochs} batch {args.batch} seed {args.seed} "
          f"split 60/20/20 samples {len(train)}/{len(val)}/{len(test)}")
    model = Mlp(seed=args.seed)
    hist = model.fit(xt, yt, xv, yv, epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed)
    for r in hist.epochs:
        print(f"epoch {r.epoch}: loss {r.train_loss:.6f} val_exact {r.val_exact:.4f} val_within1 {r.val_within1:.4f}")
    exact, near = accuracy(model.predict_class(xs), ys) if len(xs) else (0.0, 0.0)
    model.save(args.out)
    print(f"best_epoch: {hist.best_epoch}")
    print(f"test_accuracy: {exact:.4f} {near:.4f}")
    if args.plots and hist.epochs:
        from .plotting import plot_training
        print(f"figure: {plot_training(hist, os.path.join(args.plots, 'training.png'))}")
    return EXIT_OK


def _predictor(args):
    if args.predictor == "oracle":
        return OraclePredictor()
    if args.model is None:
        raise UsageError("--predictor dnn needs --model")
    return DnnPredictor(Mlp.load(args.model), depth_limit=args.depth_limit)


def cmd_approx(args) -> int:
    if not args.inputs:
        raise UsageError("approx needs --in")
    lib = _load_lib(args)
    if not 0.0 <= args.emax <= 1.0:
        raise UsageError(f"--emax must lie in [0, 1], got {args.emax}")
    nets = _load_netlists(args.inputs, lib)
    if len(nets) > 1 and args.out not in (None, "-") and not os.path.isdir(args.out):
        raise UsageError("--out must be a directory when several netlists are given")
    config = ApproxConfig(e_max=args.emax, mode=args.mode, preserve_delay=args.preserve_delay,
                          pi_cap=args.pi_cap, depth_limit=args.depth_limit, seed=args.seed)
    status = EXIT_OK
    rows = []
    for path, nl in zip(args.inputs, nets):
        out, rep, _ = approximate(nl, lib, config, _predictor(args))
        if args.out not in (None, "-"):
            dest = os.path.join(args.out, os.path.basename(path)) if os.path.isdir(args.out) else args.out
            _write(dest, export_blif(out))
        text = rep.to_text()
        if args.report:
            _write(args.report if len(nets) == 1 else f"{args.report}.{nl.name}", text)
        sys.stdout.write(text)
        if len(nets) > 1:
            sys.stdout.write("\n")
        if rep.flagged:
            status = EXIT_FAIL
        rows.append((nl.name, rep.power_before, rep.power_after, rep.area_before, rep.area_after,
                     rep.delay_before, rep.delay_after))
    if args.plots:
        from .plotting import plot_costs
        fig = plot_costs(rows, os.path.join(args.plots, "approx_costs.png"),
                         f"mode {args.mode}, E_max {args.emax:g}")
        print(f"figure: {fig}")
    return status


def cmd_verify(args) -> int:
    if not args.inputs or args.approx is None:
        raise UsageError("verify needs --in and --approx")
    lib = _load_lib(args)
    exact = read_blif(args.inputs[0], lib)
    approx = read_blif(args.approx, lib)
    if args.method == "exhaustive":
        per_po = exact_error_rate(exact, approx, args.pi_cap).per_po
    else:
        per_po = list(sampled_error_rate(exact, approx, args.samples, args.seed))
    print(f"method: {args.method}")
    print("output,error_rate")
    for name, e in zip(exact.outputs, per_po):
        print(f"{name},{_fmt(e)}")
    worst = max(per_po, default=0.0)
    print(f"max,{_fmt(worst)}")
    if args.emax_check is not None and worst > args.emax_check:
        return EXIT_FAIL
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs --in")
    lib = _load_lib(args)
    nets = _load_netlists(args.inputs, lib)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["circuit", "inputs", "outputs", "nodes", "levels", "power", "area", "delay"])
    power, area = [], []
    for nl in nets:
        r = cost_report(nl, signal_probabilities(nl))
        w.writerow([nl.name, len(nl.inputs), len(nl.outputs), r.num_nodes, r.depth,
                    _fmt(r.total_power), _fmt(r.total_area), _fmt(r.critical_delay)])
        power.append(r.total_power)
        area.append(r.total_area)
    _write(args.out, buf.getvalue())
    if args.plots:
        from .plotting import plot_netlist_costs
        print(f"figure: {plot_netlist_costs([n.name for n in nets], power, area, os.path.join(args.plots, 'costs.png'))}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alsx", description="Power-driven approximate logic synthesis.")
    p.add_argument("--version", action="version", version=f"alsx {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lib", help="technology library (default: shipped synthetic library)")
    common.add_argument("--in", dest="inputs", nargs="+", metavar="BLIF", help="input netlist(s)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--depth-limit", type=int, default=DEFAULT_DEPTH_LIMIT)
    common.add_argument("--pi-cap", type=int, default=DEFAULT_PI_CAP)
    common.add_argument("--plots", metavar="DIR", help="write figures into DIR")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate predictor training data")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the error-rate predictor")
    t.add_argument("--data", help="dataset file")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=32)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("approx", parents=[common], help="approximate a netlist under an error budget")
    a.add_argument("--emax", type=float, default=0.05)
    a.add_argument("--mode", choices=("power", "area", "delay"), default="power")
    a.add_argument("--predictor", choices=("oracle", "dnn"), default="oracle")
    a.add_argument("--model", help="trained model file (dnn predictor)")
    a.add_argument("--preserve-delay", action="store_true")
    a.add_argument("--report", help="also write the report to this file")
    a.set_defaults(func=cmd_approx)

    v = sub.add_parser("verify", parents=[common], help="error rate of an approximate netlist")
    v.add_argument("--approx", required=False, help="approximate netlist")
    v.add_argument("--method", choices=("exhaustive", "mc"), default="exhaustive")
    v.add_argument("--samples", type=int, default=1_000_000)
    v.add_argument("--emax", dest="emax_check", type=float, help="fail if the max error exceeds this")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", parents=[common], help="power, area and delay of netlists")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"alsx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, LibraryError, NetlistError, DatasetError, ModelError, ValueError) as exc:
        print(f"alsx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
