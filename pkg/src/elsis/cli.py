"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
input), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bench import FORMATS, PIPELINE_METHODS, Pipeline, render_table, run_replications
from .el_core import ElConfig, el_ratio_at_mean
from .estimating import BasisSet, LongitudinalDataset, marginal_el_stats_ee
from .exceptions import (
    ConstantColumn,
    DataError,
    DegenerateInput,
    DimensionMismatch,
    DomainViolation,
    InvalidCovariance,
    MissingColumn,
    NonNumericCell,
    RaggedRow,
)
from .iterative import IsisConfig, el_isis
from .screening import METHODS, Dataset, ScreeningReport, Threshold, TopD, apply_rule, default_d, screen
from .simgen import SimulationSpec, generate

__all__ = ["main", "read_dataset", "write_dataset"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA_VERSION = 1
DEFAULT_N = {1: 100, 2: 100, 3: 70, 4: 60, 5: 400}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- CSV input / output -------------------------------------------------------


def _number(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(row, column, text) from None
    if not math.isfinite(value):
        raise NonNumericCell(row, column, text)
    return value


def read_dataset(path, response, subject=None, time=None):
    """Load a CSV file into a Dataset, or a LongitudinalDataset when a
    ``subject`` column is named.

    Rows are numbered as in the file (the header is row 1).  Subjects are
    ordered by first appearance.  Within a subject, rows are sorted by the
    ``time`` column when one is named and otherwise keep file order; the
    time column is never a feature.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if time is not None and subject is None:
            raise DataError("a time column needs a subject column")
        for name in (response, subject, time):
            if name is not None and name not in header:
                raise MissingColumn(f"column {name!r} not found in the header of {path}")
        iy = header.index(response)
        isub = header.index(subject) if subject is not None else None
        itime = header.index(time) if time is not None else None
        ifeat = [k for k in range(len(header)) if k not in (iy, isub, itime)]
        if not ifeat:
            raise DataError(f"{path}: no feature columns besides the response")
        ys, rows, subjects, times = [], [], [], []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise RaggedRow(lineno, len(header), len(fields))
            ys.append(_number(fields[iy], lineno, header[iy]))
            rows.append([_number(fields[k], lineno, header[k]) for k in ifeat])
            if isub is not None:
                subjects.append(fields[isub].strip())
            if itime is not None:
                times.append(_number(fields[itime], lineno, header[itime]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    names = tuple(header[k] for k in ifeat)
    X = np.array(rows, dtype=float)
    y = np.array(ys, dtype=float)
    if subject is None:
        if X.shape[0] < 2:
            raise DataError(f"{path}: need at least two data rows")
        return Dataset(X, y, names)
    order = list(dict.fromkeys(subjects))
    groups = {s: [] for s in order}
    for i, s in enumerate(subjects):
        groups[s].append(i)
    if times:
        for s in order:
            groups[s].sort(key=lambda i: times[i])
    return LongitudinalDataset(
        [X[groups[s]] for s in order], [y[groups[s]] for s in order], names, subject_ids=order
    )


def write_dataset(data, path, response="y", subject="subject", time="time"):
    """Write a dataset as CSV with shortest round-trip float text, so that
    :func:`read_dataset` recovers it bit for bit."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if isinstance(data, LongitudinalDataset):
            writer.writerow([subject, time, response, *data.feature_names])
            for sid, Xb, yb in zip(data.subject_ids, data.X_blocks, data.y_blocks):
                for t, (x_row, y_val) in enumerate(zip(Xb.tolist(), yb.tolist()), start=1):
                    writer.writerow([sid, t, repr(y_val), *map(repr, x_row)])
        else:
            writer.writerow([response, *data.feature_names])
            for x_row, y_val in zip(data.X.tolist(), data.y.tolist()):
                writer.writerow([repr(y_val), *map(repr, x_row)])


# --- argument parsing ---------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_el_flags(p):
    p.add_argument("--tol", type=float, default=1e-10, help="dual convergence tolerance")
    p.add_argument("--max-iter", type=_positive_int, default=100, help="Newton iteration cap")
    p.add_argument("--margin", type=float, default=1e-12, help="hull boundary margin")


def _add_threads(p):
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker count (default: all cores)")


def _build_parser():
    parser = _Parser(prog="elsis", description="Empirical-likelihood feature screening.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("screen", help="marginal screening of a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--subject", help="subject-id column (longitudinal data, QIF estimating functions)")
    p.add_argument("--time", help="time-index column ordering measurements within a subject")
    p.add_argument("--bases", default="identity,ar1",
                   help="QIF bases for longitudinal data: identity, ar1, measurements")
    p.add_argument("--method", choices=METHODS, default="el")
    p.add_argument("--family", choices=("gaussian", "binomial"), default="gaussian")
    rule = p.add_mutually_exclusive_group()
    rule.add_argument("--top-d", type=_positive_int)
    rule.add_argument("--threshold", type=float)
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    _add_el_flags(p)
    _add_threads(p)

    p = sub.add_parser("isis", help="iterative EL screening with SCAD pruning")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--family", choices=("gaussian", "binomial"), default="gaussian")
    p.add_argument("--per-step", type=_positive_int, help="features recruited per iteration (default n/(2 log n))")
    p.add_argument("--max-active", type=_positive_int, help="active-set size cap (default n/log n)")
    p.add_argument("--iterations", type=_positive_int, default=5, help="maximum number of iterations")
    p.add_argument("--scad-a", type=float, default=3.7)
    p.add_argument("--out")
    _add_el_flags(p)
    _add_threads(p)

    p = sub.add_parser("simulate", help="write one replication of a simulation design as CSV")
    _add_design_flags(p)
    p.add_argument("--replication", type=_positive_int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("benchmark", help="replicate a simulation table")
    _add_design_flags(p)
    p.add_argument("--reps", type=_positive_int, required=True)
    p.add_argument("--method", default="el",
                   help=f"comma-separated methods from {', '.join(PIPELINE_METHODS)}")
    p.add_argument("--family", choices=("gaussian", "binomial"))
    p.add_argument("--bases", default="identity,ar1")
    rule = p.add_mutually_exclusive_group()
    rule.add_argument("--top-d", type=_positive_int)
    rule.add_argument("--threshold", type=float)
    p.add_argument("--max-active", type=_positive_int)
    p.add_argument("--format", choices=FORMATS, default="ascii")
    p.add_argument("--timing", action="store_true", help="include wall-clock times in JSON output")
    p.add_argument("--out")
    _add_el_flags(p)
    _add_threads(p)

    p = sub.add_parser("el-eval", help="EL log ratio for the mean of one column")
    p.add_argument("--input", required=True)
    p.add_argument("--column", help="column name (default: the only column)")
    p.add_argument("--mu", type=float, required=True)
    _add_el_flags(p)
    return parser


def _add_design_flags(p):
    p.add_argument("--example", type=int, choices=range(1, 6), required=True)
    p.add_argument("--n", type=_positive_int, help="sample size (default: the design's)")
    p.add_argument("--p", type=_positive_int, default=1000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--error", default="normal:1", help="comma-separated list for benchmark")
    p.add_argument("--m", type=_positive_int, default=4)
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)


# --- commands -----------------------------------------------------------------


def _el_config(args):
    return ElConfig(dual_tolerance=args.tol, max_iterations=args.max_iter, boundary_margin=args.margin)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(doc):
    return json.dumps(doc, indent=2) + "\n"


def _summary(report, config):
    lines = [f"# {k}: {json.dumps(v)}" for k, v in config.items()]
    lines.append(f"selected ({len(report.selected)}): " + ", ".join(report.feature_names[j] for j in report.selected))
    lines += [f"note: {note}" for note in report.notes]
    return "\n".join(lines) + "\n"


def _cmd_screen(args):
    el = _el_config(args)
    data = read_dataset(args.input, args.response, args.subject, args.time)
    config = {
        "command": "screen",
        "input": args.input,
        "response": args.response,
        "subject": args.subject,
        "time": args.time,
        "method": args.method,
        "family": args.family,
        "el_config": el.to_dict(),
        "threads": args.threads,
    }
    if isinstance(data, LongitudinalDataset):
        if args.method != "el":
            raise UsageError("longitudinal data (--subject) can only be screened with --method el")
        bases = BasisSet.from_names(tuple(args.bases.split(",")), data.m)
        rule = Threshold(args.threshold) if args.threshold is not None else TopD(min(args.top_d or default_d(data.n), data.p))
        stats = marginal_el_stats_ee(data, bases, el)
        report = ScreeningReport(stats, apply_rule(stats, rule), "el-qif", rule, data.n, data.p, data.feature_names)
        config["bases"] = args.bases.split(",")
    else:
        rule = Threshold(args.threshold) if args.threshold is not None else TopD(min(args.top_d or default_d(data.n), data.p))
        report = screen(data, args.method, rule, el, args.family)
    config["selection_rule"] = rule.to_dict()
    doc = {"schema_version": SCHEMA_VERSION, "config": config, "report": report.to_dict()}
    if args.out:
        _emit(_json(doc), args.out)
        sys.stdout.write(_summary(report, config))
    else:
        _emit(_json(doc), None)


def _cmd_isis(args):
    el = _el_config(args)
    data = read_dataset(args.input, args.response)
    cfg = IsisConfig(per_step_recruit=args.per_step, max_active=args.max_active, max_iterations=args.iterations,
                     family=args.family, scad_a=args.scad_a, el_config=el)
    report = el_isis(data, cfg)
    config = {"command": "isis", "input": args.input, "response": args.response,
              "isis": cfg.to_dict(data.n, data.p), "threads": args.threads}
    doc = {"schema_version": SCHEMA_VERSION, "config": config, "report": report.to_dict()}
    if args.out:
        _emit(_json(doc), args.out)
        sys.stdout.write(_summary(report, config))
    else:
        _emit(_json(doc), None)


def _spec(args, error=None):
    return SimulationSpec(example=args.example, n=args.n or DEFAULT_N[args.example], p=args.p, c=args.c,
                          error=error or args.error, m=args.m, ar1_rho=args.rho, seed=args.seed)


def _cmd_simulate(args):
    spec = _spec(args)
    data = generate(spec, args.replication)
    write_dataset(data, args.out)
    config = {"command": "simulate", "spec": spec.to_dict(), "replication": args.replication, "out": args.out}
    sys.stdout.write(_json(config))


def _cmd_benchmark(args):
    el = _el_config(args)
    errors = [e.strip() for e in args.error.split(",") if e.strip()]
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    bad = [m for m in methods if m not in PIPELINE_METHODS]
    if bad or not methods:
        raise UsageError(f"unknown method(s) {bad}; choose from {PIPELINE_METHODS}")
    family = args.family or ("binomial" if args.example == 5 else "gaussian")
    isis = IsisConfig(max_active=args.max_active, family=family, el_config=el)
    tables = []
    for error in errors:
        spec = _spec(args, error)
        for method in methods:
            pipe = Pipeline(method=method, top_d=args.top_d, threshold=args.threshold, family=family,
                            bases=tuple(args.bases.split(",")), isis=isis, el_config=el)
            with threadpool_limits(limits=1 if args.threads > 1 else None):
                tables.append(run_replications(spec, pipe, args.reps, workers=args.threads))
    text = render_table(tables, args.format, timing=args.timing)
    if args.format != "json":
        header = {"command": "benchmark", "example": args.example, "reps": args.reps, "seed": args.seed,
                  "methods": methods, "errors": errors, "top_d": args.top_d, "threshold": args.threshold,
                  "family": family, "el_config": el.to_dict(), "threads": args.threads}
        text = "".join(f"# {k}: {json.dumps(v)}\n" for k, v in header.items()) + text
    _emit(text, args.out)
    failed = sum(len(t.failures) for t in tables)
    if failed:
        sys.stderr.write(f"warning: {failed} replication(s) failed; see the JSON report\n")


def _cmd_el_eval(args):
    el = _el_config(args)
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{args.input}: empty file") from None
        if args.column is None:
            if len(header) != 1:
                raise UsageError(f"file has {len(header)} columns; choose one with --column")
            k = 0
        elif args.column in header:
            k = header.index(args.column)
        else:
            raise MissingColumn(f"column {args.column!r} not found in the header of {args.input}")
        values = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise RaggedRow(lineno, len(header), len(fields))
            values.append(_number(fields[k], lineno, header[k]))
    sol = el_ratio_at_mean(np.array(values), args.mu, el)
    config = {"command": "el-eval", "input": args.input, "column": header[k], "mu": args.mu,
              "el_config": el.to_dict()}
    sys.stdout.write("".join(f"# {key}: {json.dumps(v)}\n" for key, v in config.items()))
    sys.stdout.write(f"# status: {sol.status.name.lower()}, iterations: {sol.iterations}\n")
    sys.stdout.write(f"{sol.log_ratio:.12g}\n")


_COMMANDS = {
    "screen": _cmd_screen,
    "isis": _cmd_isis,
    "simulate": _cmd_simulate,
    "benchmark": _cmd_benchmark,
    "el-eval": _cmd_el_eval,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if getattr(args, "threads", None) and args.command in ("screen", "isis"):
            with threadpool_limits(limits=args.threads):
                _COMMANDS[args.command](args)
        else:
            _COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"elsis: error: {exc}\n")
        return EXIT_USAGE
    except (DataError, ConstantColumn, DimensionMismatch, OSError) as exc:
        sys.stderr.write(f"elsis: data error: {exc}\n")
        return EXIT_DATA
    except (DegenerateInput, DomainViolation, InvalidCovariance, np.linalg.LinAlgError, ArithmeticError) as exc:
        sys.stderr.write(f"elsis: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"elsis: error: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
