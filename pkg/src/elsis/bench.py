"""Replication harness for the simulation tables.

A benchmark runs one screening pipeline over replications ``1..R`` of a
SimulationSpec, records each replication's final selected set and reduces
them to the per-feature selection counts reported in the tables.
Replication ``r`` always draws from stream ``(seed, r)``, so results do not
depend on how the replications are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .el_core import DEFAULT_CONFIG, ElConfig
from .estimating import BasisSet, LongitudinalDataset, marginal_el_stats_ee
from .exceptions import ElsisError
from .iterative import IsisConfig, el_isis
from .screening import METHODS, Threshold, TopD, apply_rule, default_d, screen, standardize
from .simgen import generate

__all__ = [
    "Pipeline",
    "BenchmarkTable",
    "run_pipeline",
    "run_replications",
    "run_grid",
    "aggregate",
    "render_table",
    "parse_tables",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
PIPELINE_METHODS = METHODS + ("el-isis",)
FORMATS = ("csv", "json", "ascii")


@dataclass(frozen=True)
class Pipeline:
    """What to run on every replication.

    ``top_d`` and ``threshold`` are mutually exclusive; with neither the
    rule is top-d with ``d = floor(n / (2 log n))``.  ``bases`` only
    matters for longitudinal data screened with ``method="el"``; baselines
    on longitudinal data see the stacked measurements.
    """

    method: str = "el"
    top_d: int | None = None
    threshold: float | None = None
    family: str = "gaussian"
    bases: tuple = ("identity", "ar1")
    isis: IsisConfig | None = None
    el_config: ElConfig = DEFAULT_CONFIG

    def __post_init__(self):
        if self.method not in PIPELINE_METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {PIPELINE_METHODS}")
        if self.top_d is not None and self.threshold is not None:
            raise ValueError("give either top_d or threshold, not both")
        if self.top_d is not None and self.top_d < 1:
            raise ValueError("top_d must be at least 1")
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.family not in ("gaussian", "binomial"):
            raise ValueError(f"unknown family {self.family!r}")

    def rule(self, n, p):
        if self.threshold is not None:
            return Threshold(self.threshold)
        return TopD(min(self.top_d or default_d(n), p))

    def isis_config(self):
        base = self.isis or IsisConfig()
        return replace(base, family=self.family, el_config=self.el_config,
                       per_step_recruit=base.per_step_recruit or self.top_d)

    def to_dict(self, n=None, p=None):
        out = {
            "method": self.method,
            "top_d": self.top_d,
            "threshold": self.threshold,
            "family": self.family,
            "bases": list(self.bases),
            "el_config": self.el_config.to_dict(),
        }
        if n is not None:
            out["rule"] = self.rule(n, p).to_dict()
        if self.method == "el-isis":
            out["isis"] = self.isis_config().to_dict(n, p)
        return out


def run_pipeline(data, pipeline):
    """Selected feature indices (0-based) for one dataset."""
    if isinstance(data, LongitudinalDataset):
        if pipeline.method == "el":
            stats = marginal_el_stats_ee(data, BasisSet.from_names(pipeline.bases, data.m), pipeline.el_config)
            return apply_rule(stats, pipeline.rule(data.n, data.p))
        if pipeline.method == "el-isis":
            raise ValueError("el-isis is not available for longitudinal data")
        flat = data.flatten()
        rule = pipeline.rule(data.n, data.p)
        return screen(flat, pipeline.method, rule, pipeline.el_config, pipeline.family).selected
    if pipeline.method == "el-isis":
        return el_isis(data, pipeline.isis_config()).selected
    data = standardize(data)
    rule = pipeline.rule(data.n, data.p)
    return screen(data, pipeline.method, rule, pipeline.el_config, pipeline.family).selected


def _one(args):
    spec, pipeline, r = args
    try:
        selected = run_pipeline(generate(spec, r), pipeline)
    except (ElsisError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}"
    return r, [int(j) for j in selected], None


@dataclass
class BenchmarkTable:
    """Aggregated result of one (spec, pipeline) benchmark.

    ``unimportant_avg`` follows the tables' convention, the selection count
    summed over unimportant features and divided by their number
    ``p - |M*|``.  ``unimportant_per_rep`` is the same sum divided by the
    number of successful replications, i.e. the mean number of unimportant
    features in a final model.
    """

    method: str
    per_true_feature_counts: dict
    unimportant_avg: float
    unimportant_per_rep: float
    R: int
    wall_time: float | None
    failures: list = field(default_factory=list)
    selections: list = field(default_factory=list)
    setting: str = ""
    spec: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)

    def to_dict(self, timing=False):
        return {
            "setting": self.setting,
            "method": self.method,
            "per_true_feature_counts": dict(self.per_true_feature_counts),
            "unimportant_avg": self.unimportant_avg,
            "unimportant_per_rep": self.unimportant_per_rep,
            "R": self.R,
            "wall_time": self.wall_time if timing else None,
            "failures": list(self.failures),
            "spec": self.spec,
            "pipeline": self.pipeline,
            "selections": self.selections,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            method=d["method"],
            per_true_feature_counts=dict(d["per_true_feature_counts"]),
            unimportant_avg=d["unimportant_avg"],
            unimportant_per_rep=d["unimportant_per_rep"],
            R=d["R"],
            wall_time=d.get("wall_time"),
            failures=list(d.get("failures", [])),
            selections=list(d.get("selections", [])),
            setting=d.get("setting", ""),
            spec=d.get("spec", {}),
            pipeline=d.get("pipeline", {}),
        )

    @property
    def frequencies(self):
        ok = self.R - len(self.failures)
        return {k: v / ok for k, v in self.per_true_feature_counts.items()} if ok else {}


def aggregate(selections, support, p):
    """Recount a list of per-replication selections (None = failed).

    Returns (true-feature counts in support order, unimportant_avg,
    unimportant_per_rep).
    """
    counts = np.zeros(p, dtype=int)
    done = 0
    for sel in selections:
        if sel is None:
            continue
        done += 1
        counts[np.unique(np.asarray(sel, dtype=int))] += 1
    support = list(support)
    false_total = int(counts.sum() - counts[support].sum())
    unimportant_avg = false_total / (p - len(support))
    per_rep = false_total / done if done else None
    return [int(counts[j]) for j in support], unimportant_avg, per_rep


def _label(spec):
    if spec.example == 4:
        return f"example {spec.example}, c={spec.c:g}"
    if spec.example == 3:
        return f"example {spec.example}, c={spec.c:g}, n={spec.n}"
    if spec.example == 5:
        return f"example {spec.example}, n={spec.n}"
    return f"example {spec.example}, {spec.error}"


def run_replications(spec, pipeline, R, workers=1, setting=None):
    """Run ``pipeline`` on replications 1..R of ``spec``.

    ``workers > 1`` spreads replications over processes; the table is the
    same either way.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    start = time.perf_counter()
    jobs = [(spec, pipeline, r) for r in range(1, R + 1)]
    if workers == 1 or R == 1:
        results = [_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
            results = list(pool.map(_one, jobs, chunksize=max(1, R // (4 * workers))))
    results.sort(key=lambda t: t[0])
    selections = [sel for _, sel, _ in results]
    failures = [{"replication": r, "error": err} for r, _, err in results if err is not None]
    names = tuple(f"x{j + 1}" for j in range(spec.p))
    counts, avg, per_rep = aggregate(selections, spec.true_support, spec.p)
    first = generate(spec, 1)
    n_eff = first.n
    return BenchmarkTable(
        method=pipeline.method,
        per_true_feature_counts={names[j]: c for j, c in zip(spec.true_support, counts)},
        unimportant_avg=avg,
        unimportant_per_rep=per_rep,
        R=R,
        wall_time=time.perf_counter() - start,
        failures=failures,
        selections=selections,
        setting=setting if setting is not None else _label(spec),
        spec=spec.to_dict(),
        pipeline=pipeline.to_dict(n_eff, spec.p),
    )


def run_grid(specs, pipelines, R, workers=1):
    """One table per (spec, pipeline) pair, specs outermost (the tables'
    row order: setting, then method)."""
    return [run_replications(s, pl, R, workers) for s in specs for pl in pipelines]


# --- rendering --------------------------------------------------------------


def _feature_columns(tables):
    cols = []
    for t in tables:
        for name in t.per_true_feature_counts:
            if name not in cols:
                cols.append(name)
    return sorted(cols, key=lambda s: int(s[1:]) if s[1:].isdigit() else s)


def _rows(tables):
    cols = _feature_columns(tables)
    header = ["setting", "method"] + cols + ["unimportant_avg", "R", "failures"]
    rows = []
    for t in tables:
        rows.append(
            [t.setting, t.method.upper() + ("" if t.method.endswith("isis") else "-SIS")]
            + [str(t.per_true_feature_counts.get(c, "")) for c in cols]
            + [f"{t.unimportant_avg:.6f}", str(t.R), str(len(t.failures))]
        )
    return header, rows


def render_table(tables, format="ascii", timing=False):
    """Serialize tables as CSV, JSON or an aligned ASCII table.

    JSON is the complete record (it parses back with :func:`parse_tables`);
    CSV and ASCII show the table cells only.  Wall-clock times are included
    in JSON only when ``timing`` is set, so repeated runs give identical
    bytes.
    """
    format = format.lower()
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")
    tables = list(tables)
    if format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "tables": [t.to_dict(timing) for t in tables]}
        return json.dumps(doc, indent=2) + "\n"
    header, rows = _rows(tables)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    widths = [max(len(r[k]) for r in [header] + rows) for k in range(len(header))]
    line = "-+-".join("-" * w for w in widths)
    out = [" | ".join(h.ljust(w) for h, w in zip(header, widths)), line]
    out += [" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(out) + "\n"


def parse_tables(text):
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    return [BenchmarkTable.from_dict(d) for d in doc["tables"]]
