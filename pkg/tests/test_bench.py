import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elsis.bench import BenchmarkTable, Pipeline, aggregate, parse_tables, render_table, run_grid, run_replications
from elsis.simgen import SimulationSpec


def _spec(**kw):
    return SimulationSpec(**{"example": 1, "n": 60, "p": 40, "seed": 42, **kw})


def test_pipeline_validation():
    with pytest.raises(ValueError):
        Pipeline(method="lasso")
    with pytest.raises(ValueError):
        Pipeline(top_d=3, threshold=1.0)
    with pytest.raises(ValueError):
        Pipeline(threshold=-1.0)
    assert Pipeline().rule(100, 1000).to_dict() == {"rule": "top_d", "d": 10}
    assert Pipeline(method="el-isis", top_d=4).isis_config().per_step_recruit == 4


def test_full_selection_counts_every_true_feature():
    t = run_replications(_spec(), Pipeline(top_d=40), 1)
    assert list(t.per_true_feature_counts.values()) == [1, 1, 1]
    assert t.unimportant_per_rep == 37
    assert t.unimportant_avg == pytest.approx(1.0)


def test_counts_equal_recount_of_logs():
    spec = _spec()
    t = run_replications(spec, Pipeline(top_d=5), 6)
    counts, avg, per_rep = aggregate(t.selections, spec.true_support, spec.p)
    assert counts == list(t.per_true_feature_counts.values())
    assert avg == t.unimportant_avg and per_rep == t.unimportant_per_rep
    assert all(0 <= c <= t.R for c in counts)
    brute = sum(1 for sel in t.selections for j in sel if j not in spec.true_support)
    assert t.unimportant_avg == pytest.approx(brute / (spec.p - 3))


def test_aggregate_skips_failures():
    counts, avg, per_rep = aggregate([[0, 5], None, [0, 1, 6]], (0, 1, 2), 10)
    assert counts == [2, 1, 0]
    assert avg == pytest.approx(2 / 7) and per_rep == 1.0
    assert aggregate([None], (0,), 3)[2] is None


def test_serial_and_parallel_tables_agree():
    spec, pipe = _spec(), Pipeline(method="rrc", top_d=5)
    a = run_replications(spec, pipe, 4, workers=1)
    b = run_replications(spec, pipe, 4, workers=2)
    assert render_table([a], "json") == render_table([b], "json")


@settings(max_examples=5)
@given(st.integers(1, 4))
def test_first_replications_do_not_depend_on_r(R):
    spec, pipe = _spec(n=40, p=30), Pipeline(method="ls", top_d=4)
    short = run_replications(spec, pipe, R)
    long = run_replications(spec, pipe, R + 2)
    assert long.selections[:R] == short.selections


def test_json_round_trip():
    tables = run_grid([_spec(), _spec(error="t4")], [Pipeline(top_d=5), Pipeline(method="ls", top_d=5)], 2)
    text = render_table(tables, "json", timing=True)
    back = parse_tables(text)
    assert [t.to_dict(timing=True) for t in back] == [t.to_dict(timing=True) for t in tables]
    assert json.loads(render_table(tables, "json"))["tables"][0]["wall_time"] is None
    with pytest.raises(ValueError):
        parse_tables(json.dumps({"schema_version": 99, "tables": []}))


def test_empty_list_renders_header_only():
    assert render_table([], "csv") == "setting,method,unimportant_avg,R,failures\n"
    ascii_ = render_table([], "ascii").splitlines()
    assert len(ascii_) == 2 and ascii_[0].startswith("setting")
    assert json.loads(render_table([], "json")) == {"schema_version": 1, "tables": []}
    with pytest.raises(ValueError):
        render_table([], "xml")


def test_table1_layout_rows():
    errors = ["normal:1", "t4"]
    methods = ["el", "ls", "rrc"]
    tables = run_grid([_spec(error=e) for e in errors], [Pipeline(method=m, top_d=5) for m in methods], 1)
    header, *rows = csv.reader(render_table(tables, "csv").splitlines())
    assert header == ["setting", "method", "x1", "x2", "x3", "unimportant_avg", "R", "failures"]
    assert [r[1] for r in rows] == ["EL-SIS", "LS-SIS", "RRC-SIS"] * 2
    assert [r[0] for r in rows] == ["example 1, normal:1"] * 3 + ["example 1, t4"] * 3


def test_failures_are_recorded_not_raised():
    # 3 observations per subject and a 9-matrix measurement basis cannot be
    # estimated with 6 subjects: every replication fails cleanly
    spec = SimulationSpec(4, 6, p=10, m=3, seed=1)
    t = run_replications(spec, Pipeline(bases=("identity", "ar1", "measurements")), 2)
    assert len(t.failures) == 2 and t.unimportant_per_rep is None
    assert t.frequencies == {}


def test_longitudinal_baselines_use_stacked_rows():
    spec = SimulationSpec(4, 30, p=12, m=3, seed=2)
    t = run_replications(spec, Pipeline(method="ls", top_d=3), 2)
    assert not t.failures and set(t.per_true_feature_counts) == {"x1", "x2", "x5"}


def test_table_from_dict_defaults():
    t = BenchmarkTable.from_dict({"method": "el", "per_true_feature_counts": {"x1": 2},
                                  "unimportant_avg": 0.0, "unimportant_per_rep": 0.0, "R": 2})
    assert t.frequencies == {"x1": 1.0} and t.wall_time is None
    assert np.isclose(t.unimportant_avg, 0.0)
