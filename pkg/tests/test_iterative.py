import numpy as np
import pytest

from elsis.el_core import profile_log_ratios
from elsis.iterative import RANKING_NOTE, IsisConfig, el_isis, profile_stats, scad_select
from elsis.screening import Dataset, standardize
from elsis.simgen import SimulationSpec, generate


def test_config_validation_and_resolution():
    with pytest.raises(ValueError):
        IsisConfig(per_step_recruit=0)
    with pytest.raises(ValueError):
        IsisConfig(per_step_recruit=5, max_active=3)
    with pytest.raises(ValueError):
        IsisConfig(scad_a=2.0)
    with pytest.raises(ValueError):
        IsisConfig(tuning_criterion="cv")
    assert IsisConfig().resolve(100, 1000) == (10, 21)
    assert IsisConfig().to_dict(100, 1000)["max_active"] == 21


def _hidden(seed=3, n=120, p=40):
    # x4 is marginally uncorrelated with y but enters the model
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    X = Z.copy()
    X[:, 3] = Z[:, 3] + 0.7 * (Z[:, 0] + Z[:, 1] + Z[:, 2]) / np.sqrt(3)
    beta = np.zeros(p)
    beta[:3] = 2.0
    beta[3] = -2.0 * 3 * 0.7 / np.sqrt(3) / (1 + 0.49)  # cancels cov(y, x4)
    y = X @ beta + rng.standard_normal(n)
    return Dataset(X, y)


def test_profile_stats_match_general_profile():
    data = standardize(_hidden())
    active = [0, 1, 2]
    stats = profile_stats(data, active)
    XA = data.X[:, active]
    b0 = np.linalg.lstsq(XA, data.y, rcond=None)[0]
    for k in (0, 5, 17):
        j = int(stats.features[k])
        U = np.column_stack([data.X[:, j], XA])
        C = U * data.y[:, None]
        D = U[:, :, None] * XA[:, None, :]
        ref = profile_log_ratios(C[None], D[None], b0[None])["log_ratio"][0]
        assert stats.statistic[k] == pytest.approx(ref, rel=1e-8, abs=1e-8)
    assert set(stats.features) == set(range(40)) - set(active)


def test_profile_stats_finds_hidden_feature():
    data = standardize(_hidden())
    stats = profile_stats(data, [0, 1, 2])
    assert int(stats.ranked_features[0]) == 3


def test_profile_stats_input_checks():
    data = _hidden()
    with pytest.raises(ValueError):
        profile_stats(data, [0])
    with pytest.raises(ValueError):
        profile_stats(standardize(data), [])


def test_scad_select_support_in_candidate_order():
    data = standardize(_hidden())
    support, ok = scad_select(data, [5, 0, 1, 2, 3])
    assert ok and set(support) >= {0, 1, 2} and 5 not in support
    assert scad_select(data, []) == ([], True)


def test_el_isis_recovers_hidden_feature_and_traces():
    rep = el_isis(_hidden(), IsisConfig(per_step_recruit=5))
    assert {0, 1, 2, 3} <= set(rep.selected)
    assert rep.notes[0] == RANKING_NOTE
    assert rep.trace[0]["iteration"] == 1 and len(rep.trace[0]["recruited"]) == 5
    for step in rep.trace:
        assert len(step["recruited"]) == len(step["recruited_statistics"])
        assert len(step["active"]) <= IsisConfig(per_step_recruit=5).resolve(120, 40)[1]
    doc = rep.to_dict()
    assert doc["trace"] == rep.trace


def test_el_isis_is_deterministic_on_example2():
    spec = SimulationSpec(2, 100, p=200, seed=42)
    a = el_isis(generate(spec, 1)).selected
    b = el_isis(generate(spec, 1)).selected
    assert a == b
