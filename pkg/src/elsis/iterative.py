"""Iterative EL screening (EL-ISIS).

Each round ranks the inactive features by a profile EL ratio conditioned on
the current active set, recruits the best few, and prunes the union with a
SCAD fit.  The conditional statistic for feature ``j`` given active set
``A`` uses the joint estimating function

    g_i(b) = X_{i,S} (y_i - X_{i,A}' b),    S = {j} + A,

with the coefficient of ``j`` held at zero and ``b`` profiled out, so a
feature that only matters jointly with ``A`` (marginally invisible) still
produces a large ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .el_core import DEFAULT_CONFIG, ElConfig, profile_regression_log_ratios
from .scad import fit_scad_bic
from .screening import (
    ScreeningReport,
    ScreenStats,
    TopD,
    _studentized,
    default_d,
    marginal_el_stats,
    select_top_d,
    standardize,
)

__all__ = ["IsisConfig", "profile_stats", "scad_select", "el_isis", "RANKING_NOTE"]

RANKING_NOTE = (
    "conditional ranking: inactive features ordered by the profile EL ratio at zero, "
    "largest first (larger ratio = stronger evidence of a conditional effect)"
)
_CHUNK = 1024


@dataclass(frozen=True)
class IsisConfig:
    """Controls for :func:`el_isis`.

    ``per_step_recruit`` and ``max_active`` default to ``floor(n / (2 log n))``
    and ``floor(n / log n)`` when left as None.  ``tuning_grid`` is the SCAD
    penalty grid (None: automatic 40-point path); the penalty is always
    chosen by BIC.
    """

    per_step_recruit: int | None = None
    max_active: int | None = None
    max_iterations: int = 5
    family: str = "gaussian"
    scad_a: float = 3.7
    tuning_grid: tuple | None = None
    tuning_criterion: str = "bic"
    el_config: ElConfig = field(default_factory=ElConfig)

    def __post_init__(self):
        if self.per_step_recruit is not None and self.per_step_recruit < 1:
            raise ValueError("per_step_recruit must be at least 1")
        if (
            self.max_active is not None
            and self.per_step_recruit is not None
            and self.max_active < self.per_step_recruit
        ):
            raise ValueError("max_active must be at least per_step_recruit")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.scad_a <= 2:
            raise ValueError("scad_a must exceed 2")
        if self.family not in ("gaussian", "binomial"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.tuning_criterion != "bic":
            raise ValueError("only BIC tuning is supported")

    def resolve(self, n, p):
        d = self.per_step_recruit or min(default_d(n), p)
        cap = self.max_active or max(d, int(math.floor(n / math.log(n))))
        return d, cap

    def to_dict(self, n=None, p=None):
        out = {
            "per_step_recruit": self.per_step_recruit,
            "max_active": self.max_active,
            "max_iterations": self.max_iterations,
            "family": self.family,
            "scad_a": self.scad_a,
            "tuning_grid": list(self.tuning_grid) if self.tuning_grid is not None else None,
            "tuning_criterion": self.tuning_criterion,
            "el_config": self.el_config.to_dict(),
        }
        if n is not None:
            out["per_step_recruit"], out["max_active"] = self.resolve(n, p)
        return out


def _ols(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef


def profile_stats(data, active, config=DEFAULT_CONFIG):
    """Conditional profile EL ratios of every feature outside ``active``.

    Returns ScreenStats over the inactive features (``features`` holds their
    original indices).  Features whose ratio cannot be started from the
    least-squares fit of the active set (zero outside the hull) get ``inf``.
    """
    if not data.standardized:
        raise ValueError("data must be standardized first")
    active = [int(k) for k in active]
    if not active:
        raise ValueError("active set must be non-empty")
    n = data.n
    a = len(active)
    if n <= a + 1:
        raise ValueError(f"need n > |active| + 1, got n={n}, |active|={a}")
    X, y = data.X, data.y
    inactive = np.setdiff1d(np.arange(data.p), active)
    XA = X[:, active]
    b0 = _ols(XA, y)
    resid = y - XA @ b0
    stat = np.empty(inactive.size)
    for start in range(0, inactive.size, _CHUNK):
        cols = inactive[start:start + _CHUNK]
        U = np.empty((cols.size, n, a + 1))
        U[:, :, 0] = X[:, cols].T
        U[:, :, 1:] = XA
        out = profile_regression_log_ratios(U, y, XA, b0, config)
        stat[start:start + cols.size] = out["log_ratio"]
    tie = _studentized(X[:, inactive] * resid[:, None])
    flags = {int(inactive[k]): "hull_boundary" for k in np.flatnonzero(np.isinf(stat))}
    return ScreenStats(stat, tie, "el-profile", flags=flags, features=inactive)


def scad_select(data, candidates, config=None):
    """SCAD fit on the candidate columns; returns (support, converged).

    The support is reported as original feature indices in candidate order.
    """
    config = config or IsisConfig()
    candidates = [int(j) for j in candidates]
    if not candidates:
        return [], True
    if len(candidates) >= data.n:
        raise ValueError("need fewer candidates than observations")
    X = data.X[:, candidates]
    y = data.y_raw if config.family == "binomial" else data.y
    fit = fit_scad_bic(X, y, family=config.family, a=config.scad_a, lambdas=config.tuning_grid)
    return [candidates[k] for k in fit.support], fit.converged


def el_isis(data, config=None):
    """Iterative EL screening followed by SCAD pruning at every round.

    Returns a ScreeningReport whose ``selected`` is the final active set and
    whose ``trace`` lists, per iteration, the recruited features with their
    statistics and the active set after pruning.
    """
    config = config or IsisConfig()
    if not data.standardized:
        data = standardize(data)
    n, p = data.n, data.p
    d, cap = config.resolve(n, p)
    el_cfg = config.el_config
    notes = [RANKING_NOTE]

    marginal = marginal_el_stats(data, el_cfg)
    recruited = select_top_d(marginal, d)
    active, ok = scad_select(data, recruited, config)
    if not ok:
        notes.append("iteration 1: SCAD did not converge; using best converged fit")
    if not active:
        active = list(recruited)
        notes.append("iteration 1: SCAD selected nothing; top marginal features forced active")
    pos = {int(f): k for k, f in enumerate(marginal.features)}
    trace = [{
        "iteration": 1,
        "recruited": recruited,
        "recruited_statistics": [_stat_value(marginal.statistic[pos[j]]) for j in recruited],
        "best_excluded_statistic": _best_excluded(marginal, recruited),
        "active": list(active),
    }]

    for it in range(2, config.max_iterations + 1):
        if len(active) >= cap:
            break
        prof = None
        while active:
            try:
                prof = profile_stats(data, active, el_cfg)
                break
            except (ValueError, np.linalg.LinAlgError):
                dropped = active.pop()
                notes.append(f"iteration {it}: dropped feature {dropped} from a degenerate active set")
        if prof is None:
            break
        # the candidate union never exceeds the active-size budget
        take = min(d, len(prof), cap - len(active), n - 1 - len(active))
        if take < 1:
            break
        new = select_top_d(prof, take)
        union = list(active) + new
        pruned, ok = scad_select(data, union, config)
        if not ok:
            notes.append(f"iteration {it}: SCAD did not converge; using best converged fit")
        if not pruned:
            pruned = list(active)
            notes.append(f"iteration {it}: SCAD selected nothing; previous active set kept")
        ppos = {int(f): k for k, f in enumerate(prof.features)}
        trace.append({
            "iteration": it,
            "recruited": new,
            "recruited_statistics": [_stat_value(prof.statistic[ppos[j]]) for j in new],
            "best_excluded_statistic": _best_excluded(prof, new),
            "active": list(pruned),
        })
        stable = set(pruned) == set(active)
        active = pruned
        if stable or len(active) >= cap:
            break

    return ScreeningReport(
        stats=marginal,
        selected=list(active),
        method="el-isis",
        selection_rule=TopD(d),
        n=n,
        p=p,
        feature_names=data.feature_names,
        notes=notes,
        trace=trace,
    )


def _stat_value(x):
    x = float(x)
    return "inf" if math.isinf(x) else x


def _best_excluded(stats, chosen):
    chosen = set(chosen)
    rest = [
        float(stats.statistic[k])
        for k, f in enumerate(stats.features)
        if int(f) not in chosen and not stats.unrankable[k]
    ]
    return _stat_value(max(rest)) if rest else None
