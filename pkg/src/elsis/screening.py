"""Marginal screening: EL-SIS and the least-squares, rank-correlation and
marginal-GLM baselines, plus the top-d / threshold selection rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sps
from scipy.special import expit

from .el_core import DEFAULT_CONFIG, ElStatus, uni_log_ratios
from .exceptions import ConstantColumn

__all__ = [
    "Dataset",
    "ScreenStat",
    "ScreenStats",
    "TopD",
    "Threshold",
    "ScreeningReport",
    "default_d",
    "standardize",
    "marginal_el_stats",
    "ls_sis_stats",
    "rrc_sis_stats",
    "glm_sis_stats",
    "select_top_d",
    "select_threshold",
    "screen",
    "METHODS",
]

METHODS = ("el", "ls", "rrc", "glm")
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class Dataset:
    """Dense design matrix with response.

    ``y_center`` is the amount subtracted from the response by
    :func:`standardize`; ``y + y_center`` recovers the raw response (needed
    by the logistic fits, which work on 0/1 outcomes).
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()
    standardized: bool = False
    y_center: float = 0.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        n, p = X.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got {X.shape}")
        if y.shape[0] != n:
            raise ValueError(f"y has {y.shape[0]} entries, X has {n} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise ValueError(f"{len(names)} feature names for {p} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def y_raw(self):
        return self.y + self.y_center

    def take(self, columns):
        columns = list(columns)
        return replace(self, X=self.X[:, columns], feature_names=tuple(self.feature_names[j] for j in columns))


def standardize(data):
    """Centre and scale every column (divisor n - 1) and centre the response."""
    X = data.X
    sd = X.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd == 0)
    if zero.size:
        j = int(zero[0])
        raise ConstantColumn(j, data.feature_names[j])
    Xs = (X - X.mean(axis=0)) / sd
    mean_y = data.y.mean()
    return replace(data, X=Xs, y=data.y - mean_y, standardized=True, y_center=data.y_center + mean_y)


def default_d(n):
    """Screening size floor(n / (2 log n))."""
    return max(1, int(math.floor(n / (2.0 * math.log(n)))))


@dataclass(frozen=True)
class ScreenStat:
    feature: int
    statistic: float
    tie_break: float
    rank: int
    flag: str | None = None


@dataclass
class ScreenStats:
    """Per-feature screening statistics with the induced ranking.

    Ordering: larger statistic first (``inf`` above every finite value), then
    larger ``tie_break``, then smaller feature index.  Features flagged
    unrankable (statistic undefined) go last.
    """

    statistic: np.ndarray
    tie_break: np.ndarray
    method: str
    unrankable: np.ndarray = None
    flags: dict = field(default_factory=dict)
    features: np.ndarray = None

    def __post_init__(self):
        self.statistic = np.asarray(self.statistic, dtype=float)
        self.tie_break = np.asarray(self.tie_break, dtype=float)
        p = self.statistic.shape[0]
        if self.unrankable is None:
            self.unrankable = np.isnan(self.statistic)
        self.unrankable = np.asarray(self.unrankable, dtype=bool)
        if self.features is None:
            self.features = np.arange(p)
        self.features = np.asarray(self.features, dtype=int)
        stat = np.where(self.unrankable, -np.inf, self.statistic)
        tie = np.nan_to_num(self.tie_break, nan=-np.inf)
        self.order = np.lexsort((self.features, -tie, -stat, self.unrankable))
        self.ranks = np.empty(p, dtype=int)
        self.ranks[self.order] = np.arange(1, p + 1)

    def __len__(self):
        return self.statistic.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield ScreenStat(
                feature=int(self.features[k]),
                statistic=float(self.statistic[k]),
                tie_break=float(self.tie_break[k]),
                rank=int(self.ranks[k]),
                flag=self.flags.get(int(self.features[k])),
            )

    @property
    def ranked_features(self):
        return self.features[self.order]


@dataclass(frozen=True)
class TopD:
    d: int

    def to_dict(self):
        return {"rule": "top_d", "d": self.d}


@dataclass(frozen=True)
class Threshold:
    gamma: float

    def to_dict(self):
        return {"rule": "threshold", "gamma": self.gamma}


@dataclass
class ScreeningReport:
    stats: ScreenStats
    selected: list
    method: str
    selection_rule: object
    n: int
    p: int
    feature_names: tuple = ()
    notes: list = field(default_factory=list)
    trace: list = None

    def to_dict(self):
        st = self.stats
        out = {
            "method": self.method,
            "selection_rule": self.selection_rule.to_dict(),
            "n": self.n,
            "p": self.p,
            "selected": [int(j) for j in self.selected],
            "selected_names": [self.feature_names[j] for j in self.selected] if self.feature_names else [],
            "stats": [
                {
                    "feature": s.feature,
                    "name": self.feature_names[s.feature] if self.feature_names else None,
                    "statistic": _json_float(s.statistic),
                    "tie_break": _json_float(s.tie_break),
                    "rank": s.rank,
                    "flag": s.flag,
                }
                for s in sorted(st, key=lambda s: s.rank)
            ],
            "notes": list(self.notes),
        }
        if self.trace is not None:
            out["trace"] = self.trace
        return out


def _json_float(x):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return None
    return x


def _studentized(g):
    sd = g.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.abs(g.mean(axis=0)) / sd
    return np.where(sd > 0, t, np.where(g.mean(axis=0) != 0, np.inf, 0.0))


def _require_standardized(data):
    if not data.standardized:
        raise ValueError("data must be standardized first (see standardize)")


def marginal_el_stats(data, config=DEFAULT_CONFIG):
    """EL-SIS statistics ``ell_j(0)`` with ``g_ij = X_ij * y_i``.

    Features whose products all share a sign get ``inf``; features with a
    constant product column are flagged unrankable.
    """
    _require_standardized(data)
    g = data.X * data.y[:, None]
    out = uni_log_ratios(g, config)
    stat = out["log_ratio"]
    flags = {}
    for j in np.flatnonzero(out["degenerate"]):
        flags[int(j)] = "degenerate"
    for j in np.flatnonzero(out["status"] == ElStatus.BOUNDARY):
        flags[int(j)] = "hull_boundary"
    for j in np.flatnonzero((out["status"] == ElStatus.MAX_ITERATIONS) & ~out["degenerate"]):
        flags[int(j)] = "max_iterations"
    return ScreenStats(stat, _studentized(g), "el", unrankable=out["degenerate"], flags=flags)


def ls_sis_stats(data):
    """Absolute marginal least-squares coefficient ``|x_j'y| / x_j'x_j``."""
    _require_standardized(data)
    X, y = data.X, data.y
    stat = np.abs(X.T @ y) / (X * X).sum(axis=0)
    return ScreenStats(stat, _studentized(X * y[:, None]), "ls")


def rrc_sis_stats(data):
    """Absolute Kendall tau between each feature and the response."""
    X, y = data.X, data.y
    if data.n < 2:
        raise ValueError("need at least two observations")
    stat = np.empty(data.p)
    for j in range(data.p):
        tau = sps.kendalltau(X[:, j], y).statistic
        stat[j] = abs(tau) if np.isfinite(tau) else 0.0
    return ScreenStats(stat, _studentized(X * (y - y.mean())[:, None]), "rrc")


def _marginal_logistic(X, y, max_iter=50, tol=1e-8):
    """Intercept-plus-slope logistic MLE for every column of X at once."""
    n, p = X.shape
    b0 = np.zeros(p)
    b1 = np.zeros(p)

    def loglik(c0, c1):
        eta = c0 + X * c1
        return (y[:, None] * eta - np.logaddexp(0.0, eta)).sum(axis=0)

    ll = loglik(b0, b1)
    active = np.ones(p, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        Xa = X[:, active]
        eta = b0[active] + Xa * b1[active]
        mu = expit(eta)
        w = mu * (1.0 - mu)
        r = y[:, None] - mu
        g0, g1 = r.sum(axis=0), (Xa * r).sum(axis=0)
        h00, h01, h11 = w.sum(axis=0), (w * Xa).sum(axis=0), (w * Xa * Xa).sum(axis=0)
        det = h00 * h11 - h01 * h01
        with np.errstate(divide="ignore", invalid="ignore"):
            s0 = (h11 * g0 - h01 * g1) / det
            s1 = (h00 * g1 - h01 * g0) / det
        s0 = np.nan_to_num(s0)
        s1 = np.nan_to_num(s1)
        idx = np.flatnonzero(active)
        t = np.ones(idx.size)
        llo = ll[idx]
        for _h in range(30):
            c0 = b0[idx] + t * s0
            c1 = b1[idx] + t * s1
            lln = (y[:, None] * (c0 + Xa * c1) - np.logaddexp(0.0, c0 + Xa * c1)).sum(axis=0)
            bad = lln < llo - 1e-12
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
        b0[idx], b1[idx], ll[idx] = c0, c1, lln
        step = np.maximum(np.abs(t * s0), np.abs(t * s1))
        still = (step > tol) & (np.abs(b1[idx]) <= SEPARATION_BOUND)
        active[idx[~still]] = False
    return b0, b1


def glm_sis_stats(data, family="gaussian"):
    """Absolute marginal GLM slope (intercept included).

    Gaussian uses the closed form and coincides with :func:`ls_sis_stats`.
    Binomial runs Newton-Raphson on the raw 0/1 response; a slope beyond
    30 in absolute value is treated as separation (statistic ``inf``).
    """
    _require_standardized(data)
    if family == "gaussian":
        st = ls_sis_stats(data)
        st.method = "glm"
        return st
    if family != "binomial":
        raise ValueError(f"unknown family {family!r}")
    y = data.y_raw
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binomial family needs a 0/1 response")
    _, b1 = _marginal_logistic(data.X, y)
    stat = np.abs(b1)
    flags = {}
    sep = stat > SEPARATION_BOUND
    for j in np.flatnonzero(sep):
        flags[int(j)] = "separation"
    stat = np.where(sep, np.inf, stat)
    return ScreenStats(stat, _studentized(data.X * data.y[:, None]), "glm", flags=flags)


def select_top_d(stats, d):
    """The ``d`` top-ranked features, best first."""
    if not 1 <= d <= len(stats):
        raise ValueError(f"d must lie in 1..{len(stats)}, got {d}")
    return [int(j) for j in stats.ranked_features[:d]]


def select_threshold(stats, gamma):
    """Features with statistic at least ``gamma``, in rank order."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return [
        int(stats.features[k])
        for k in stats.order
        if not stats.unrankable[k] and stats.statistic[k] >= gamma
    ]


def compute_stats(data, method, config=DEFAULT_CONFIG, family="gaussian"):
    if method == "el":
        return marginal_el_stats(data, config)
    if method == "ls":
        return ls_sis_stats(data)
    if method == "rrc":
        return rrc_sis_stats(data)
    if method == "glm":
        return glm_sis_stats(data, family)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def apply_rule(stats, rule):
    if isinstance(rule, TopD):
        return select_top_d(stats, rule.d)
    if isinstance(rule, Threshold):
        return select_threshold(stats, rule.gamma)
    raise TypeError(f"unknown selection rule {rule!r}")


def screen(data, method="el", rule=None, config=DEFAULT_CONFIG, family="gaussian"):
    """Standardize if needed, compute the statistics and apply the rule."""
    if not data.standardized:
        data = standardize(data)
    if rule is None:
        rule = TopD(min(default_d(data.n), data.p))
    stats = compute_stats(data, method, config, family)
    selected = apply_rule(stats, rule)
    notes = []
    if method == "el" and np.isinf(stats.statistic).sum() > 1:
        notes.append("several features outside the convex hull; ordered by studentized |mean(X_j y)|")
    if stats.unrankable.any():
        notes.append(f"{int(stats.unrankable.sum())} feature(s) with undefined statistic ranked last")
    return ScreeningReport(
        stats=stats,
        selected=selected,
        method=method,
        selection_rule=rule,
        n=data.n,
        p=data.p,
        feature_names=data.feature_names,
        notes=notes,
    )
