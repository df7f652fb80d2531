"""Marginal EL screening driven by general estimating functions, with the
quadratic-inference-function (QIF) construction for longitudinal data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .el_core import DEFAULT_CONFIG, ElStatus, multi_log_ratios, uni_log_ratios
from .exceptions import ConstantColumn, DegenerateInput, DimensionMismatch
from .screening import Dataset, ScreenStats, _studentized

__all__ = [
    "LongitudinalDataset",
    "BasisSet",
    "basis_identity",
    "basis_ar1_adjacency",
    "basis_measurements",
    "qif_marginal_g",
    "MarginalEstimatingFunction",
    "QIFEstimatingFunction",
    "marginal_el_stats_ee",
    "standardize_longitudinal",
]


class LongitudinalDataset:
    """Repeated measurements grouped by subject.

    Parameters
    ----------
    X : ndarray (n, m, p) or sequence of (m_i, p) arrays
    y : ndarray (n, m) or sequence of length-m_i arrays
    feature_names : sequence of str, optional
    """

    def __init__(self, X, y, feature_names=(), subject_ids=None):
        if isinstance(X, np.ndarray) and X.ndim == 3:
            blocks = [np.asarray(b, dtype=float) for b in X]
            ys = [np.asarray(v, dtype=float).ravel() for v in np.asarray(y, dtype=float)]
        else:
            blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in X]
            ys = [np.atleast_1d(np.asarray(v, dtype=float)).ravel() for v in y]
        if not blocks or len(blocks) != len(ys):
            raise DimensionMismatch("need the same positive number of X and y blocks")
        p = blocks[0].shape[1]
        for i, (b, v) in enumerate(zip(blocks, ys)):
            if b.shape[1] != p:
                raise DimensionMismatch(f"subject {i} has {b.shape[1]} features, expected {p}")
            if b.shape[0] < 1 or b.shape[0] != v.shape[0]:
                raise DimensionMismatch(f"subject {i}: {b.shape[0]} covariate rows, {v.shape[0]} responses")
            if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
                raise ValueError(f"subject {i} has non-finite entries")
        self.X_blocks = blocks
        self.y_blocks = ys
        names = tuple(feature_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise ValueError(f"{len(names)} feature names for {p} columns")
        self.feature_names = names
        self.subject_ids = list(subject_ids) if subject_ids is not None else list(range(len(blocks)))

    @property
    def n(self):
        return len(self.X_blocks)

    @property
    def p(self):
        return self.X_blocks[0].shape[1]

    @property
    def sizes(self):
        return [b.shape[0] for b in self.X_blocks]

    @property
    def balanced(self):
        return len(set(self.sizes)) == 1

    @property
    def m(self):
        if not self.balanced:
            raise DimensionMismatch("subjects have different numbers of measurements")
        return self.sizes[0]

    def arrays(self):
        """(n, m, p) covariates and (n, m) responses; balanced data only."""
        self.m
        return np.stack(self.X_blocks), np.stack(self.y_blocks)

    def flatten(self):
        """Measurement-level Dataset that ignores the grouping."""
        return Dataset(np.vstack(self.X_blocks), np.concatenate(self.y_blocks), self.feature_names)


def standardize_longitudinal(data):
    """Standardize columns over all stacked measurements and centre the response."""
    X = np.vstack(data.X_blocks)
    y = np.concatenate(data.y_blocks)
    sd = X.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd == 0)
    if zero.size:
        raise ConstantColumn(int(zero[0]), data.feature_names[int(zero[0])])
    X = (X - X.mean(axis=0)) / sd
    y = y - y.mean()
    cuts = np.cumsum(data.sizes)[:-1]
    return LongitudinalDataset(np.split(X, cuts), np.split(y, cuts), data.feature_names, data.subject_ids)


def basis_identity(m):
    if m < 1:
        raise ValueError("m must be at least 1")
    return np.eye(m)


def basis_ar1_adjacency(m):
    """0/1 matrix with ones on the first super- and sub-diagonals."""
    if m < 2:
        raise ValueError("the adjacency basis needs m >= 2")
    return np.eye(m, k=1) + np.eye(m, k=-1)


def basis_measurements(m):
    """The ``m`` matrices with a single one at diagonal position ``t``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    out = []
    for t in range(m):
        M = np.zeros((m, m))
        M[t, t] = 1.0
        out.append(M)
    return out


@dataclass(frozen=True)
class BasisSet:
    matrices: tuple

    def __post_init__(self):
        mats = tuple(np.asarray(M, dtype=float) for M in self.matrices)
        if not mats:
            raise ValueError("need at least one basis matrix")
        m = mats[0].shape[0]
        for M in mats:
            if M.shape != (m, m):
                raise DimensionMismatch("basis matrices must all be m x m")
            if not np.allclose(M, M.T):
                raise ValueError("basis matrices must be symmetric")
        object.__setattr__(self, "matrices", mats)

    @property
    def K(self):
        return len(self.matrices)

    @property
    def m(self):
        return self.matrices[0].shape[0]

    @classmethod
    def from_names(cls, names, m):
        """Build from names: ``identity``, ``ar1`` (adjacency), or
        ``measurements``, which expands to the ``m`` single-measurement
        matrices ``e_t e_t'`` (one component per time point)."""
        table = {"identity": basis_identity, "ar1": basis_ar1_adjacency, "measurements": basis_measurements}
        mats = []
        for name in names:
            if name not in table:
                raise ValueError(f"unknown basis {name!r}; choose from {sorted(table)}")
            built = table[name](m)
            mats.extend(built if isinstance(built, list) else [built])
        return cls(tuple(mats))


def qif_marginal_g(X_block, y_block, j, bases):
    """QIF estimating function of feature ``j`` for one subject at beta = 0.

    Component ``k`` is ``x_j' M_k y`` where ``x_j`` is the subject's column
    ``j`` (identity link, unit variance).
    """
    X_block = np.atleast_2d(np.asarray(X_block, dtype=float))
    y_block = np.asarray(y_block, dtype=float).ravel()
    if X_block.shape[0] != bases.m or y_block.shape[0] != bases.m:
        raise DimensionMismatch(f"subject block has {X_block.shape[0]} measurements, bases are {bases.m} x {bases.m}")
    x = X_block[:, j]
    return np.array([x @ M @ y_block for M in bases.matrices])


class MarginalEstimatingFunction:
    """Estimating function ``(X_block, y_block, j) -> r-vector`` at beta = 0.

    Subclasses may override :meth:`stack` with a vectorised evaluation.
    """

    def __init__(self, evaluator, r):
        if r < 1:
            raise ValueError("r must be at least 1")
        self.evaluator = evaluator
        self.r = r

    def __call__(self, X_block, y_block, j):
        return np.asarray(self.evaluator(X_block, y_block, j), dtype=float).reshape(self.r)

    def stack(self, data):
        """Array (p, n, r) of estimating-function values."""
        out = np.empty((data.p, data.n, self.r))
        for i, (Xb, yb) in enumerate(zip(data.X_blocks, data.y_blocks)):
            for j in range(data.p):
                out[j, i] = self(Xb, yb, j)
        return out


class QIFEstimatingFunction(MarginalEstimatingFunction):
    def __init__(self, bases):
        self.bases = bases
        super().__init__(lambda Xb, yb, j: qif_marginal_g(Xb, yb, j, bases), bases.K)

    def stack(self, data):
        X, Y = data.arrays()
        if X.shape[1] != self.bases.m:
            raise DimensionMismatch(f"data have m={X.shape[1]}, bases are {self.bases.m} x {self.bases.m}")
        MY = np.einsum("kst,it->iks", np.stack(self.bases.matrices), Y)
        return np.einsum("isp,iks->pik", X, MY)


def marginal_el_stats_ee(data, spec, config=DEFAULT_CONFIG):
    """EL screening statistics from a marginal estimating function.

    Rows of the EL problem are subjects, so repeated measurements within a
    subject never have to be treated as independent.  Covariates are
    standardized over the stacked measurements and the response centred
    before the estimating function is evaluated.
    """
    if isinstance(spec, BasisSet):
        spec = QIFEstimatingFunction(spec)
    if data.n <= spec.r:
        raise DegenerateInput(f"need more subjects ({data.n}) than estimating-function components ({spec.r})")
    data = standardize_longitudinal(data)
    G = spec.stack(data)
    if spec.r == 1:
        out = uni_log_ratios(G[:, :, 0].T, config)
    else:
        out = multi_log_ratios(G, config)
    if out["degenerate"].all():
        raise DegenerateInput("estimating-function components are collinear for every feature")
    flags = {}
    for j in np.flatnonzero(out["degenerate"]):
        flags[int(j)] = "degenerate"
    for j in np.flatnonzero(out["status"] == ElStatus.BOUNDARY):
        flags[int(j)] = "hull_boundary"
    tie = _studentized(G[:, :, 0].T)
    return ScreenStats(out["log_ratio"], tie, "el", unrankable=out["degenerate"], flags=flags)
