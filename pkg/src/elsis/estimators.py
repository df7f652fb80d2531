"""scikit-learn compatible feature selectors.

These wrap the functional screening API so that screening can sit inside a
``Pipeline`` or a cross-validation loop::

    >>> from sklearn.pipeline import make_pipeline
    >>> from sklearn.linear_model import LinearRegression
    >>> model = make_pipeline(MarginalScreener(n_features_to_select=10), LinearRegression())
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .el_core import ElConfig
from .estimating import BasisSet, LongitudinalDataset, marginal_el_stats_ee
from .iterative import IsisConfig, el_isis
from .screening import Dataset, Threshold, TopD, apply_rule, compute_stats, default_d, standardize

__all__ = ["MarginalScreener", "IterativeELScreener", "LongitudinalELScreener"]


def _rule(n, p, n_features_to_select, threshold):
    if n_features_to_select is not None and threshold is not None:
        raise ValueError("set n_features_to_select or threshold, not both")
    if threshold is not None:
        return Threshold(threshold)
    d = n_features_to_select if n_features_to_select is not None else min(default_d(n), p)
    if not 1 <= d <= p:
        raise ValueError(f"n_features_to_select must lie in 1..{p}, got {d}")
    return TopD(int(d))


class _ScreenerBase(SelectorMixin, BaseEstimator):
    def _get_support_mask(self):
        check_is_fitted(self, "selected_features_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_features_] = True
        return mask

    def _el_config(self):
        return ElConfig(dual_tolerance=self.tol, max_iterations=self.max_iter)


class MarginalScreener(_ScreenerBase):
    """Marginal sure independence screening.

    Parameters
    ----------
    method : {"el", "ls", "rrc", "glm"}, default="el"
        Screening statistic: the marginal empirical likelihood ratio at zero,
        the least-squares coefficient, Kendall's tau, or the marginal GLM
        fit.
    n_features_to_select : int, optional
        Keep the top-ranked features.  Defaults to ``floor(n / (2 log n))``
        unless ``threshold`` is given.
    threshold : float, optional
        Keep every feature whose statistic is at least this value.
    family : {"gaussian", "binomial"}, default="gaussian"
        Only used by ``method="glm"``.
    tol, max_iter
        Dual solver tolerance and iteration cap.

    Attributes
    ----------
    scores_ : ndarray (n_features,)
        Screening statistic per feature (``inf`` when zero lies outside the
        convex hull).
    ranking_ : ndarray (n_features,)
        1 for the best feature.
    selected_features_ : list of int
        Selected column indices, best first.
    """

    def __init__(self, method="el", n_features_to_select=None, threshold=None, family="gaussian",
                 tol=1e-10, max_iter=100):
        self.method = method
        self.n_features_to_select = n_features_to_select
        self.threshold = threshold
        self.family = family
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        data = standardize(Dataset(X, y))
        stats = compute_stats(data, self.method, self._el_config(), self.family)
        rule = _rule(data.n, data.p, self.n_features_to_select, self.threshold)
        self.scores_ = stats.statistic.copy()
        self.ranking_ = stats.ranks.copy()
        self.selected_features_ = apply_rule(stats, rule)
        return self


class IterativeELScreener(_ScreenerBase):
    """Iterative EL screening with SCAD pruning at every round.

    Parameters
    ----------
    per_step_recruit, max_active, max_iterations, family, scad_a
        See :class:`elsis.IsisConfig`.

    Attributes
    ----------
    selected_features_ : list of int
        The final active set.
    trace_ : list of dict
        Recruited and retained features per iteration.
    """

    def __init__(self, per_step_recruit=None, max_active=None, max_iterations=5, family="gaussian",
                 scad_a=3.7, tol=1e-10, max_iter=100):
        self.per_step_recruit = per_step_recruit
        self.max_active = max_active
        self.max_iterations = max_iterations
        self.family = family
        self.scad_a = scad_a
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        cfg = IsisConfig(per_step_recruit=self.per_step_recruit, max_active=self.max_active,
                         max_iterations=self.max_iterations, family=self.family, scad_a=self.scad_a,
                         el_config=self._el_config())
        report = el_isis(Dataset(X, y), cfg)
        self.selected_features_ = list(report.selected)
        self.trace_ = report.trace
        self.notes_ = report.notes
        return self


class LongitudinalELScreener(_ScreenerBase):
    """Marginal EL screening of longitudinal data with QIF estimating
    functions.

    ``fit`` takes measurement-level rows and a ``groups`` array of subject
    ids; each subject contributes one row to the empirical likelihood.

    Parameters
    ----------
    bases : tuple of str, default=("identity", "ar1")
        Working-correlation basis matrices.
    n_features_to_select, threshold
        As in :class:`MarginalScreener`.
    """

    def __init__(self, bases=("identity", "ar1"), n_features_to_select=None, threshold=None,
                 tol=1e-10, max_iter=100):
        self.bases = bases
        self.n_features_to_select = n_features_to_select
        self.threshold = threshold
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, groups=None):
        if groups is None:
            raise ValueError("LongitudinalELScreener.fit needs the groups (subject id) array")
        X, y = validate_data(self, X, y, y_numeric=True)
        groups = np.asarray(groups)
        if groups.shape[0] != X.shape[0]:
            raise ValueError(f"groups has {groups.shape[0]} entries, X has {X.shape[0]} rows")
        order = list(dict.fromkeys(groups.tolist()))
        rows = {g: [] for g in order}
        for i, g in enumerate(groups.tolist()):
            rows[g].append(i)
        data = LongitudinalDataset([X[rows[g]] for g in order], [y[rows[g]] for g in order], subject_ids=order)
        stats = marginal_el_stats_ee(data, BasisSet.from_names(tuple(self.bases), data.m), self._el_config())
        self.scores_ = stats.statistic.copy()
        self.ranking_ = stats.ranks.copy()
        self.selected_features_ = apply_rule(stats, _rule(data.n, data.p, self.n_features_to_select, self.threshold))
        return self
