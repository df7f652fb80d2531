"""Empirical-likelihood sure independence screening for high-dimensional
regression, generalized linear and estimating-equation models."""

__version__ = "0.1.0"

from .bench import BenchmarkTable, Pipeline, render_table, run_replications
from .el_core import (
    ElConfig,
    ElSolution,
    ElStatus,
    el_ratio_at_mean,
    el_weights,
    profile_el_ratio,
    solve_lambda_multi,
    solve_lambda_uni,
)
from .estimating import (
    BasisSet,
    LongitudinalDataset,
    MarginalEstimatingFunction,
    QIFEstimatingFunction,
    basis_ar1_adjacency,
    basis_identity,
    marginal_el_stats_ee,
)
from .estimators import IterativeELScreener, LongitudinalELScreener, MarginalScreener
from .exceptions import (
    ConstantColumn,
    DataError,
    DegenerateInput,
    DimensionMismatch,
    DomainViolation,
    ElsisError,
    InvalidCovariance,
    MissingColumn,
    NonNumericCell,
    RaggedRow,
)
from .iterative import IsisConfig, el_isis
from .scad import SCADRegressor, fit_scad_bic
from .screening import (
    Dataset,
    ScreeningReport,
    ScreenStats,
    Threshold,
    TopD,
    default_d,
    glm_sis_stats,
    ls_sis_stats,
    marginal_el_stats,
    rrc_sis_stats,
    screen,
    select_threshold,
    select_top_d,
    standardize,
)
from .simgen import SimulationSpec, generate

__all__ = [
    "__version__",
    "ElConfig",
    "ElSolution",
    "ElStatus",
    "el_ratio_at_mean",
    "el_weights",
    "profile_el_ratio",
    "solve_lambda_multi",
    "solve_lambda_uni",
    "BasisSet",
    "LongitudinalDataset",
    "MarginalEstimatingFunction",
    "QIFEstimatingFunction",
    "basis_ar1_adjacency",
    "basis_identity",
    "marginal_el_stats_ee",
    "ConstantColumn",
    "DataError",
    "DegenerateInput",
    "DimensionMismatch",
    "DomainViolation",
    "ElsisError",
    "InvalidCovariance",
    "MissingColumn",
    "NonNumericCell",
    "RaggedRow",
    "Dataset",
    "ScreeningReport",
    "ScreenStats",
    "Threshold",
    "TopD",
    "default_d",
    "glm_sis_stats",
    "ls_sis_stats",
    "marginal_el_stats",
    "rrc_sis_stats",
    "screen",
    "select_threshold",
    "select_top_d",
    "standardize",
    "BenchmarkTable",
    "Pipeline",
    "render_table",
    "run_replications",
    "IterativeELScreener",
    "LongitudinalELScreener",
    "MarginalScreener",
    "IsisConfig",
    "el_isis",
    "SCADRegressor",
    "fit_scad_bic",
    "SimulationSpec",
    "generate",
]
