"""Seeded generators for the five simulation designs.

Random numbers come from the Philox-4x64 counter-based generator (10
rounds, the Random123 constants) keyed by ``(seed, replication)``: the
128-bit key is ``seed + 2**64 * replication`` and the counter starts at
zero.  Each 64-bit output ``u`` becomes the uniform ``((u >> 11) + 0.5) / 2**53``
in the open unit interval, and standard normals are obtained by the inverse
normal CDF (``scipy.special.ndtri``, Cephes rational approximations).  A
replication's data therefore depend only on the spec and the replication
index, never on scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .exceptions import InvalidCovariance
from .screening import Dataset

__all__ = [
    "SimulationSpec",
    "Stream",
    "TRUE_SUPPORT",
    "generate",
    "gen_example1",
    "gen_example2",
    "gen_example3",
    "gen_example4",
    "gen_example5",
]

EQUICORRELATION = 0.3
HIDDEN_FEATURE = 3  # X4, 0-based
_TWO_POW_53 = float(2 ** 53)

# 0-based indices of the important features per example
TRUE_SUPPORT = {
    1: (0, 1, 2),
    2: (0, 1, 2, 3),
    3: (0, 1, 2),
    4: (0, 1, 4),
    5: (0, 1, 2, 3),
}


class Stream:
    """Uniform / normal / t4 variates from one (seed, replication) Philox stream."""

    def __init__(self, seed, replication=0):
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.replication = int(replication)
        self._bitgen = np.random.Philox(key=self.seed + (self.replication << 64), counter=0)

    def uniform(self, size):
        count = int(np.prod(size))
        raw = self._bitgen.random_raw(count)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO_POW_53
        return u.reshape(size)

    def normal(self, size):
        return ndtri(self.uniform(size))

    def t4(self, size):
        z = self.normal(size)
        chi = self.normal(tuple(np.atleast_1d(size)) + (4,))
        return z / np.sqrt((chi ** 2).sum(axis=-1) / 4.0)


@dataclass(frozen=True)
class SimulationSpec:
    """Declarative description of one simulation design.

    ``error`` is ``"normal:SD"`` or ``"t4"`` (Examples 1 and 2).  ``c`` is the
    signal multiplier of Examples 3 and 4, ``m`` and ``ar1_rho`` the number of
    repeated measurements and the error autocorrelation of Example 4.
    """

    example: int
    n: int
    p: int = 1000
    c: float = 1.0
    error: str = "normal:1"
    m: int = 4
    ar1_rho: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.example not in TRUE_SUPPORT:
            raise ValueError(f"example must be one of 1..5, got {self.example}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.p < 5:
            raise ValueError("p must be at least 5")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if not 0 <= self.ar1_rho < 1:
            raise ValueError("ar1_rho must lie in [0, 1)")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        parse_error(self.error)

    @property
    def true_support(self):
        return TRUE_SUPPORT[self.example]

    def to_dict(self):
        return asdict(self)

    def with_seed(self, seed):
        return replace(self, seed=seed)


def parse_error(text):
    text = text.strip().lower()
    if text == "t4":
        return ("t4", None)
    if text.startswith("normal"):
        _, _, sd = text.partition(":")
        sd = float(sd) if sd else 1.0
        if not sd > 0:
            raise ValueError("normal error sd must be positive")
        return ("normal", sd)
    raise ValueError(f"unknown error distribution {text!r}; use normal:SD or t4")


def _errors(stream, spec):
    kind, sd = parse_error(spec.error)
    if kind == "t4":
        return stream.t4(spec.n)
    return sd * stream.normal(spec.n)


def _names(p):
    return tuple(f"x{j + 1}" for j in range(p))


def _equicorrelated(stream, n, p, rho=EQUICORRELATION):
    # symmetric square root of (1 - rho) I + rho 11' is a I + b 11'
    a = math.sqrt(1.0 - rho)
    b = (-a + math.sqrt(a * a + p * rho)) / p
    Z = stream.normal((n, p))
    return a * Z + b * Z.sum(axis=1, keepdims=True)


@lru_cache(maxsize=8)
def _hidden_sqrt(p):
    """Symmetric square root of the Example 2/5 covariance matrix."""
    S = np.full((p, p), EQUICORRELATION)
    S[HIDDEN_FEATURE, :] = S[:, HIDDEN_FEATURE] = math.sqrt(EQUICORRELATION)
    np.fill_diagonal(S, 1.0)
    w, V = np.linalg.eigh(S)
    if w[0] <= 0:
        raise InvalidCovariance(f"Example 2 covariance is not positive definite for p={p}")
    root = (V * np.sqrt(w)) @ V.T
    root.setflags(write=False)
    return root


def _hidden_design(stream, n, p):
    return stream.normal((n, p)) @ _hidden_sqrt(p)


def gen_example1(spec, replication=0):
    """Equicorrelated (0.3) Gaussian design, Y = 5 X1 + 5 X2 + 5 X3 + e."""
    stream = Stream(spec.seed, replication)
    X = _equicorrelated(stream, spec.n, spec.p)
    y = 5.0 * X[:, :3].sum(axis=1) + _errors(stream, spec)
    return Dataset(X, y, _names(spec.p))


def gen_example2(spec, replication=0):
    """Hidden-variable design: X4 is marginally uncorrelated with Y."""
    stream = Stream(spec.seed, replication)
    X = _hidden_design(stream, spec.n, spec.p)
    y = 5.0 * X[:, :3].sum(axis=1) - 15.0 * math.sqrt(EQUICORRELATION) * X[:, HIDDEN_FEATURE]
    y = y + _errors(stream, spec)
    return Dataset(X, y, _names(spec.p))


def gen_example3(spec, replication=0):
    """Independent design with heteroscedastic noise e / (X1^2 + X2^2 + X3^2)."""
    stream = Stream(spec.seed, replication)
    X = stream.normal((spec.n, spec.p))
    while True:
        # redraw the (measure-zero) rows whose noise divisor vanishes
        bad = np.flatnonzero((X[:, :3] ** 2).sum(axis=1) < 1e-12)
        if not bad.size:
            break
        X[bad] = stream.normal((bad.size, spec.p))
    eps = stream.normal(spec.n)
    signal = X[:, 0] - X[:, 1] + X[:, 2]
    y = spec.c * signal + eps / (X[:, :3] ** 2).sum(axis=1)
    return Dataset(X, y, _names(spec.p))


def _ar1(Z, rho, axis):
    """Stationary unit-variance AR(1) recursion along ``axis`` driven by Z."""
    s = math.sqrt(1.0 - rho * rho)
    Z = np.moveaxis(np.array(Z, dtype=float), axis, -1)
    Z[..., 0] /= s
    out = lfilter([s], [1.0, -rho], Z, axis=-1)
    return np.moveaxis(out, -1, axis)


def gen_example4(spec, replication=0):
    """Longitudinal design: AR(1)(0.5) covariates across features, AR(1)
    (``ar1_rho``) unit-variance errors across the ``m`` measurements."""
    from .estimating import LongitudinalDataset

    stream = Stream(spec.seed, replication)
    n, m, p = spec.n, spec.m, spec.p
    X = _ar1(stream.normal((n, m, p)), 0.5, axis=2)
    eps = _ar1(stream.normal((n, m)), spec.ar1_rho, axis=1)
    beta = np.zeros(p)
    beta[:5] = spec.c * np.array([2.0, -2.0, 0.0, 0.0, 2.0])
    Y = X @ beta + eps
    return LongitudinalDataset(X, Y, _names(p))


def gen_example5(spec, replication=0):
    """Logistic response on the hidden-variable design of Example 2."""
    stream = Stream(spec.seed, replication)
    X = _hidden_design(stream, spec.n, spec.p)
    eta = 4.0 * X[:, :3].sum(axis=1) - 12.0 * math.sqrt(EQUICORRELATION) * X[:, HIDDEN_FEATURE]
    prob = 1.0 / (1.0 + np.exp(-eta))
    y = (stream.uniform(spec.n) < prob).astype(float)
    return Dataset(X, y, _names(spec.p))


_GENERATORS = {1: gen_example1, 2: gen_example2, 3: gen_example3, 4: gen_example4, 5: gen_example5}


def generate(spec, replication=0):
    """Dataset (or LongitudinalDataset for Example 4) for one replication."""
    return _GENERATORS[spec.example](spec, replication)
