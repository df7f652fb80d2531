import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import bisect_uni, golden_min, grid_bivariate
from scipy.optimize import minimize

from elsis.el_core import (
    ElConfig,
    ElStatus,
    el_ratio_at_mean,
    el_weights,
    multi_log_ratios,
    profile_el_ratio,
    profile_log_ratios,
    profile_regression_log_ratios,
    solve_lambda_multi,
    solve_lambda_uni,
    uni_log_ratios,
)
from elsis.exceptions import DegenerateInput, DomainViolation

# values near the subnormal range lose bits under scaling, which breaks
# exact invariances
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False).filter(lambda v: v == 0 or abs(v) > 1e-100)


def _random_uni(rng):
    n = int(rng.integers(5, 80))
    kind = rng.integers(3)
    if kind == 0:
        g = rng.standard_normal(n) + rng.uniform(-1, 1)
    elif kind == 1:
        g = rng.exponential(size=n) - rng.uniform(0.3, 1.5)
    else:
        g = rng.standard_t(3, size=n) * rng.uniform(0.1, 10)
    return g


# --- univariate ----------------------------------------------------------------


def test_univariate_matches_bisection_oracle():
    rng = np.random.default_rng(20240501)
    checked = 0
    for _ in range(100):
        g = _random_uni(rng)
        lam_ref, ell_ref = bisect_uni(g)
        sol = solve_lambda_uni(g)
        if math.isinf(ell_ref):
            assert sol.status == ElStatus.BOUNDARY and math.isinf(sol.log_ratio)
            continue
        checked += 1
        assert sol.status == ElStatus.CONVERGED
        assert sol.log_ratio == pytest.approx(ell_ref, abs=1e-8)
        assert sol.lam == pytest.approx(lam_ref, abs=1e-8 * (1 + abs(lam_ref)))
    assert checked > 80


def test_mean_equal_to_sample_mean_gives_zero():
    assert el_ratio_at_mean([1.0, 2.0, 3.0], 2.0).log_ratio == 0.0


def test_two_point_closed_form():
    # g = (-a, b): lambda = (b - a) / (2ab), ell = 2 log((a+b)^2 / (4ab))
    a, b = 1.0, 3.0
    sol = solve_lambda_uni([-a, b])
    assert sol.lam == pytest.approx((b - a) / (2 * a * b), rel=1e-12)
    assert sol.log_ratio == pytest.approx(2 * math.log((a + b) ** 2 / (4 * a * b)), rel=1e-12)


@pytest.mark.parametrize("g", [[1.0, 2.0, 3.0], [0.0, 1.0, 2.0], [-3.0, -1.0, 0.0]])
def test_boundary_outside_or_on_hull(g):
    sol = solve_lambda_uni(g)
    assert sol.status == ElStatus.BOUNDARY
    assert math.isinf(sol.log_ratio)
    assert math.isnan(sol.lam)


def test_degenerate_inputs_raise():
    with pytest.raises(DegenerateInput):
        solve_lambda_uni([1.0])
    with pytest.raises(DegenerateInput):
        solve_lambda_uni([2.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        solve_lambda_uni([1.0, np.nan, -1.0])


def test_batched_kernel_flags():
    g = np.array([[1.0, 1.0, 0.5], [2.0, 1.0, 1.0], [-1.0, 1.0, 2.0]])
    out = uni_log_ratios(g)
    assert out["status"][0] == ElStatus.CONVERGED
    assert out["degenerate"][1] and np.isnan(out["log_ratio"][1])
    assert out["status"][2] == ElStatus.BOUNDARY and np.isinf(out["log_ratio"][2])


def test_config_validation():
    with pytest.raises(ValueError):
        ElConfig(dual_tolerance=0)
    with pytest.raises(ValueError):
        ElConfig(max_iterations=0)


@given(arrays(float, st.integers(3, 40), elements=finite), finite)
def test_univariate_properties(x, mu):
    assume(np.ptp(x) > 1e-3)
    sol = el_ratio_at_mean(x, mu)
    if not (x.min() < mu < x.max()):
        assert math.isinf(sol.log_ratio)
        return
    assert sol.log_ratio >= 0
    # a multiplier beyond double range (subnormal gaps) is reported, not solved
    assume(sol.converged)
    w = el_weights(x - mu, sol.lam)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-7)
    assert w @ (x - mu) == pytest.approx(0.0, abs=1e-7 * (1 + np.abs(x - mu).max()))


@given(arrays(float, st.integers(3, 30), elements=finite), st.floats(1e-3, 1e3), st.floats(0.05, 0.95))
def test_scale_equivariance(x, c, q):
    assume(np.ptp(x) > 1e-2)
    mu = np.quantile(x, q)
    assume(x.min() < mu < x.max())
    a = el_ratio_at_mean(x, mu).log_ratio
    b = el_ratio_at_mean(c * x, c * mu).log_ratio
    assert b == pytest.approx(a, rel=1e-7, abs=1e-9)


@given(arrays(float, st.integers(4, 30), elements=finite), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_convex_in_mu(x, q1, q2):
    assume(np.ptp(x) > 1e-2)
    m1, m2 = np.quantile(x, [q1, q2])
    mid = 0.5 * (m1 + m2)
    vals = [el_ratio_at_mean(x, m).log_ratio for m in (m1, mid, m2)]
    assume(all(np.isfinite(vals)))
    assert vals[1] <= 0.5 * (vals[0] + vals[2]) + 1e-7 * (1 + max(vals))


# --- multivariate --------------------------------------------------------------


def test_bivariate_matches_grid_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(8, 60))
        G = rng.standard_normal((n, 2)) @ rng.standard_normal((2, 2)) + rng.uniform(-0.6, 0.6, 2)
        lam_ref, ell_ref = grid_bivariate(G)
        sol = solve_lambda_multi(G)
        if math.isinf(ell_ref):
            assert sol.status == ElStatus.BOUNDARY
            continue
        checked += 1
        assert sol.log_ratio == pytest.approx(ell_ref, abs=1e-4)
    assert checked > 50


def test_multivariate_reduces_to_univariate():
    rng = np.random.default_rng(1)
    g = rng.standard_normal(25) + 0.3
    assert solve_lambda_multi(g[:, None]).log_ratio == pytest.approx(solve_lambda_uni(g).log_ratio, abs=1e-10)


def test_multivariate_boundary_and_degenerate():
    G = np.array([[1.0, 0.0], [2.0, 1.0], [1.5, -1.0], [3.0, 0.5]])
    assert solve_lambda_multi(G).status == ElStatus.BOUNDARY
    x = np.random.default_rng(2).standard_normal(10)
    with pytest.raises(DegenerateInput):
        solve_lambda_multi(np.column_stack([x, 2 * x]))
    with pytest.raises(DegenerateInput):
        solve_lambda_multi(np.ones((2, 2)))


@given(st.integers(0, 10_000))
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((30, 3)) + 0.2
    A = rng.standard_normal((3, 3))
    assume(abs(np.linalg.det(A)) > 0.1)
    a = solve_lambda_multi(G)
    b = solve_lambda_multi(G @ A.T)
    if a.is_boundary:
        assert b.is_boundary
    else:
        assert b.log_ratio == pytest.approx(a.log_ratio, rel=1e-7, abs=1e-8)


@given(st.integers(0, 10_000))
def test_multivariate_weight_constraints(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((40, 2)) + rng.uniform(-0.3, 0.3, 2)
    sol = solve_lambda_multi(G)
    assume(sol.converged)
    w = el_weights(G, sol.lam)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(w @ G, 0.0, atol=1e-8)


def test_el_weights_domain():
    with pytest.raises(DomainViolation):
        el_weights([1.0, -1.0], 2.0)


def test_batched_multivariate_warm_start_same_answer():
    rng = np.random.default_rng(3)
    G = rng.standard_normal((5, 30, 2)) + 0.1
    cold = multi_log_ratios(G)
    warm = multi_log_ratios(G, lam0=cold["lam"] * 0.9)
    np.testing.assert_allclose(warm["log_ratio"], cold["log_ratio"], atol=1e-10)


# --- profiles ------------------------------------------------------------------


def test_profile_matches_grid_over_nuisance():
    rng = np.random.default_rng(11)
    for _ in range(10):
        G = rng.standard_normal((40, 2)) @ np.array([[1.0, 0.5], [0.0, 1.0]]) + 0.2
        mu0 = float(np.quantile(G[:, 0], rng.uniform(0.3, 0.7)))

        def ell(nu):
            s = solve_lambda_multi(G - np.array([mu0, nu]))
            return s.log_ratio if s.converged else 1e6

        lo, hi = np.quantile(G[:, 1], [0.05, 0.95])
        grid = np.linspace(lo, hi, 201)
        best = grid[np.argmin([ell(v) for v in grid])]
        step = grid[1] - grid[0]
        _, ref = golden_min(ell, best - step, best + step)
        assert profile_el_ratio(G, 0, mu0) == pytest.approx(ref, abs=1e-6)


def test_profile_of_free_mean_equals_univariate():
    # with the other component free the profile reduces to the univariate ratio
    rng = np.random.default_rng(5)
    x = rng.standard_normal(50) + 0.1
    G = np.column_stack([x, x + 1e-3 * rng.standard_normal(50)])
    assert profile_el_ratio(G, 0, 0.0) == pytest.approx(el_ratio_at_mean(x, 0.0).log_ratio, abs=1e-6)
    with pytest.raises(DegenerateInput):
        profile_el_ratio(np.column_stack([x, x]), 0, 0.0)


def test_profile_outside_range_is_inf():
    G = np.random.default_rng(0).standard_normal((20, 2))
    assert math.isinf(profile_el_ratio(G, 1, G[:, 1].max() + 1.0))
    with pytest.raises(IndexError):
        profile_el_ratio(G, 2, 0.0)


def _regression_problem(rng, n=60, a=3):
    XA = rng.standard_normal((n, a))
    xj = 0.4 * XA[:, 0] + rng.standard_normal(n)
    y = XA @ rng.standard_normal(a) + 0.3 * xj + rng.standard_normal(n)
    U = np.column_stack([xj, XA])
    b0 = np.linalg.lstsq(XA, y, rcond=None)[0]
    return U, y, XA, b0


def test_regression_profile_agrees_with_general_profile_and_nelder_mead():
    rng = np.random.default_rng(21)
    for _ in range(5):
        U, y, XA, b0 = _regression_problem(rng)
        fast = profile_regression_log_ratios(U[None], y, XA, b0)["log_ratio"][0]
        C = U * y[:, None]
        D = U[:, :, None] * XA[:, None, :]
        general = profile_log_ratios(C[None], D[None], b0[None])["log_ratio"][0]

        def ell(b):
            s = multi_log_ratios((U * (y - XA @ b)[:, None])[None], check_singular=False)["log_ratio"][0]
            return s if np.isfinite(s) else 1e6

        nm = minimize(ell, b0, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000)).fun
        assert fast == pytest.approx(general, abs=1e-7)
        assert fast == pytest.approx(nm, abs=1e-6)
        # a profile never exceeds its value at the starting nuisance
        assert fast <= ell(b0) + 1e-9
