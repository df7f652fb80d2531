"""Empirical likelihood ratios for means, computed through the Lagrange dual.

For estimating-function values ``g_1, ..., g_n`` the log EL ratio at zero is

    ell = 2 * sum_i log(1 + lambda' g_i),

where ``lambda`` maximises the concave dual ``L(lambda) = sum_i log(1 + lambda' g_i)``
(equivalently solves ``sum_i g_i / (1 + lambda' g_i) = 0``).  When zero is not
inside the open convex hull of the ``g_i`` the dual is unbounded and the ratio
is ``+inf``.

Scalar entry points (``solve_lambda_uni``, ``solve_lambda_multi``, ...) return an
:class:`ElSolution`.  The screening code evaluates thousands of features at once
and uses the batched kernels (``uni_log_ratios``, ``multi_log_ratios``,
``profile_log_ratios``) which return plain arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInput, DomainViolation

__all__ = [
    "ElStatus",
    "ElConfig",
    "ElSolution",
    "solve_lambda_uni",
    "el_ratio_at_mean",
    "solve_lambda_multi",
    "profile_el_ratio",
    "el_weights",
    "uni_log_ratios",
    "multi_log_ratios",
    "profile_log_ratios",
    "profile_regression_log_ratios",
]

# Largest acceptable condition number of the row second-moment matrix.
SINGULAR_CONDITION = 1e12
# Sufficient-increase constant for the backtracking line searches.
_ARMIJO = 1e-4
# Below this squared Newton decrement a feasible step is accepted regardless
# of the sufficient-increase test (the objective change is at rounding level).
_TINY_DECREMENT = 1e-12
_MAX_HALVINGS = 50


class ElStatus(enum.IntEnum):
    CONVERGED = 0
    BOUNDARY = 1
    MAX_ITERATIONS = 2


@dataclass(frozen=True)
class ElConfig:
    """Numerical controls for the dual solvers.

    Parameters
    ----------
    dual_tolerance : float
        Convergence threshold on the Newton decrement of the dual, an
        affine-invariant measure of the dual-equation residual.
    max_iterations : int
        Newton iterations allowed per solve.
    boundary_margin : float
        Smallest admissible value of ``1 + lambda' g_i``.
    """

    dual_tolerance: float = 1e-10
    max_iterations: int = 100
    boundary_margin: float = 1e-12

    def __post_init__(self):
        for name in ("dual_tolerance", "max_iterations", "boundary_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ElConfig.{name} must be strictly positive")

    def to_dict(self):
        return {
            "dual_tolerance": self.dual_tolerance,
            "max_iterations": self.max_iterations,
            "boundary_margin": self.boundary_margin,
        }


DEFAULT_CONFIG = ElConfig()


@dataclass(frozen=True)
class ElSolution:
    """Result of one dual solve.

    ``lam`` is a float for univariate problems and an array otherwise; it is
    NaN when ``status`` is BOUNDARY.  ``log_ratio`` is ``math.inf`` exactly
    when ``status`` is BOUNDARY.
    """

    lam: float | np.ndarray
    log_ratio: float
    status: ElStatus
    iterations: int
    dual_residual: float

    @property
    def converged(self):
        return self.status == ElStatus.CONVERGED

    @property
    def is_boundary(self):
        return self.status == ElStatus.BOUNDARY


# ---------------------------------------------------------------------------
# Univariate kernel
# ---------------------------------------------------------------------------

_WIDE_BRACKET = 1e8


def uni_log_ratios(g, config=DEFAULT_CONFIG):
    """Solve the univariate dual for every column of ``g`` at once.

    Parameters
    ----------
    g : ndarray of shape (n, B)
        Column ``b`` holds the estimating-function values of problem ``b``.

    Returns
    -------
    dict of ndarrays of length B with keys ``lam``, ``log_ratio``, ``status``,
    ``iterations``, ``residual`` and ``degenerate``.  Degenerate columns
    (fewer than two rows or all values identical) get NaN ratio.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    n, B = g.shape
    tol = config.dual_tolerance

    lam = np.zeros(B)
    log_ratio = np.full(B, np.nan)
    status = np.full(B, int(ElStatus.MAX_ITERATIONS))
    iterations = np.zeros(B, dtype=int)
    residual = np.full(B, np.nan)

    if n < 2:
        degenerate = np.ones(B, dtype=bool)
    else:
        gmin = g.min(axis=0)
        gmax = g.max(axis=0)
        degenerate = gmin == gmax
        # zero outside the open hull, including zero on a vertex
        boundary = ~degenerate & ~((gmin < 0) & (gmax > 0))
        status[boundary] = ElStatus.BOUNDARY
        log_ratio[boundary] = np.inf
        lam[boundary | degenerate] = np.nan
        residual[boundary] = np.inf

    idx = np.flatnonzero(~degenerate & (status != ElStatus.BOUNDARY))
    if idx.size:
        # a subnormal extreme gives an infinite (still valid) bracket end
        with np.errstate(over="ignore", divide="ignore"):
            lo = -1.0 / g[:, idx].max(axis=0)
            hi = -1.0 / g[:, idx].min(axis=0)
        bracket_lo = np.full(B, np.nan)
        bracket_hi = np.full(B, np.nan)
        bracket_lo[idx] = lo
        bracket_hi[idx] = hi

    it = 0
    while idx.size:
        gi = g[:, idx]
        li = lam[idx]
        z = 1.0 + li * gi
        q = gi / z
        # work with q scaled to unit max so the squares cannot underflow
        qmax = np.abs(q).max(axis=0)
        qmax = np.where(qmax > 0, qmax, 1.0)
        q = q / qmax
        f = q.sum(axis=0)
        fp = (q * q).sum(axis=0)
        dec = np.abs(f) / np.sqrt(fp)
        residual[idx] = dec
        iterations[idx] = it
        done = dec <= tol
        status[idx[done]] = ElStatus.CONVERGED
        if it >= config.max_iterations:
            break
        keep = ~done
        idx, li, f, fp, qmax = idx[keep], li[keep], f[keep], fp[keep], qmax[keep]
        # f is strictly decreasing in lambda: shrink the bracket around the root
        a = np.where(f > 0, li, bracket_lo[idx])
        b = np.where(f < 0, li, bracket_hi[idx])
        bracket_lo[idx] = a
        bracket_hi[idx] = b
        newton = li + f / (fp * qmax)
        inside = (newton > a) & (newton < b)
        step = np.where(inside, newton, 0.5 * (a + b))
        # when one extreme of g is tiny the root can sit many orders of
        # magnitude inside a one-signed bracket, where Newton only doubles
        # lambda per step; bisect on the log scale instead
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            wide = (a * b > 0) & (np.maximum(b / a, a / b) > _WIDE_BRACKET)
            geo = np.sign(a) * np.sqrt(np.abs(a)) * np.sqrt(np.abs(b))
        lam[idx] = np.where(wide & np.isfinite(geo), geo, step)
        it += 1

    finite = ~degenerate & (status != ElStatus.BOUNDARY)
    if finite.any():
        ell = 2.0 * np.log1p(lam[finite] * g[:, finite]).sum(axis=0)
        log_ratio[finite] = np.maximum(ell, 0.0)
    return {
        "lam": lam,
        "log_ratio": log_ratio,
        "status": status,
        "iterations": iterations,
        "residual": residual,
        "degenerate": degenerate,
    }


def _uni_solution(out, j=0):
    status = ElStatus(int(out["status"][j]))
    log_ratio = float(out["log_ratio"][j])
    if status == ElStatus.BOUNDARY:
        log_ratio = math.inf
    return ElSolution(
        lam=float(out["lam"][j]),
        log_ratio=log_ratio,
        status=status,
        iterations=int(out["iterations"][j]),
        dual_residual=float(out["residual"][j]),
    )


def solve_lambda_uni(g, config=DEFAULT_CONFIG):
    """Lagrange multiplier and log EL ratio for univariate values ``g`` at zero.

    Safeguarded Newton on the monotone dual equation over the open interval
    ``(-1/max(g), -1/min(g))``; a bisection step replaces any Newton step that
    leaves the current bracket.

    Raises
    ------
    DegenerateInput
        If ``len(g) < 2`` or all values are identical.
    """
    g = np.asarray(g, dtype=float).ravel()
    if g.size < 2:
        raise DegenerateInput("at least two observations are required")
    if np.all(g == g[0]):
        raise DegenerateInput("estimating-function values are all identical")
    if not np.all(np.isfinite(g)):
        raise ValueError("estimating-function values must be finite")
    return _uni_solution(uni_log_ratios(g[:, None], config))


def el_ratio_at_mean(values, mu, config=DEFAULT_CONFIG):
    """Log EL ratio for the hypothesis that the mean of ``values`` is ``mu``."""
    values = np.asarray(values, dtype=float).ravel()
    return solve_lambda_uni(values - mu, config)


# ---------------------------------------------------------------------------
# Multivariate kernel
# ---------------------------------------------------------------------------

def _condition_numbers(G):
    S = np.einsum("bni,bnj->bij", G, G) / G.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(S)
    return np.where(np.isfinite(cond), cond, np.inf)


def multi_log_ratios(G, config=DEFAULT_CONFIG, lam0=None, check_singular=True):
    """Solve the multivariate dual for a batch of problems.

    Damped Newton ascent on ``L(lambda) = sum_i log(1 + lambda' g_i)`` with a
    halving line search that keeps ``1 + lambda' g_i >= boundary_margin`` and
    enforces sufficient increase.  Divergence of the iterates (the dual is
    unbounded exactly when zero lies outside the hull) is reported as
    BOUNDARY.

    Parameters
    ----------
    G : ndarray of shape (B, n, r)
    lam0 : ndarray of shape (B, r), optional
        Warm start; infeasible rows are reset to zero.
    check_singular : bool
        Flag problems whose row second-moment matrix has condition number
        above 1e12 as degenerate (they are not solved).

    Returns
    -------
    dict with ``lam`` (B, r), ``log_ratio``, ``status``, ``iterations``,
    ``residual`` and ``degenerate`` (each of length B).
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 2:
        G = G[None]
    B, n, r = G.shape
    tol2 = config.dual_tolerance ** 2
    margin = config.boundary_margin

    lam = np.zeros((B, r)) if lam0 is None else np.array(lam0, dtype=float, copy=True)
    log_ratio = np.full(B, np.nan)
    status = np.full(B, int(ElStatus.MAX_ITERATIONS))
    iterations = np.zeros(B, dtype=int)
    residual = np.full(B, np.nan)

    degenerate = np.zeros(B, dtype=bool) if n > r else np.ones(B, dtype=bool)
    if check_singular and n > r:
        degenerate = _condition_numbers(G) > SINGULAR_CONDITION
    lam[degenerate] = np.nan

    if lam0 is not None:
        z0 = 1.0 + _rows_dot(G, np.nan_to_num(lam))
        bad = ~(z0.min(axis=1) >= margin)
        lam[bad & ~degenerate] = 0.0

    # |lambda| beyond this means the iterates are escaping to infinity
    row_norm = np.sqrt((G ** 2).sum(axis=2)).max(axis=1)
    with np.errstate(divide="ignore"):
        lam_cap = 1.0 / (margin * row_norm)

    idx = np.flatnonzero(~degenerate)
    it = 0
    while idx.size:
        Gi = G[idx]
        li = lam[idx]
        z = 1.0 + _rows_dot(Gi, li)
        Lcur = np.log(z).sum(axis=1)
        Gz = Gi / z[:, :, None]
        grad = Gz.sum(axis=1)
        H = _gram(Gz, Gz)
        step = _solve_psd(H, grad)
        dec2 = (grad * step).sum(axis=1)
        residual[idx] = np.sqrt(np.maximum(dec2, 0.0))
        iterations[idx] = it
        done = dec2 <= tol2
        status[idx[done]] = ElStatus.CONVERGED
        escaped = ~done & (np.linalg.norm(li, axis=1) > lam_cap[idx])
        status[idx[escaped]] = ElStatus.BOUNDARY
        if it >= config.max_iterations:
            # still gaining a constant amount per step: logarithmic divergence
            diverging = ~done & ~escaped & (dec2 > 0.5)
            status[idx[diverging]] = ElStatus.BOUNDARY
            break
        keep = ~(done | escaped)
        idx, Gi, li, Lcur, step, dec2 = idx[keep], Gi[keep], li[keep], Lcur[keep], step[keep], dec2[keep]
        if not idx.size:
            break
        lam[idx] = _line_search(Gi, li, Lcur, step, dec2, margin)
        it += 1

    ok = status == ElStatus.CONVERGED
    ok |= status == ElStatus.MAX_ITERATIONS
    ok &= ~degenerate
    if ok.any():
        z = 1.0 + _rows_dot(G[ok], lam[ok])
        log_ratio[ok] = np.maximum(2.0 * np.log(z).sum(axis=1), 0.0)
    bnd = status == ElStatus.BOUNDARY
    log_ratio[bnd] = np.inf
    lam[bnd] = np.nan
    status[degenerate] = ElStatus.MAX_ITERATIONS
    return {
        "lam": lam,
        "log_ratio": log_ratio,
        "status": status,
        "iterations": iterations,
        "residual": residual,
        "degenerate": degenerate,
    }


def _rows_dot(G, lam):
    """``G[b] @ lam[b]`` for every batch member: (B, n, r), (B, r) -> (B, n)."""
    return (G @ lam[:, :, None])[:, :, 0]


def _gram(U, V):
    """``U[b]' V[b]`` for every batch member."""
    return np.swapaxes(U, 1, 2) @ V


def _solve_psd(H, rhs):
    try:
        return np.linalg.solve(H, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return (np.linalg.pinv(H, hermitian=True) @ rhs[..., None])[..., 0]


def _line_search(Gi, li, Lcur, step, dec2, margin):
    """Halve the Newton step until feasible with sufficient increase."""
    t = np.ones(len(li))
    new = li.copy()
    pending = np.arange(len(li))
    for _ in range(_MAX_HALVINGS + 1):
        trial = li[pending] + t[pending, None] * step[pending]
        z = 1.0 + _rows_dot(Gi[pending], trial)
        feasible = z.min(axis=1) >= margin
        with np.errstate(invalid="ignore", divide="ignore"):
            Ltry = np.where(feasible, np.log(np.where(feasible[:, None], z, 1.0)).sum(axis=1), -np.inf)
        gain = Ltry - Lcur[pending]
        accept = feasible & (
            (gain >= _ARMIJO * t[pending] * dec2[pending]) | (dec2[pending] < _TINY_DECREMENT)
        )
        new[pending[accept]] = trial[accept]
        pending = pending[~accept]
        if not pending.size:
            break
        t[pending] *= 0.5
    return new


def _multi_solution(out, j=0):
    status = ElStatus(int(out["status"][j]))
    log_ratio = math.inf if status == ElStatus.BOUNDARY else float(out["log_ratio"][j])
    return ElSolution(
        lam=np.array(out["lam"][j], dtype=float),
        log_ratio=log_ratio,
        status=status,
        iterations=int(out["iterations"][j]),
        dual_residual=float(out["residual"][j]),
    )


def solve_lambda_multi(G, config=DEFAULT_CONFIG):
    """Lagrange multiplier and log EL ratio at zero for the rows of ``G`` (n x r).

    Raises
    ------
    DegenerateInput
        If ``n <= r`` or the row second-moment matrix is numerically singular.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    n, r = G.shape
    if not n > r >= 1:
        raise DegenerateInput(f"need n > r >= 1, got n={n}, r={r}")
    if not np.all(np.isfinite(G)):
        raise ValueError("estimating-function values must be finite")
    out = multi_log_ratios(G[None], config)
    if out["degenerate"][0]:
        raise DegenerateInput("second-moment matrix of estimating functions is numerically singular")
    return _multi_solution(out)


def el_weights(g, lam):
    """Implied EL weights ``w_i = 1 / (n (1 + lambda' g_i))``.

    The weights are returned as computed, without renormalisation, so an
    incorrect ``lam`` shows up as weights that do not sum to one.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    z = 1.0 + g @ lam
    if np.any(~(z > 0)):
        raise DomainViolation("1 + lambda' g_i must be positive for every row")
    return 1.0 / (g.shape[0] * z)


# ---------------------------------------------------------------------------
# Profiling
# ---------------------------------------------------------------------------

def profile_log_ratios(C, D, b0, config=DEFAULT_CONFIG, max_outer=50, outer_tolerance=1e-8):
    """Minimise the EL ratio over a nuisance vector entering linearly.

    For each problem in the batch the estimating function is
    ``g_i(b) = C_i - D_i b`` and the result is ``min_b ell(b)``, found by
    damped Newton on ``b`` with the inner dual re-solved (warm started) at
    every trial point.  The Hessian of the profiled objective follows from
    implicit differentiation of the dual equation; when it is not positive
    definite its Gauss-Newton part is used instead.

    Parameters
    ----------
    C : ndarray (B, n, r)
    D : ndarray (B, n, r, a) or (r, a)
        Per-row Jacobians (a constant matrix is broadcast).
    b0 : ndarray (B, a)
        Starting values; must give finite ratios to make progress.

    Returns
    -------
    dict with ``log_ratio``, ``b``, ``outer_iterations``, ``converged``.
    Problems whose start lies outside the hull keep ``log_ratio = inf``.
    """
    C = np.asarray(C, dtype=float)
    B, n, r = C.shape
    D = np.asarray(D, dtype=float)
    shared = D.ndim == 2
    a = D.shape[-1]
    b = np.array(b0, dtype=float, copy=True).reshape(B, a)

    def g_of(sel, bb):
        if shared:
            return C[sel] - (D @ bb.T).T[:, None, :]
        return C[sel] - (D[sel] @ bb[:, None, :, None])[..., 0]

    everything = np.arange(B)
    inner = multi_log_ratios(g_of(everything, b), config, check_singular=False)
    ell = inner["log_ratio"].copy()
    lam = inner["lam"].copy()
    outer_iter = np.zeros(B, dtype=int)
    converged = np.zeros(B, dtype=bool)

    idx = np.flatnonzero(np.isfinite(ell))
    if idx.size:
        # fast path: Newton on the saddle-point equations in (lambda, b) jointly;
        # whatever it does not settle goes through the nested iteration below
        ok, jb, jlam, jell, jit = _joint_saddle(C[idx], None if shared else D[idx], D if shared else None,
                                                b[idx], lam[idx], config, outer_tolerance)
        # a minimum over b can never sit above its starting value; a stationary
        # point that does is a saddle or maximum of the profile, so redo it
        ok &= jell <= ell[idx] + 1e-9 * (1.0 + ell[idx])
        fast = idx[ok]
        b[fast], lam[fast], ell[fast] = jb[ok], jlam[ok], jell[ok]
        outer_iter[fast] = jit[ok]
        converged[fast] = True
        idx = idx[~ok]
    for it in range(max_outer):
        if not idx.size:
            break
        g = g_of(idx, b[idx])
        Di = None if shared else D[idx]
        li = lam[idx]
        z = 1.0 + _rows_dot(g, li)
        iz = 1.0 / z
        iz2 = iz * iz
        g2 = g * iz2[:, :, None]
        A = _gram(g2, g)
        if shared:
            P = iz.sum(axis=1)[:, None, None] * D
            Dl = np.broadcast_to((li @ D)[:, None, :], (len(idx), n, a))
        else:
            P = (Di * iz[:, :, None, None]).sum(axis=1)
            Dl = (Di * li[:, None, :, None]).sum(axis=2)
        Q = _gram(g2, Dl)
        R = _gram(Dl * iz2[:, :, None], Dl)
        grad = -2.0 * (li[:, None, :] @ P)[:, 0, :]
        PQ = P - Q
        AinvPQ = np.linalg.solve(A, PQ)
        Hgn = 2.0 * _gram(PQ, AinvPQ)
        Hfull = Hgn - 2.0 * R
        Hfull = 0.5 * (Hfull + np.swapaxes(Hfull, 1, 2))
        pd = np.linalg.eigvalsh(Hfull)[:, 0] > 1e-12 * np.maximum(1.0, np.abs(np.trace(Hfull, axis1=1, axis2=2)))
        H = np.where(pd[:, None, None], Hfull, Hgn + 1e-12 * np.eye(a))
        direction = -_solve_psd(H, grad)
        dec2 = -np.einsum("ba,ba->b", grad, direction)
        outer_iter[idx] = it
        done = dec2 <= outer_tolerance ** 2
        converged[idx[done]] = True
        keep = ~done
        idx, direction, dec2 = idx[keep], direction[keep], dec2[keep]
        if not idx.size:
            break
        # backtracking on the profiled objective
        t = np.ones(idx.size)
        pending = np.arange(idx.size)
        moved = np.zeros(idx.size, dtype=bool)
        for _ in range(30):
            sel = idx[pending]
            trial_b = b[sel] + t[pending, None] * direction[pending]
            trial = multi_log_ratios(g_of(sel, trial_b), config, lam0=lam[sel], check_singular=False)
            new_ell = trial["log_ratio"]
            accept = np.isfinite(new_ell) & (
                (new_ell <= ell[sel] - _ARMIJO * t[pending] * dec2[pending])
                | ((dec2[pending] < _TINY_DECREMENT) & (new_ell <= ell[sel] + 1e-12))
            )
            acc = sel[accept]
            b[acc] = trial_b[accept]
            ell[acc] = new_ell[accept]
            lam[acc] = trial["lam"][accept]
            moved[pending[accept]] = True
            pending = pending[~accept]
            if not pending.size:
                break
            t[pending] *= 0.5
        # no admissible step: the current point is as good as we can resolve
        converged[idx[~moved]] = True
        idx = idx[moved]
    ell = np.where(np.isfinite(ell), np.maximum(ell, 0.0), ell)
    return {"log_ratio": ell, "b": b, "outer_iterations": outer_iter, "converged": converged}


def _joint_saddle(C, D, Dshared, b, lam, config, outer_tolerance, max_iter=30):
    """Newton on grad L(lambda, b) = 0 for ``L = sum_i log(1 + lambda' (C_i - D_i b))``.

    Returns (converged, b, lam, log_ratio, iterations) per problem.  Steps are
    halved until every ``1 + lambda' g_i`` keeps at least a tenth of its
    previous value; problems that stall are reported unconverged.
    """
    B, n, r = C.shape
    a = b.shape[1]
    margin = config.boundary_margin
    tol2 = min(config.dual_tolerance, outer_tolerance) ** 2
    b = b.copy()
    lam = lam.copy()
    converged = np.zeros(B, dtype=bool)
    failed = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)

    def g_of(sel, bb):
        if Dshared is not None:
            return C[sel] - (Dshared @ bb.T).T[:, None, :]
        return C[sel] - (D[sel] * bb[:, None, None, :]).sum(axis=-1)

    idx = np.arange(B)
    for it in range(max_iter):
        if not idx.size:
            break
        g = g_of(idx, b[idx])
        li = lam[idx]
        z = 1.0 + _rows_dot(g, li)
        iz = 1.0 / z
        iz2 = iz * iz
        g2 = g * iz2[:, :, None]
        A = _gram(g2, g)
        if Dshared is not None:
            P = iz.sum(axis=1)[:, None, None] * Dshared
            Dl = np.broadcast_to((li @ Dshared)[:, None, :], (idx.size, n, a))
        else:
            Di = D[idx]
            P = (Di * iz[:, :, None, None]).sum(axis=1)
            Dl = (Di * li[:, None, :, None]).sum(axis=2)
        Q = _gram(g2, Dl)
        R = _gram(Dl * iz2[:, :, None], Dl)
        F_lam = (g * iz[:, :, None]).sum(axis=1)
        F_b = -(Dl * iz[:, :, None]).sum(axis=1)
        K = np.empty((idx.size, r + a, r + a))
        K[:, :r, :r] = -A
        K[:, :r, r:] = Q - P
        K[:, r:, :r] = np.swapaxes(Q - P, 1, 2)
        K[:, r:, r:] = -R
        rhs = -np.concatenate([F_lam, F_b], axis=1)
        try:
            step = np.linalg.solve(K, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            failed[idx] = True
            break
        d_lam, d_b = step[:, :r], step[:, r:]
        PQ = P - Q
        Hs = _gram(PQ, np.linalg.solve(A, PQ))
        dec2 = (d_lam * (A @ d_lam[..., None])[..., 0]).sum(axis=1)
        dec2 += (d_b * (Hs @ d_b[..., None])[..., 0]).sum(axis=1)
        iters[idx] = it
        done = dec2 <= tol2
        if done.any():
            # accept only local minima in b: the profile Hessian must be PSD
            curv = np.linalg.eigvalsh(Hs[done] - R[done])[:, 0]
            scale = np.abs(np.diagonal(Hs[done], axis1=1, axis2=2)).max(axis=1)
            failed[idx[done][curv < -1e-8 * (1.0 + scale)]] = True
        converged[idx[done]] = True
        keep = ~done & np.isfinite(dec2)
        failed[idx[~done & ~np.isfinite(dec2)]] = True
        idx, d_lam, d_b, z = idx[keep], d_lam[keep], d_b[keep], z[keep]
        t = np.ones(idx.size)
        pending = np.arange(idx.size)
        for _ in range(30):
            sel = idx[pending]
            tb = b[sel] + t[pending, None] * d_b[pending]
            tl = lam[sel] + t[pending, None] * d_lam[pending]
            zn = 1.0 + _rows_dot(g_of(sel, tb), tl)
            good = np.all(zn >= np.maximum(margin, 0.1 * z[pending]), axis=1)
            b[sel[good]] = tb[good]
            lam[sel[good]] = tl[good]
            pending = pending[~good]
            if not pending.size:
                break
            t[pending] *= 0.5
        failed[idx[pending]] = True
        idx = idx[~np.isin(idx, idx[pending])]
    ok = converged & ~failed
    ell = np.full(B, np.inf)
    if ok.any():
        sel = np.flatnonzero(ok)
        z = 1.0 + _rows_dot(g_of(sel, b[sel]), lam[sel])
        good = z.min(axis=1) > 0
        ell[sel[good]] = np.maximum(2.0 * np.log(z[good]).sum(axis=1), 0.0)
        ok[sel[~good]] = False
    return ok, b, lam, ell, iters


def profile_regression_log_ratios(U, y, V, b0, config=DEFAULT_CONFIG, outer_tolerance=1e-8, max_iter=30):
    """Profile EL ratios for regression-type estimating functions.

    Specialisation of :func:`profile_log_ratios` to
    ``g_i(b) = U_i (y_i - V_i' b)``, i.e. ``C_i = U_i y_i`` and the rank-one
    Jacobian ``D_i = U_i V_i'``, which keeps every operation at the size of
    ``U``.  Newton on the joint saddle-point equations does the work; the
    few problems it does not settle are handed to the general routine.

    Parameters
    ----------
    U : ndarray (B, n, r)
    y : ndarray (n,)
    V : ndarray (n, a)
        Shared across the batch.
    b0 : ndarray (a,) or (B, a)
    """
    U = np.asarray(U, dtype=float)
    B, n, r = U.shape
    V = np.asarray(V, dtype=float)
    a = V.shape[1]
    margin = config.boundary_margin
    tol2 = min(config.dual_tolerance, outer_tolerance) ** 2
    b = np.array(np.broadcast_to(b0, (B, a)), dtype=float)

    def g_of(sel, bb):
        e = y[None, :] - bb @ V.T                  # (B, n)
        return U[sel] * e[:, :, None], e

    start = multi_log_ratios(g_of(np.arange(B), b)[0], config, check_singular=False)
    lam = np.nan_to_num(start["lam"])
    ell = start["log_ratio"].copy()
    converged = np.zeros(B, dtype=bool)
    failed = ~np.isfinite(ell)

    idx = np.flatnonzero(~failed)
    for _ in range(max_iter):
        if not idx.size:
            break
        Ui = U[idx]
        li = lam[idx]
        g, e = g_of(idx, b[idx])
        ul = _rows_dot(Ui, li)                      # u_i' lambda
        z = 1.0 + ul * e
        iz = 1.0 / z
        iz2 = iz * iz
        A = _gram(g * iz2[:, :, None], g)
        P = _gram(Ui * iz[:, :, None], np.broadcast_to(V, (idx.size, n, a)))
        Q = _gram(Ui * (e * ul * iz2)[:, :, None], np.broadcast_to(V, (idx.size, n, a)))
        R = _gram(V[None] * (ul * ul * iz2)[:, :, None], np.broadcast_to(V, (idx.size, n, a)))
        F_lam = (g * iz[:, :, None]).sum(axis=1)
        F_b = -((ul * iz) @ V)
        K = np.empty((idx.size, r + a, r + a))
        K[:, :r, :r] = -A
        K[:, :r, r:] = Q - P
        K[:, r:, :r] = np.swapaxes(Q - P, 1, 2)
        K[:, r:, r:] = -R
        rhs = -np.concatenate([F_lam, F_b], axis=1)
        try:
            step = np.linalg.solve(K, rhs[..., None])[..., 0]
            PQ = P - Q
            Hs = _gram(PQ, np.linalg.solve(A, PQ))
        except np.linalg.LinAlgError:
            failed[idx] = True
            break
        d_lam, d_b = step[:, :r], step[:, r:]
        dec2 = (d_lam * (A @ d_lam[..., None])[..., 0]).sum(axis=1)
        dec2 += (d_b * (Hs @ d_b[..., None])[..., 0]).sum(axis=1)
        done = dec2 <= tol2
        if done.any():
            # accept only local minima in b: the profile Hessian must be PSD
            curv = np.linalg.eigvalsh(Hs[done] - R[done])[:, 0]
            scale = np.abs(np.diagonal(Hs[done], axis1=1, axis2=2)).max(axis=1)
            failed[idx[done][curv < -1e-8 * (1.0 + scale)]] = True
        converged[idx[done]] = True
        bad = ~np.isfinite(dec2)
        failed[idx[bad]] = True
        keep = ~done & ~bad
        idx, d_lam, d_b, z = idx[keep], d_lam[keep], d_b[keep], z[keep]
        t = np.ones(idx.size)
        pending = np.arange(idx.size)
        for _h in range(30):
            sel = idx[pending]
            tb = b[sel] + t[pending, None] * d_b[pending]
            tl = lam[sel] + t[pending, None] * d_lam[pending]
            zn = 1.0 + _rows_dot(g_of(sel, tb)[0], tl)
            good = np.all(zn >= np.maximum(margin, 0.1 * z[pending]), axis=1)
            b[sel[good]] = tb[good]
            lam[sel[good]] = tl[good]
            pending = pending[~good]
            if not pending.size:
                break
            t[pending] *= 0.5
        failed[idx[pending]] = True
        idx = np.setdiff1d(idx, idx[pending])

    ok = converged & ~failed
    if ok.any():
        sel = np.flatnonzero(ok)
        z = 1.0 + _rows_dot(g_of(sel, b[sel])[0], lam[sel])
        good = z.min(axis=1) > 0
        ell[sel[good]] = np.maximum(2.0 * np.log(z[good]).sum(axis=1), 0.0)
        ok[sel[~good]] = False
        above = ell[sel] > start["log_ratio"][sel] * (1.0 + 1e-9) + 1e-9
        ok[sel[above]] = False
    rest = np.flatnonzero(~ok & np.isfinite(start["log_ratio"]))
    if rest.size:
        C = U[rest] * y[None, :, None]
        D = U[rest][:, :, :, None] * V[None, :, None, :]
        out = profile_log_ratios(C, D, np.broadcast_to(b0, (B, a))[rest], config,
                                 outer_tolerance=outer_tolerance)
        ell[rest] = out["log_ratio"]
        b[rest] = out["b"]
    return {"log_ratio": ell, "b": b, "fallback": rest}


def profile_el_ratio(G, fixed_component, fixed_value, config=DEFAULT_CONFIG):
    """Profile log EL ratio for one mean component with the others minimised out.

    Returns ``min_nu ell(mu)`` over hypothesised means ``mu`` whose
    ``fixed_component`` (0-based) equals ``fixed_value``; the remaining
    components ``nu`` are free.  ``+inf`` when no such mean lies inside the
    convex hull of the rows of ``G``.
    """
    G = np.asarray(G, dtype=float)
    n, r = G.shape
    if not n > r >= 2:
        raise DegenerateInput(f"need n > r >= 2, got n={n}, r={r}")
    if not 0 <= fixed_component < r:
        raise IndexError(f"fixed_component {fixed_component} out of range for r={r}")
    if _condition_numbers((G - G.mean(axis=0))[None])[0] > SINGULAR_CONDITION:
        raise DegenerateInput("estimating-function components are collinear")
    col = G[:, fixed_component]
    if not (col.min() < fixed_value < col.max()):
        return math.inf

    nuisance = [k for k in range(r) if k != fixed_component]
    selector = np.zeros((r, r - 1))
    selector[nuisance, np.arange(r - 1)] = 1.0
    C = G.copy()
    C[:, fixed_component] -= fixed_value
    start = G[:, nuisance].mean(axis=0)
    first = multi_log_ratios((C - selector @ start)[None], config, check_singular=False)
    if not np.isfinite(first["log_ratio"][0]):
        # nuisance means are not always interior once the fixed component
        # moves; the univariate EL weights give a point that is
        uni = solve_lambda_uni(col - fixed_value, config)
        w = el_weights(col - fixed_value, uni.lam)
        start = w @ G[:, nuisance]
    out = profile_log_ratios(C[None], selector, start[None], config)
    return float(out["log_ratio"][0])
