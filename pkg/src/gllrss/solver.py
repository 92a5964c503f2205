"""Joint Laplacian / low-rank estimation by alternating minimization.

The objective over a Laplacian ``L`` and signals ``X`` given observations
``Y`` and a transition ``R`` is::

    Q1(L, X) = ||D(X - Y)||_F^2 + alpha tr(D(X)^T L D(X))
               + beta ||L||_F^2 + gamma ||X||_*

with ``L`` restricted to combinatorial Laplacians of trace ``N``. Each outer
iteration solves the ``L`` subproblem by ADMM with a projection onto the
constraint set, then the ``X`` subproblem by ADMM whose smooth step is a
conjugate-gradient solve and whose nonsmooth step is singular value
thresholding.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import scipy.linalg

from .exceptions import DecompositionError, SolverError, ValidationError
from .transition import as_transition, weighted_difference, weighted_difference_adjoint

log = logging.getLogger(__name__)

CLOSED_FORM_CAP = 2000


@dataclass
class SolverConfig:
    """Regularization weights and iteration controls.

    ``alpha`` weighs spatiotemporal smoothness, ``beta`` the Frobenius norm
    of ``L`` (edge sparsity), ``gamma`` the nuclear norm of ``X``. ``gamma``
    may be 0 to switch off the low-rank prior.
    """

    alpha: float = 0.1
    beta: float = 10.0
    gamma: float = 4.0
    rho: float = 1.0
    k_outer: int = 50
    eps_outer: float = 1e-4
    k_admm: int = 200
    tol_admm: float = 1e-6
    k_cg: int = 500
    delta_cg: float = 1e-6
    proj_tol: float = 1e-8
    proj_max_iter: int = 10000
    warm_start: bool = True
    adaptive_rho: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta", "rho", "eps_outer", "tol_admm", "delta_cg", "proj_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.gamma >= 0:
            raise ValidationError(f"gamma must be nonnegative, got {self.gamma}")
        for name in ("k_outer", "k_admm", "k_cg", "proj_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")

    def replace(self, **changes) -> "SolverConfig":
        d = asdict(self)
        d.update(changes)
        return SolverConfig(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class SolverResult:
    l_hat: np.ndarray
    x_hat: np.ndarray
    objective_trace: list
    inner_residual_traces: list = field(default_factory=list)
    outer_iterations_used: int = 0
    converged: bool = False


def _check_finite(name, a, it):
    if not np.all(np.isfinite(a)):
        raise SolverError(f"non-finite values in {name} at iteration {it}")


def _conform(x, y, r):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError(f"signal matrix must be 2-D, got shape {x.shape}")
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape != x.shape:
            raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y, as_transition(r, x.shape[0])


def nuclear_norm(x) -> float:
    return float(np.linalg.svd(x, compute_uv=False).sum())


def objective_q1(l, x, y, r, alpha, beta, gamma) -> float:
    """Value of the joint objective at ``(L, X)``."""
    x, y, r = _conform(x, y, r)
    l = np.asarray(l, dtype=float)
    if l.shape != (x.shape[0], x.shape[0]):
        raise ValidationError(f"Laplacian shape {l.shape} does not match {x.shape[0]} vertices")
    fit = weighted_difference(x - y, r)
    dx = weighted_difference(x, r)
    val = np.sum(fit * fit) + alpha * np.sum(dx * (l @ dx)) + beta * np.sum(l * l)
    if gamma:
        val += gamma * nuclear_norm(x)
    return float(val)


# ---------------------------------------------------------------------------
# Projection onto trace-constrained Laplacians
# ---------------------------------------------------------------------------


def _proj_cone(a):
    """Nearest symmetric matrix with nonpositive off-diagonal entries (``a`` symmetric)."""
    out = np.minimum(a, 0.0)
    d = a.diagonal()
    out.flat[:: a.shape[0] + 1] = d
    return out


def _proj_affine(a, target_trace):
    """Nearest symmetric ``L`` with ``L 1 = 0`` and ``tr L = target_trace`` (``a`` symmetric).

    ``A -> P A P`` with ``P = I - 11^T/N`` is the orthogonal projection onto
    zero-row-sum symmetric matrices; the trace is then fixed along ``P``,
    which is the normal of the trace hyperplane inside that subspace.
    """
    n = a.shape[0]
    rm = a.sum(axis=1) / n
    total = rm.sum()
    # trace of P A P is tr(A) - sum(row means)
    shift = (target_trace - (a.trace() - total)) / (n - 1)
    out = a - rm[:, None]
    out -= rm[None, :]
    out += total / n - shift / n
    out.flat[:: n + 1] += shift
    return out


def project_cgl_star(m, target_trace: float, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Euclidean projection onto ``{L sym, L_ij <= 0 (i != j), L 1 = 0, tr L = target}``.

    Dykstra's alternating projections between the off-diagonal sign cone
    and the affine zero-row-sum/trace subspace. PSD holds automatically for
    every member of that set (diagonal dominance).

    Raises
    ------
    SolverError
        If successive iterates still differ by ``>= tol`` after ``max_iter``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > 1e-8 * max(1.0, float(np.max(np.abs(m)))):
        raise ValidationError(f"input asymmetric by {asym:.3e}")
    if n == 1:
        if target_trace != 0:
            raise ValidationError("a 1-vertex Laplacian has trace 0")
        return np.zeros((1, 1))
    m = 0.5 * (m + m.T)

    x, iters, diff = _dykstra(m, float(target_trace), float(tol), int(max_iter))
    if diff >= tol:
        raise SolverError(f"Laplacian projection did not converge in {max_iter} iterations (last change {diff:.3e})")
    # the last affine step can leave off-diagonal residue of order tol; clean
    # it up and restore zero row sums exactly
    return _polish(x, target_trace)


@numba.njit(cache=True)
def _dykstra(m, target_trace, tol, max_iter):
    """Compiled Dykstra loop; same steps as :func:`_proj_cone` / :func:`_proj_affine`."""
    n = m.shape[0]
    x = _affine_kernel(m, target_trace)
    p = np.zeros_like(m)
    y = np.empty_like(m)
    diff = np.inf
    it = 0
    while it < max_iter:
        it += 1
        for i in range(n):
            for j in range(n):
                v = x[i, j] + p[i, j]
                y[i, j] = v if (i == j or v < 0.0) else 0.0
                p[i, j] = v - y[i, j]
        x_new = _affine_kernel(y, target_trace)
        diff = np.sqrt(np.sum((x_new - x) ** 2))
        x = x_new
        if diff < tol:
            break
    return x, it, diff


@numba.njit(cache=True)
def _affine_kernel(a, target_trace):
    n = a.shape[0]
    rm = np.empty(n)
    for i in range(n):
        rm[i] = a[i].sum() / n
    total = rm.sum()
    tr = 0.0
    for i in range(n):
        tr += a[i, i]
    shift = (target_trace - (tr - total)) / (n - 1)
    c = total / n - shift / n
    out = np.empty_like(a)
    for i in range(n):
        for j in range(n):
            out[i, j] = a[i, j] - rm[i] - rm[j] + c
        out[i, i] += shift
    return out


def _polish(x, target_trace):
    w = -x
    np.fill_diagonal(w, 0.0)
    w = np.maximum(0.5 * (w + w.T), 0.0)
    l = np.diag(w.sum(axis=1)) - w
    tr = np.trace(l)
    if tr > 0:
        l *= target_trace / tr
    return l


def complete_graph_laplacian(n: int, trace: float) -> np.ndarray:
    """Uniform complete-graph Laplacian scaled to ``trace``; a feasible starting point."""
    l = n * np.eye(n) - np.ones((n, n))
    return l * (trace / np.trace(l)) if n > 1 else l


# ---------------------------------------------------------------------------
# Graph refinement
# ---------------------------------------------------------------------------


RHO_BALANCE = 10.0
RHO_FACTOR = 2.0
RHO_ADAPT_ITERS = 50


def _balance_rho(rho, primal, dual):
    """Residual balancing: keep primal and dual residuals within a factor of 10.

    Only applied during the first ``RHO_ADAPT_ITERS`` iterations of a call so
    the penalty is eventually fixed and the usual ADMM guarantees apply.
    """
    if primal > RHO_BALANCE * dual:
        return rho * RHO_FACTOR
    if dual > RHO_BALANCE * primal:
        return rho / RHO_FACTOR
    return rho


@dataclass
class GraphState:
    z: np.ndarray
    xi: np.ndarray
    rho: float | None = None


def refine_graph(x, y_unused, r, cfg: SolverConfig, warm: GraphState | None = None):
    """ADMM for ``min_L alpha tr(D(X)^T L D(X)) + beta ||L||_F^2`` over the constraint set.

    ``y_unused`` is accepted for call-site symmetry with the outer loop; the
    subproblem does not depend on the observations.

    Returns
    -------
    l : ndarray
        The projected (feasible) iterate ``Z``.
    state : GraphState
        ``(Z, Xi)`` for warm starting the next call.
    residuals : list of float
        ``max(primal, dual)`` residual per iteration.
    """
    x, _, r = _conform(x, None, r)
    n = x.shape[0]
    dx = weighted_difference(x, r)
    s = dx @ dx.T
    rho = cfg.rho
    if warm is not None:
        z, xi = warm.z.copy(), warm.xi.copy()
        rho = warm.rho or rho
    else:
        z, xi = complete_graph_laplacian(n, n), np.zeros((n, n))
    residuals = []
    for k in range(cfg.k_admm):
        l = (rho * z + xi - cfg.alpha * s) / (2.0 * cfg.beta + rho)
        _check_finite("L", l, k)
        z_new = project_cgl_star(l - xi / rho, n, cfg.proj_tol, cfg.proj_max_iter)
        xi = xi + rho * (z_new - l)
        _check_finite("Xi", xi, k)
        primal = np.linalg.norm(z_new - l)
        dual = rho * np.linalg.norm(z_new - z)
        residuals.append(float(max(primal, dual)))
        z = z_new
        if residuals[-1] < cfg.tol_admm:
            break
        if cfg.adaptive_rho and k < RHO_ADAPT_ITERS:
            rho = _balance_rho(rho, primal, dual)
    return z, GraphState(z, xi, rho), residuals


def graph_subproblem_objective(l, x, r, alpha, beta) -> float:
    dx = weighted_difference(np.asarray(x, dtype=float), r)
    return float(alpha * np.sum(dx * (l @ dx)) + beta * np.sum(l * l))


# ---------------------------------------------------------------------------
# Low-rank estimation
# ---------------------------------------------------------------------------


def _quad_map(delta, l, r, rho, alpha):
    """Hessian of the X-subproblem applied to ``delta``."""
    d = weighted_difference(delta, r)
    g = 2.0 * d
    if alpha:
        g += 2.0 * alpha * (l @ d)
    return weighted_difference_adjoint(g, r) + rho * delta


def gradient_fx(x, y, l, r, p, q, rho, alpha) -> np.ndarray:
    """Gradient of the smooth X-subproblem objective

    ``f(X) = ||D(X - Y)||^2 + alpha tr(D(X)^T L D(X)) + rho/2 ||X - P + Q/rho||^2``,

    i.e. ``2 D*(D(X - Y)) + 2 alpha D*(L D(X)) + rho (X - P) + Q`` where
    ``D*(G) = G - R G B^T``.
    """
    x, y, r = _conform(x, y, r)
    l = np.asarray(l, dtype=float)
    if l.shape != (x.shape[0],) * 2 or np.shape(p) != x.shape or np.shape(q) != x.shape:
        raise ValidationError("dimension mismatch between X, L, P and Q")
    g = 2.0 * weighted_difference(x - y, r)
    if alpha:
        g += 2.0 * alpha * (l @ weighted_difference(x, r))
    return weighted_difference_adjoint(g, r) + rho * (x - p) + q


def fx_value(x, y, l, r, p, q, rho, alpha) -> float:
    """The smooth X-subproblem objective (see :func:`gradient_fx`)."""
    x, y, r = _conform(x, y, r)
    fit = weighted_difference(x - y, r)
    dx = weighted_difference(x, r)
    pen = x - p + q / rho if rho else 0.0
    return float(np.sum(fit * fit) + alpha * np.sum(dx * (l @ dx)) + 0.5 * rho * np.sum(pen * pen))


def cg_x_update(y, l, r, p, q, rho, alpha, delta_cg=1e-6, k_cg=500, x0=None, return_info=False):
    """Minimize the quadratic X-subproblem by Fletcher-Reeves conjugate gradients.

    The step along each direction is the exact line minimizer
    ``-<dir, grad> / <dir, H dir>``. Stops once
    ``||grad||_F <= delta_cg * max(1, ||grad(x0)||_F)``.
    """
    y = np.asarray(y, dtype=float)
    r = as_transition(r, y.shape[0])
    x = np.zeros_like(y) if x0 is None else np.array(x0, dtype=float)
    grad = gradient_fx(x, y, l, r, p, q, rho, alpha)
    gnorm2 = float(np.sum(grad * grad))
    stop = delta_cg * max(1.0, np.sqrt(gnorm2))
    direction = -grad
    it = 0
    while np.sqrt(gnorm2) > stop and it < k_cg:
        hd = _quad_map(direction, l, r, rho, alpha)
        curv = float(np.sum(direction * hd))
        if not (np.isfinite(curv) and curv > 0):
            raise SolverError(f"CG hit a non-positive curvature direction ({curv!r}) at iteration {it}")
        mu = -float(np.sum(direction * grad)) / curv
        x += mu * direction
        # the objective is quadratic, so the new gradient follows from H dir
        grad = grad + mu * hd
        new_gnorm2 = float(np.sum(grad * grad))
        theta = new_gnorm2 / gnorm2
        direction = -grad + theta * direction
        gnorm2 = new_gnorm2
        it += 1
    if return_info:
        return x, {"iterations": it, "grad_norm": float(np.sqrt(gnorm2)), "threshold": float(stop)}
    return x


def block_difference_matrix(r, m: int) -> np.ndarray:
    """Dense ``NM x NM`` operator ``T_d`` with ``vec(D(X)) = T_d^T vec(X)``.

    Identity blocks on the diagonal, ``-R^T`` on the block superdiagonal
    (``-R`` for the symmetric transitions used here).
    """
    rm = r.matrix()
    n = rm.shape[0]
    shift = np.eye(m, k=1)
    return np.eye(n * m) - np.kron(shift, rm.T)


def closed_form_x_update(y, l, r, p, q, rho, alpha, cap: int = CLOSED_FORM_CAP) -> np.ndarray:
    """Direct solve of the X-subproblem's normal equations (small instances only).

    ``vec(X) = (2 T T^T + 2 alpha T (I (x) L) T^T + rho I)^{-1} (vec(rho P - Q) + 2 T T^T vec(Y))``.
    """
    y = np.asarray(y, dtype=float)
    n, m = y.shape
    if n * m > cap:
        raise ValidationError(f"N*M = {n * m} exceeds the closed-form cap {cap}; use cg_x_update")
    r = as_transition(r, n)
    t = block_difference_matrix(r, m)
    ttt = t @ t.T
    lk = t @ np.kron(np.eye(m), np.asarray(l, dtype=float)) @ t.T
    a = 2.0 * ttt + 2.0 * alpha * lk + rho * np.eye(n * m)
    b = (rho * np.asarray(p) - np.asarray(q)).ravel(order="F") + 2.0 * ttt @ y.ravel(order="F")
    try:
        v = scipy.linalg.solve(a, b, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"closed-form X system is singular (rho={rho})") from exc
    return v.reshape((n, m), order="F")


def svt(m, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the proximal map of ``tau ||.||_*``."""
    m = np.asarray(m, dtype=float)
    if tau < 0:
        raise ValidationError(f"threshold must be nonnegative, got {tau}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("svt input contains non-finite values")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"SVD failed for a {m.shape} matrix") from exc
    # singular values are only accurate to about eps * s_max, so a threshold
    # that ties the largest one (computed by a different routine) must still
    # annihilate it
    s = np.maximum(s - tau, 0.0)
    keep = s > 4 * np.finfo(float).eps * (s[0] + tau if s.size else 0.0)
    return (u[:, keep] * s[keep]) @ vt[keep]


@dataclass
class LowRankState:
    x: np.ndarray
    p: np.ndarray
    q: np.ndarray
    rho: float | None = None


def estimate_lowrank(y, l, r, cfg: SolverConfig, warm: LowRankState | None = None):
    """ADMM for ``min_X ||D(X - Y)||^2 + alpha tr(D(X)^T L D(X)) + gamma ||X||_*``.

    Splits ``X = P``; the X step is :func:`cg_x_update`, the P step
    :func:`svt`. Returns the low-rank iterate ``P``, the warm-start state and
    per-iteration residuals.
    """
    y = np.asarray(y, dtype=float)
    r = as_transition(r, y.shape[0])
    l = np.asarray(l, dtype=float)
    rho = cfg.rho
    if warm is not None:
        x, p, q = warm.x.copy(), warm.p.copy(), warm.q.copy()
        rho = warm.rho or rho
    else:
        x, p, q = y.copy(), y.copy(), np.zeros_like(y)
    residuals = []
    for k in range(cfg.k_admm):
        try:
            x = cg_x_update(y, l, r, p, q, rho, cfg.alpha, cfg.delta_cg, cfg.k_cg, x0=x)
        except SolverError as exc:
            raise SolverError(f"X update failed at low-rank ADMM iteration {k}: {exc}") from exc
        _check_finite("X", x, k)
        p_new = svt(x + q / rho, cfg.gamma / rho)
        q = q + rho * (x - p_new)
        primal = np.linalg.norm(x - p_new)
        dual = rho * np.linalg.norm(p_new - p)
        residuals.append(float(max(primal, dual)))
        p = p_new
        if residuals[-1] < cfg.tol_admm:
            break
        if cfg.adaptive_rho and k < RHO_ADAPT_ITERS:
            rho = _balance_rho(rho, primal, dual)
    return p, LowRankState(x, p, q, rho), residuals


def gl_lrss(y, r=None, cfg: SolverConfig | None = None, callback=None) -> SolverResult:
    """Learn a Laplacian and a low-rank signal estimate from observations ``y``.

    Alternates :func:`refine_graph` and :func:`estimate_lowrank` starting from
    ``X = Y`` until the objective changes by less than ``cfg.eps_outer`` or
    ``cfg.k_outer`` outer iterations have run.

    Parameters
    ----------
    y : ndarray, shape (N, M)
        Observations, one column per time instant.
    r : TransitionMatrix, array or None
        Known transition (``None`` means identity).
    cfg : SolverConfig
    callback : callable, optional
        Called as ``callback(k, l, x, q1)`` after each outer iteration.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] < 2:
        raise ValidationError(f"need an N x M observation matrix with M >= 2, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("observations contain non-finite values")
    r = as_transition(r, y.shape[0])

    x = y.copy()
    gstate = xstate = None
    trace = []
    inner = []
    l = None
    converged = False
    k = 0
    for k in range(1, cfg.k_outer + 1):
        try:
            l, g_new, g_res = refine_graph(x, y, r, cfg, gstate)
            x, x_new, x_res = estimate_lowrank(y, l, r, cfg, xstate)
        except SolverError as exc:
            raise SolverError(f"outer iteration {k}: {exc}") from exc
        if cfg.warm_start:
            gstate, xstate = g_new, x_new
        q1 = objective_q1(l, x, y, r, cfg.alpha, cfg.beta, cfg.gamma)
        trace.append(q1)
        inner.append({"graph": g_res, "lowrank": x_res})
        log.debug("outer %d: Q1=%.10g graph_iters=%d lowrank_iters=%d", k, q1, len(g_res), len(x_res))
        if callback is not None:
            callback(k, l, x, q1)
        if len(trace) > 1 and abs(trace[-2] - trace[-1]) < cfg.eps_outer:
            converged = True
            break
    return SolverResult(l, x, trace, inner, k, converged)
