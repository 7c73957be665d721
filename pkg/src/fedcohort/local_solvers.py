"""Inexact and exact solvers for the per-client proximal subproblems.

Each cohort member minimizes psi(y) = F_m(y) + (tau/2)||y - center||^2. The
server theory only needs the output to satisfy a gradient-accuracy condition;
the solvers here are plain gradient descent, loopless SVRG over the client's
data points, and an essentially exact proximal oracle (damped Newton).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .objective import LocalSubproblem, Problem
from .sampling import bernoulli, sample_cohort

_NEWTON_DIM_CAP = 2000


@dataclass
class SolverSpec:
    """Which local solver runs on cohort members, and with what knobs.

    steps = None defers to the step count prescribed by the schedule. batch
    only matters for lsvrg. conservative makes gradient descent use the global
    smoothness constant instead of the client's own. tol overrides the exact
    solver's gradient tolerance.
    """

    name: str = "gd"
    steps: int | None = None
    batch: int = 1
    conservative: bool = False
    tol: float | None = None

    def __post_init__(self) -> None:
        if self.name not in ("gd", "lsvrg", "prox"):
            raise ValueError(f"unknown local solver {self.name!r}")
        if self.steps is not None and self.steps < 0:
            raise ValueError("local step count cannot be negative")
        if self.batch < 1:
            raise ValueError("minibatch size must be at least 1")


def gd_solve(sub: LocalSubproblem, y0: np.ndarray, steps: int,
             stepsize: float | None = None) -> np.ndarray:
    """steps iterations of y <- y - s * grad psi(y), s = 1/(smoothness of psi).

    Exits early when the iterate sequence stops producing new points: either a
    bitwise fixed point, or the two-point rounding cycle the map settles into
    at machine precision (the pair straddles the minimizer one ulp apart).
    """
    if stepsize is None:
        stepsize = 1.0 / sub.smoothness
    y = np.array(y0, dtype=np.float64, copy=True)
    y_prev = None
    for _ in range(steps):
        y_new = y - stepsize * sub.grad_psi(y)
        if np.array_equal(y_new, y):
            break
        if y_prev is not None and np.array_equal(y_new, y_prev):
            y = y_new
            break
        y_prev = y
        y = y_new
    return y


def exact_prox(sub: LocalSubproblem, y0: np.ndarray | None = None,
               tol: float | None = None, max_iters: int = 10_000) -> np.ndarray:
    """Minimizer of psi to gradient norm <= tol (an exact proximal oracle).

    Damped Newton with Cholesky solves and Armijo backtracking; psi is
    tau-strongly convex so the direction is always well defined. Dimensions
    past the Newton cap fall back to plain gradient descent.
    """
    center = sub.center
    if y0 is None:
        y0 = center
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.linalg.norm(center)))
    y = np.array(y0, dtype=np.float64, copy=True)

    if sub.problem.d > _NEWTON_DIM_CAP:
        stepsize = 1.0 / sub.smoothness
        for _ in range(1_000_000):
            g = sub.grad_psi(y)
            if np.linalg.norm(g) <= tol:
                return y
            y = y - stepsize * g
        raise RuntimeError("gradient-descent prox fallback did not reach tolerance")

    for _ in range(max_iters):
        g = sub.grad_psi(y)
        if np.linalg.norm(g) <= tol:
            return y
        H = sub.hess_psi(y)
        direction = cho_solve(cho_factor(H), g)
        descent = float(g @ direction)
        val = sub.psi_value(y)
        # near the minimizer the prescribed Armijo decrease drops below what
        # psi values can resolve; value-based backtracking is blind there, and
        # the full Newton step is locally contractive on this tau-strongly
        # convex subproblem, so take it outright
        if 1e-4 * descent <= np.finfo(np.float64).eps * max(abs(val), 1.0):
            y = y - direction
            continue
        t = 1.0
        while t > 1e-16:
            cand = y - t * direction
            if sub.psi_value(cand) <= val - 1e-4 * t * descent:
                break
            t *= 0.5
        else:
            raise RuntimeError("backtracking failed; subproblem looks non-convex")
        y = cand
    raise RuntimeError(f"prox solver did not reach tolerance in {max_iters} iterations")


def lsvrg_solve(sub: LocalSubproblem, y0: np.ndarray, steps: int, batch: int,
                stream: np.random.Generator) -> np.ndarray:
    """Loopless SVRG over the client's data points.

    psi is the average of n components g_i (one per point, each carrying its
    share of the ridge and proximal terms). Every step draws a size-batch
    subset without replacement, forms the variance-reduced estimator against a
    full gradient stored at an anchor, then flips a coin to reset the anchor to
    the pre-step iterate. The stepsize 1/(6 A) uses the expected-smoothness
    constant A of subset sampling; the reset probability is 2 * tau / (6 A).
    """
    comps = sub.problem.finite_sum_shard(sub.m)
    if comps is None:
        raise ValueError("lsvrg needs a finite-sum objective (per-point data)")
    n = comps.n
    if batch > n:
        raise ValueError(f"minibatch size {batch} exceeds the client's {n} points")
    smooth_psi = sub.smoothness
    if batch == n:
        # the subset is always the full dataset: the estimator is the exact
        # gradient, so this is gradient descent at the lsvrg stepsize
        expected_smooth = smooth_psi
    else:
        comp_smooth = (comps.component_smoothness - sub.problem.mu) / sub.problem.M + sub.tau
        w_single = (n - batch) / (batch * (n - 1))
        w_full = n * (batch - 1) / (batch * (n - 1))
        expected_smooth = w_single * float(np.max(comp_smooth)) + w_full * smooth_psi
    stepsize = 1.0 / (6.0 * expected_smooth)
    reset_prob = 2.0 * sub.tau * stepsize

    y = np.array(y0, dtype=np.float64, copy=True)
    if batch == n:
        for _ in range(steps):
            y = y - stepsize * sub.grad_psi(y)
        return y

    anchor = y.copy()
    anchor_grad = comps.grad_components(np.arange(n), anchor, sub)
    for _ in range(steps):
        idx = sample_cohort(stream, n, batch)
        estimate = (comps.grad_components(idx, y, sub)
                    - comps.grad_components(idx, anchor, sub) + anchor_grad)
        y_new = y - stepsize * estimate
        if bernoulli(stream, reset_prob):
            anchor = y.copy()
            anchor_grad = comps.grad_components(np.arange(n), anchor, sub)
        y = y_new
    return y


def solve_local(sub: LocalSubproblem, y0: np.ndarray, spec: SolverSpec, steps: int,
                stream: np.random.Generator | None = None) -> np.ndarray:
    """Dispatch one cohort member's subproblem to the configured solver."""
    if spec.name == "prox":
        return exact_prox(sub, y0, tol=spec.tol)
    if spec.name == "gd":
        if spec.conservative:
            return gd_solve(sub, y0, steps, stepsize=1.0 / (sub.problem.L_F + sub.tau))
        return gd_solve(sub, y0, steps)
    if stream is None:
        raise ValueError("lsvrg needs a per-client random stream")
    return lsvrg_solve(sub, y0, steps, spec.batch, stream)


def required_K_gd(problem: Problem, C: int, m: int | None = None) -> int:
    """Gradient-descent step count that certifies the server contraction.

    The worst-case count (m = None) covers every client; the personalized
    count uses client m's own smoothness and can be much smaller on
    well-conditioned clients.
    """
    kappa = problem.L / problem.mu
    log_term = math.log(4.0 * kappa)
    if m is None:
        inner = 0.75 * math.sqrt(C * problem.L / (problem.M * problem.mu)) + 2.0
        return math.ceil(inner * log_term)
    L_m = float(problem.L_m[m])
    inner = 2.0 * ((3.0 / 8.0) * math.sqrt(C * L_m * L_m / (problem.L * problem.mu * problem.M)) + 1.0)
    return math.ceil(inner * log_term)


def delta_tolerance(mu: float, M: int, tau: float, L_F: float) -> float:
    """Relative accuracy delta sufficient for the local solves.

    A local output y with ||y - y*||^2 <= delta * ||center - y*||^2 keeps the
    server contraction intact:

      delta = (mu/(6M)) / (4 mu L_F^2/(3 M tau^2) + a (L_F + tau)^2 / tau)

    with the free parameter fixed at a = L_F/tau. At a schedule-valid tau this
    satisfies 1/delta <= (4 L/mu)^2. Zero reformulated smoothness means any
    output works, hence +inf.
    """
    if L_F == 0.0:
        return math.inf
    a = L_F / tau
    denom = (4.0 * mu * L_F**2 / (3.0 * M * tau**2)
             + a * (L_F + tau) ** 2 / tau)
    return (mu / (6.0 * M)) / denom


@dataclass
class GtpsReport:
    """Outcome of the gradient-accuracy check across all clients."""

    lhs: float
    rhs: float
    satisfied: bool


def check_gtps(problem: Problem, tau: float, x_hat: np.ndarray, duals: np.ndarray,
               ys: np.ndarray) -> GtpsReport:
    """Verify the aggregate gradient-accuracy condition at a server point.

    ys holds one local output per client (all M of them, each solved on the
    subproblem centered at x_hat + duals[m]/tau and started from x_hat). The
    condition compares weighted distances to the exact proximal points and
    local gradient norms against the contraction budget:

      sum_m (4/tau^2)(mu L_F^2/(3M)) ||y_m - y*_m||^2
        + sum_m (L_F/tau^2) ||grad psi_m(y_m)||^2
        <= sum_m (mu/(6M)) ||x_hat - y*_m||^2
    """
    mu, M, L_F = problem.mu, problem.M, problem.L_F
    lhs = 0.0
    rhs = 0.0
    for m in range(M):
        sub = LocalSubproblem(problem, m, tau, x_hat + duals[m] / tau)
        y_star = exact_prox(sub, y0=x_hat)
        dy = ys[m] - y_star
        g = sub.grad_psi(ys[m])
        lhs += ((4.0 / tau**2) * (mu * L_F**2 / (3.0 * M)) * float(dy @ dy)
                + (L_F / tau**2) * float(g @ g))
        dx = x_hat - y_star
        rhs += (mu / (6.0 * M)) * float(dx @ dx)
    return GtpsReport(lhs=lhs, rhs=rhs, satisfied=bool(lhs <= rhs))
