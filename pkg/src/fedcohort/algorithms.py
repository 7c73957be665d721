"""Server-side methods: cohort sampling around a proximal point update.

Every round the server forms x_hat from the current model and the running sum
of client duals, hands each sampled client a regularized local subproblem
centered at x_hat shifted by the client's own dual, and folds the returned
dual updates back in. The schedules below pick the server stepsize gamma, the
proximal strength tau, and the local step count so that a known Lyapunov
function contracts at a known rate per round, in expectation over cohorts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .local_solvers import SolverSpec, exact_prox, required_K_gd, solve_local
from .objective import LocalSubproblem, Problem
from .sampling import SeededRng, sample_cohort

VARIANTS = ("5gcs", "5gcs0", "5gcsinf")


@dataclass
class Schedule:
    """Parameter schedule for one of the certified regimes.

    tau is None only for the no-local-work schedule (thm3). local_steps is
    None when the subproblem must be solved exactly (thm1). rho is the
    certified per-round contraction of the matching Lyapunov function.
    """

    name: str
    C: int
    gamma: float
    tau: float | None
    local_steps: int | None
    rho: float
    alpha: float | None = None

    def as_dict(self) -> dict:
        return {"name": self.name, "C": self.C, "gamma": self.gamma, "tau": self.tau,
                "local_steps": self.local_steps, "rho": self.rho, "alpha": self.alpha}


def _check_cohort_size(problem: Problem, C: int) -> None:
    if not 1 <= C <= problem.M:
        raise ValueError(f"cohort size must be between 1 and {problem.M}, got {C}")


def _rho_standard(problem: Problem, C: int, gamma: float, tau: float) -> float:
    """min(gamma mu/(1+gamma mu), (C/M) tau/(L_F + tau))."""
    return min(gamma * problem.mu / (1.0 + gamma * problem.mu),
               (C / problem.M) * tau / (problem.L_F + tau))


def schedule_thm1(problem: Problem, C: int) -> Schedule:
    """Exact local solves: gamma = sqrt(2C/(L_F mu M^2)), tau = sqrt(L_F mu/(2C)).

    gamma * tau = 1/M. Requires L_F > 0; with zero reformulated smoothness the
    stepsize is unbounded, use the thm3 schedule instead.
    """
    _check_cohort_size(problem, C)
    L_F, mu, M = problem.L_F, problem.mu, problem.M
    if L_F == 0.0:
        raise ValueError("reformulated smoothness is zero; thm1 is degenerate, use thm3")
    gamma = math.sqrt(2.0 * C / (L_F * mu * M**2))
    tau = math.sqrt(L_F * mu / (2.0 * C))
    rho = min(gamma * mu / (1.0 + gamma * mu),
              (C / M) * 2.0 * tau / (L_F + 2.0 * tau))
    return Schedule(name="thm1", C=C, gamma=gamma, tau=tau, local_steps=None, rho=rho)


def schedule_thm2(problem: Problem, C: int) -> Schedule:
    """Finite local work: gamma = (3/16) sqrt(C/(L mu M)), tau = 1/(2 gamma M),
    and the worst-case gradient-descent step count that certifies the rate."""
    _check_cohort_size(problem, C)
    gamma = (3.0 / 16.0) * math.sqrt(C / (problem.L * problem.mu * problem.M))
    tau = 1.0 / (2.0 * gamma * problem.M)
    K = required_K_gd(problem, C)
    rho = _rho_standard(problem, C, gamma, tau)
    return Schedule(name="thm2", C=C, gamma=gamma, tau=tau, local_steps=K, rho=rho)


def schedule_thm3(problem: Problem, C: int) -> Schedule:
    """No local work: gamma = C/(4LM), duals refreshed at x_hat itself."""
    _check_cohort_size(problem, C)
    M = problem.M
    gamma = C / (4.0 * problem.L * M)
    rho = min(gamma * problem.mu / (1.0 + gamma * problem.mu),
              C / (M + 2.0 * gamma * problem.L_F * M**2))
    return Schedule(name="thm3", C=C, gamma=gamma, tau=None, local_steps=0, rho=rho)


def schedule_thm5(problem: Problem, C: int) -> Schedule:
    """Logarithmic local work: gamma = 3/(16L), tau = 8L/(3M),
    K = ceil((2 + 3 M L_F/(4L)) log(4 L/mu))."""
    _check_cohort_size(problem, C)
    L, M = problem.L, problem.M
    gamma = 3.0 / (16.0 * L)
    tau = 8.0 * L / (3.0 * M)
    K = math.ceil((2.0 + 3.0 * M * problem.L_F / (4.0 * L)) * math.log(4.0 * L / problem.mu))
    rho = _rho_standard(problem, C, gamma, tau)
    return Schedule(name="thm5", C=C, gamma=gamma, tau=tau, local_steps=K, rho=rho)


def _alpha_limit(problem: Problem, C: int) -> float:
    return 1.0 + (3.0 / 8.0) * math.sqrt((C / problem.M) * problem.L / problem.mu)


def _schedule_from_alpha(problem: Problem, C: int, alpha: float, K: int) -> Schedule:
    L, mu, M = problem.L, problem.mu, problem.M
    tau = max(L / (M * (alpha - 1.0)), (8.0 / 3.0) * math.sqrt(L * mu / (M * C)))
    gamma = 1.0 / (2.0 * M * tau)
    rho = _rho_standard(problem, C, gamma, tau)
    return Schedule(name="thm6", C=C, gamma=gamma, tau=tau, local_steps=K, rho=rho,
                    alpha=alpha)


def schedule_thm6(problem: Problem, C: int, alpha: float) -> Schedule:
    """Local work K = ceil(2 alpha log(4 L/mu)) for a chosen tradeoff exponent.

    alpha must lie strictly between 1 and 1 + (3/8) sqrt((C/M) L/mu): below,
    the subproblems get no easier with more steps; above, tau saturates and
    extra steps buy nothing.
    """
    _check_cohort_size(problem, C)
    limit = _alpha_limit(problem, C)
    if not 1.0 < alpha < limit:
        raise ValueError(f"alpha must satisfy 1 < alpha < {limit:.6g}, got {alpha}")
    K = math.ceil(2.0 * alpha * math.log(4.0 * problem.L / problem.mu))
    return _schedule_from_alpha(problem, C, alpha, K)


def schedule_for_local_steps(problem: Problem, C: int, K: int) -> Schedule:
    """Certified schedule for a given gradient-descent step budget K.

    Inverts K = 2 alpha log(4 L/mu). Any alpha > 1 yields a valid schedule:
    past the thm6 upper limit tau just saturates at its floor, so T plateaus
    instead of improving. Used by the steps-vs-rounds sweep.
    """
    _check_cohort_size(problem, C)
    log_term = math.log(4.0 * problem.L / problem.mu)
    alpha = K / (2.0 * log_term)
    if alpha <= 1.0:
        raise ValueError(f"need more than {2.0 * log_term:.6g} local steps for a certified schedule")
    return _schedule_from_alpha(problem, C, alpha, K)


SCHEDULE_BUILDERS = {
    "thm1": schedule_thm1,
    "thm2": schedule_thm2,
    "thm3": schedule_thm3,
    "thm5": schedule_thm5,
    "thm6": schedule_thm6,
}


def build_schedule(problem: Problem, C: int, name: str, alpha: float | None = None) -> Schedule:
    if name == "thm6":
        if alpha is None:
            raise ValueError("the thm6 schedule needs an alpha value (use thm6:<alpha>)")
        return schedule_thm6(problem, C, alpha)
    if name not in SCHEDULE_BUILDERS:
        raise ValueError(f"unknown schedule {name!r}")
    return SCHEDULE_BUILDERS[name](problem, C)


def rounds_bound(problem: Problem, schedule: Schedule, eps: float) -> float:
    """Sufficient number of rounds for E[Psi] <= eps * Psi0 under the schedule.

    Uses the closed-form bound proved for each schedule. A steps-sweep
    schedule whose alpha exceeds the thm6 limit falls back to the generic
    log(1/eps)/rho bound, which its contraction certifies directly.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must be in (0, 1]")
    if eps == 1.0:
        return 0.0
    log_eps = math.log(1.0 / eps)
    M, C = problem.M, schedule.C
    ratio = M / C
    kappa = problem.L / problem.mu
    if schedule.name == "thm1":
        return (ratio + math.sqrt(ratio * (problem.L - problem.mu) / (2.0 * problem.mu))) * log_eps
    if schedule.name == "thm2":
        return max(1.0 + (16.0 / 3.0) * math.sqrt(ratio * kappa),
                   ratio + (3.0 / 8.0) * math.sqrt(ratio * kappa)) * log_eps
    if schedule.name == "thm3":
        return max(1.0 + 4.0 * ratio * kappa,
                   ratio + problem.L_F * M / problem.L) * log_eps
    if schedule.name == "thm5":
        return max(1.0 + 16.0 * kappa / 3.0,
                   ratio + (3.0 * M / (8.0 * C)) * (M * problem.L_F / problem.L)) * log_eps
    if schedule.name == "thm6":
        if schedule.alpha < _alpha_limit(problem, schedule.C):
            return max(1.0 + 2.0 * kappa / (schedule.alpha - 1.0),
                       ratio * schedule.alpha) * log_eps
        return log_eps / schedule.rho
    raise ValueError(f"no rounds bound for schedule {schedule.name!r}")


# ---------------------------------------------------------------------------
# server state and the round update


@dataclass
class ServerState:
    """x is the server model; duals holds one vector per client (row m is
    client m's last uploaded gradient of its reformulated loss); dual_sum
    caches the row sum. uploads counts client-to-server vector transmissions."""

    x: np.ndarray
    duals: np.ndarray
    dual_sum: np.ndarray
    t: int = 0
    uploads: int = 0

    def copy(self) -> "ServerState":
        return ServerState(x=self.x.copy(), duals=self.duals.copy(),
                           dual_sum=self.dual_sum.copy(), t=self.t, uploads=self.uploads)


def init_state(problem: Problem, init_duals: str = "grad") -> ServerState:
    """x0 = 0 and duals warm-started at each client's reformulated gradient
    there (init_duals="zero" starts the duals cold instead)."""
    x = np.zeros(problem.d)
    duals = np.zeros((problem.M, problem.d))
    if init_duals == "grad":
        for m in range(problem.M):
            duals[m] = problem.grad_F_m(m, x)
    elif init_duals != "zero":
        raise ValueError("init_duals must be 'grad' or 'zero'")
    dual_sum = np.zeros(problem.d)
    for m in range(problem.M):
        dual_sum += duals[m]
    return ServerState(x=x, duals=duals, dual_sum=dual_sum)


def advance_with_cohort(problem: Problem, state: ServerState, schedule: Schedule,
                        cohort: np.ndarray, variant: str = "5gcs",
                        solver: SolverSpec | None = None,
                        rng: SeededRng | None = None) -> ServerState:
    """One round against a fixed cohort; deterministic unless the solver draws.

    x_hat = (x - gamma * dual_sum)/(1 + gamma * mu); each cohort member m
    refreshes its dual, in ascending client order:
      5gcs:    y_m from the configured solver on the subproblem centered at
               x_hat + u_m/tau, started at x_hat; new dual = grad F_m(y_m).
               With 0 local steps this collapses to the 5gcs0 update.
      5gcsinf: y_m = exact subproblem minimizer; new dual =
               u_m + tau * x_hat - tau * y_m (same point by first-order
               optimality, kept in this literal form).
      5gcs0:   new dual = grad F_m(x_hat).
    Then x <- x_hat - gamma (M/C) * (sum of dual changes), and the change is
    added to dual_sum. Each member uploads two vectors.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if solver is None:
        solver = SolverSpec()
    gamma = schedule.gamma
    C = schedule.C
    if len(cohort) != C:
        raise ValueError(f"cohort has {len(cohort)} members, schedule expects {C}")
    x_hat = (state.x - gamma * state.dual_sum) / (1.0 + gamma * problem.mu)

    steps = solver.steps if solver.steps is not None else schedule.local_steps
    zero_steps = variant == "5gcs0" or (variant == "5gcs" and steps == 0)
    if not zero_steps and schedule.tau is None:
        raise ValueError("this schedule has no tau; it only supports zero local steps")

    new_duals = state.duals.copy()
    delta = np.zeros(problem.d)
    for m in cohort:
        m = int(m)
        if zero_steps:
            u_new = problem.grad_F_m(m, x_hat)
        else:
            tau = schedule.tau
            sub = LocalSubproblem(problem, m, tau, x_hat + state.duals[m] / tau)
            if variant == "5gcsinf":
                y = exact_prox(sub, y0=x_hat, tol=solver.tol)
                u_new = state.duals[m] + tau * x_hat - tau * y
            elif steps is None or solver.name == "prox":
                y = exact_prox(sub, y0=x_hat, tol=solver.tol)
                u_new = problem.grad_F_m(m, y)
            else:
                stream = None
                if solver.name == "lsvrg":
                    if rng is None:
                        raise ValueError("lsvrg needs the experiment rng for its client streams")
                    stream = rng.client_stream(state.t, m)
                y = solve_local(sub, x_hat, solver, steps, stream=stream)
                u_new = problem.grad_F_m(m, y)
        delta += u_new - state.duals[m]
        new_duals[m] = u_new

    x_new = x_hat - gamma * (problem.M / C) * delta
    return ServerState(x=x_new, duals=new_duals, dual_sum=state.dual_sum + delta,
                       t=state.t + 1, uploads=state.uploads + 2 * len(cohort))


def run_round(problem: Problem, state: ServerState, schedule: Schedule, rng: SeededRng,
              variant: str = "5gcs", solver: SolverSpec | None = None) -> ServerState:
    """Sample a cohort from round t's stream and advance."""
    stream = rng.round_stream(state.t)
    cohort = sample_cohort(stream, problem.M, schedule.C)
    return advance_with_cohort(problem, state, schedule, cohort, variant=variant,
                               solver=solver, rng=rng)


def round_5gcs(problem: Problem, state: ServerState, schedule: Schedule, rng: SeededRng,
               solver: SolverSpec | None = None) -> ServerState:
    """One round where cohort duals are refreshed through the local solver."""
    return run_round(problem, state, schedule, rng, variant="5gcs", solver=solver)


def round_point_saga(problem: Problem, state: ServerState, schedule: Schedule,
                     rng: SeededRng) -> ServerState:
    """One round with exact subproblem solves and the literal dual recursion
    u_m + tau * x_hat - tau * y_m."""
    return run_round(problem, state, schedule, rng, variant="5gcsinf")


def round_zero(problem: Problem, state: ServerState, schedule: Schedule,
               rng: SeededRng) -> ServerState:
    """One round with no local work: duals jump straight to grad F_m(x_hat)."""
    return run_round(problem, state, schedule, rng, variant="5gcs0")


def contraction_rate(schedule: Schedule) -> float:
    """Certified per-round decrease factor rho of the schedule's Lyapunov
    function: E[Psi^{t+1}] <= (1 - rho) Psi^t."""
    return schedule.rho


# ---------------------------------------------------------------------------
# Lyapunov function


def lyapunov_weights(problem: Problem, schedule: Schedule) -> tuple[float, float]:
    """(weight on ||x - x*||^2, weight on sum_m ||u_m - u*_m||^2)."""
    gamma, C, M = schedule.gamma, schedule.C, problem.M
    if schedule.name == "thm3":
        wx = (C / (M**2 * gamma**2)) * (1.0 - math.sqrt(gamma * M * problem.L_F / 2.0))
        return wx, 1.0
    inv_LF = math.inf if problem.L_F == 0.0 else 1.0 / problem.L_F
    if schedule.name == "thm1":
        return 1.0 / gamma, (M / C) * (1.0 / schedule.tau + 2.0 * inv_LF)
    return 1.0 / gamma, (M / C) * (1.0 / schedule.tau + inv_LF)


def lyapunov(problem: Problem, schedule: Schedule, state: ServerState,
             x_star: np.ndarray, duals_star: np.ndarray) -> float:
    wx, wu = lyapunov_weights(problem, schedule)
    dx = state.x - x_star
    dist_x = float(dx @ dx)
    du = state.duals - duals_star
    dist_u = float(np.sum(du * du))
    # an infinite dual weight only arises when L_F = 0, where duals are exact
    u_term = 0.0 if dist_u == 0.0 else wu * dist_u
    return wx * dist_x + u_term
