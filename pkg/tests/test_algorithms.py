import math

import numpy as np
import pytest

from fedcohort import (
    LocalSubproblem,
    SeededRng,
    Schedule,
    advance_with_cohort,
    build_schedule,
    contraction_rate,
    exact_prox,
    init_state,
    lyapunov,
    lyapunov_weights,
    make_quadratic,
    rounds_bound,
    round_5gcs,
    round_point_saga,
    round_zero,
    run_round,
    schedule_for_local_steps,
    schedule_thm1,
    schedule_thm2,
    schedule_thm3,
    schedule_thm5,
    schedule_thm6,
)
from fedcohort.algorithms import advance_with_cohort as _advance
from fedcohort.local_solvers import SolverSpec
from fedcohort.sampling import enumerate_cohorts
from helpers import diag_quadratic


@pytest.fixture(scope="module")
def lf2_problem():
    # L = 9, mu = 1, M = 4  =>  L_F = (9 - 1)/4 = 2 exactly
    return diag_quadratic([[1.0, 9.0], [5.0, 5.0], [3.0, 7.0], [2.0, 8.0]], mu=1.0, seed=3)


@pytest.fixture(scope="module")
def l4_problem():
    # L = 4, mu = 1, M = 4  =>  L_F = 0.75
    return diag_quadratic([[1.0, 4.0], [2.0, 3.0], [1.5, 3.5], [2.5, 3.0]], mu=1.0, seed=4)


# --- schedules ----------------------------------------------------------------


def test_schedule_thm1_frozen_values(lf2_problem):
    sch = schedule_thm1(lf2_problem, C=2)
    assert sch.gamma == pytest.approx(0.3535533905932738, rel=1e-12)
    assert sch.tau == pytest.approx(0.7071067811865476, rel=1e-12)
    assert sch.gamma * sch.tau == pytest.approx(1.0 / lf2_problem.M, rel=1e-12)
    assert sch.rho == pytest.approx(0.20710678118654754, rel=1e-12)
    assert sch.local_steps is None
    assert sch.name == "thm1"


def test_schedule_thm1_rejects_zero_smoothness():
    flat = diag_quadratic([[1.0, 1.0], [1.0, 1.0]], mu=1.0, seed=0)
    assert flat.L_F == 0.0
    with pytest.raises(ValueError, match="thm3"):
        schedule_thm1(flat, C=1)


def test_schedule_thm2_frozen_values(l4_problem):
    sch = schedule_thm2(l4_problem, C=2)
    assert sch.gamma == pytest.approx(0.06629126073623884, rel=1e-12)
    assert sch.tau == pytest.approx(1.8856180831641265, rel=1e-12)
    # at thm2 parameters tau sits exactly on the floor (8/3) sqrt(L mu/(M C))
    floor = (8.0 / 3.0) * math.sqrt(l4_problem.L * l4_problem.mu / (4 * 2))
    assert sch.tau == pytest.approx(floor, rel=1e-12)
    assert sch.rho == pytest.approx(0.06216993721815455, rel=1e-12)
    assert sch.local_steps == 9


def test_schedule_thm3_frozen_values(l4_problem):
    sch = schedule_thm3(l4_problem, C=4)
    assert sch.gamma == pytest.approx(1.0 / 16.0, rel=1e-12)
    assert sch.rho == pytest.approx(1.0 / 17.0, rel=1e-12)
    assert sch.tau is None
    assert sch.local_steps == 0


def test_schedule_thm5_frozen_values(l4_problem):
    sch = schedule_thm5(l4_problem, C=2)
    assert sch.gamma == pytest.approx(3.0 / 64.0, rel=1e-12)
    assert sch.tau == pytest.approx(8.0 / 3.0, rel=1e-12)
    assert sch.local_steps == 8


def test_schedule_thm6_interval(l4_problem):
    limit = 1.0 + (3.0 / 8.0) * math.sqrt((2 / 4) * 4.0)
    with pytest.raises(ValueError, match="alpha"):
        schedule_thm6(l4_problem, C=2, alpha=1.0)
    with pytest.raises(ValueError, match="alpha"):
        schedule_thm6(l4_problem, C=2, alpha=limit)
    alpha = 0.5 * (1.0 + limit)
    sch = schedule_thm6(l4_problem, C=2, alpha=alpha)
    assert sch.alpha == alpha
    assert sch.local_steps == math.ceil(2.0 * alpha * math.log(16.0))
    assert 2.0 * sch.gamma * sch.tau * l4_problem.M == pytest.approx(1.0, rel=1e-12)
    assert sch.tau >= (8.0 / 3.0) * math.sqrt(4.0 / 8.0) - 1e-12


def test_schedule_for_local_steps_matches_thm6():
    problem = make_quadratic(d=6, M=4, kappa=100.0, seed=5)
    log_term = math.log(4.0 * problem.kappa)
    K = 20
    alpha = K / (2.0 * log_term)
    assert alpha > 1.0
    from_steps = schedule_for_local_steps(problem, 2, K)
    direct = schedule_thm6(problem, 2, alpha)
    assert from_steps.gamma == direct.gamma
    assert from_steps.tau == direct.tau
    assert from_steps.rho == direct.rho
    assert from_steps.local_steps == K


def test_schedule_for_local_steps_floor():
    problem = make_quadratic(d=6, M=4, kappa=100.0, seed=5)
    need = 2.0 * math.log(4.0 * problem.kappa)
    with pytest.raises(ValueError, match="local steps"):
        schedule_for_local_steps(problem, 2, math.floor(need))


def test_schedule_plateau_past_alpha_limit():
    problem = make_quadratic(d=6, M=5, kappa=1000.0, seed=1)
    C = 1
    limit = 1.0 + (3.0 / 8.0) * math.sqrt((C / 5) * 1000.0)
    k_star = math.ceil(2.0 * limit * math.log(4000.0))
    a = schedule_for_local_steps(problem, C, 2 * k_star)
    b = schedule_for_local_steps(problem, C, 10 * k_star)
    # tau saturates at its floor: more steps change nothing but the step count
    assert a.gamma == b.gamma
    assert a.tau == b.tau
    assert a.rho == b.rho
    assert a.local_steps == 2 * k_star and b.local_steps == 10 * k_star
    floor = (8.0 / 3.0) * math.sqrt(problem.L * problem.mu / (5 * C))
    assert a.tau == pytest.approx(floor, rel=1e-12)


def test_build_schedule_dispatch(l4_problem):
    assert build_schedule(l4_problem, 2, "thm2").name == "thm2"
    assert build_schedule(l4_problem, 2, "thm6", alpha=1.2).alpha == 1.2
    with pytest.raises(ValueError, match="alpha"):
        build_schedule(l4_problem, 2, "thm6")
    with pytest.raises(ValueError, match="unknown schedule"):
        build_schedule(l4_problem, 2, "thm4")
    with pytest.raises(ValueError, match="cohort size"):
        build_schedule(l4_problem, 9, "thm2")


def test_schedule_as_dict(l4_problem):
    d = schedule_thm2(l4_problem, C=2).as_dict()
    assert set(d) == {"name", "C", "gamma", "tau", "local_steps", "rho", "alpha"}


# --- round bounds ----------------------------------------------------------------


def test_rounds_bound_thm1_frozen(lf2_problem):
    sch = schedule_thm1(lf2_problem, C=2)
    bound = rounds_bound(lf2_problem, sch, 1e-6)
    assert bound == pytest.approx(66.70718592029206, rel=1e-12)


def test_rounds_bound_validation_and_eps_one(l4_problem):
    sch = schedule_thm2(l4_problem, C=2)
    assert rounds_bound(l4_problem, sch, 1.0) == 0.0
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            rounds_bound(l4_problem, sch, bad)


def test_rounds_bound_closed_forms(l4_problem):
    log_eps = math.log(1e4)
    kappa = 4.0
    sch2 = schedule_thm2(l4_problem, C=2)
    expect2 = max(1 + (16 / 3) * math.sqrt(2 * kappa), 2 + (3 / 8) * math.sqrt(2 * kappa)) * log_eps
    assert rounds_bound(l4_problem, sch2, 1e-4) == pytest.approx(expect2, rel=1e-12)
    sch3 = schedule_thm3(l4_problem, C=4)
    expect3 = max(1 + 4 * kappa, 1 + 0.75 * 4 / 4.0) * log_eps
    assert rounds_bound(l4_problem, sch3, 1e-4) == pytest.approx(expect3, rel=1e-12)
    sch5 = schedule_thm5(l4_problem, C=2)
    expect5 = max(1 + 16 * kappa / 3, 2 + (3 * 4 / (8 * 2)) * (4 * 0.75 / 4.0)) * log_eps
    assert rounds_bound(l4_problem, sch5, 1e-4) == pytest.approx(expect5, rel=1e-12)


def test_rounds_bound_thm6_and_plateau_fallback():
    problem = make_quadratic(d=6, M=5, kappa=1000.0, seed=1)
    sch = schedule_thm6(problem, 1, alpha=2.0)
    expect = max(1 + 2 * 1000.0 / (2.0 - 1.0), 5 * 2.0) * math.log(1e6)
    assert rounds_bound(problem, sch, 1e-6) == pytest.approx(expect, rel=1e-9)
    limit = 1.0 + (3.0 / 8.0) * math.sqrt(0.2 * 1000.0)
    k_big = math.ceil(2 * (limit + 5) * math.log(4000.0))
    plateau = schedule_for_local_steps(problem, 1, k_big)
    assert plateau.alpha > limit
    assert rounds_bound(problem, plateau, 1e-6) == pytest.approx(
        math.log(1e6) / plateau.rho, rel=1e-12)


# --- state and rounds ---------------------------------------------------------------


def test_init_state_duals(quad_problem):
    state = init_state(quad_problem)
    x0 = np.zeros(quad_problem.d)
    for m in range(quad_problem.M):
        assert np.array_equal(state.duals[m], quad_problem.grad_F_m(m, x0))
    assert np.allclose(state.dual_sum, state.duals.sum(axis=0), atol=1e-15)
    cold = init_state(quad_problem, init_duals="zero")
    assert np.all(cold.duals == 0.0)
    assert np.all(cold.dual_sum == 0.0)
    with pytest.raises(ValueError):
        init_state(quad_problem, init_duals="warm")


def test_round_zero_equals_gd_with_zero_steps(quad_problem):
    sch = build_schedule(quad_problem, 2, "thm2")
    rng_a, rng_b = SeededRng(4), SeededRng(4)
    state_a = init_state(quad_problem)
    state_b = init_state(quad_problem)
    for _ in range(3):
        state_a = round_zero(quad_problem, state_a, sch, rng_a)
        state_b = round_5gcs(quad_problem, state_b, sch, rng_b,
                             solver=SolverSpec(name="gd", steps=0))
    assert np.array_equal(state_a.x, state_b.x)
    assert np.array_equal(state_a.duals, state_b.duals)


def test_point_saga_matches_prox_solver(quad_problem):
    sch = build_schedule(quad_problem, 2, "thm1")
    state_a = init_state(quad_problem)
    state_b = init_state(quad_problem)
    rng_a, rng_b = SeededRng(7), SeededRng(7)
    for _ in range(20):
        state_a = round_point_saga(quad_problem, state_a, sch, rng_a)
        state_b = round_5gcs(quad_problem, state_b, sch, rng_b,
                             solver=SolverSpec(name="prox"))
        scale = max(1.0, float(np.linalg.norm(state_b.x)))
        assert np.linalg.norm(state_a.x - state_b.x) <= 1e-9 * scale
        assert np.linalg.norm(state_a.duals - state_b.duals) <= 1e-9 * (
            1.0 + float(np.linalg.norm(state_b.duals)))


def test_point_saga_flat_objective_zeroes_duals():
    # f_m = (mu/2)||x||^2 exactly, so F_m vanishes identically and every
    # refreshed dual must come out ~0 regardless of the incoming duals
    from fedcohort import QuadraticProblem

    flat = QuadraticProblem([np.eye(2), np.eye(2)], [np.zeros(2), np.zeros(2)], mu=1.0)
    sch = Schedule(name="thm2", C=2, gamma=0.1, tau=2.0, local_steps=None, rho=0.01)
    state = init_state(flat, init_duals="zero")
    state.duals = np.array([[0.5, -0.25], [1.5, 2.0]])
    state.dual_sum = state.duals.sum(axis=0)
    nxt = advance_with_cohort(flat, state, sch, np.array([0, 1]), variant="5gcsinf")
    scale = 1.0 + float(np.linalg.norm(state.duals))
    assert np.linalg.norm(nxt.duals) <= 1e-9 * scale


def test_single_client_hand_recurrence():
    # M = C = 1, f(x) = (q/2) x^2 + c x, exact local solve, hand-computed round
    from fedcohort import QuadraticProblem

    q, c, mu = 2.0, -2.0, 1.0
    problem = QuadraticProblem([np.array([[q]])], [np.array([c])], mu=mu)
    gamma, tau = 0.25, 1.5
    sch = Schedule(name="thm1", C=1, gamma=gamma, tau=tau, local_steps=None, rho=0.1)
    state = init_state(problem)  # x = 0, u = grad F(0) = c / M = -2
    u0 = c
    x_hat = (0.0 - gamma * u0) / (1.0 + gamma * mu)
    center = x_hat + u0 / tau
    # psi'(y) = (q - mu) y + c + tau (y - center) = 0
    y = (tau * center - c) / (q - mu + tau)
    u1 = (q - mu) * y + c
    x1 = x_hat - gamma * (u1 - u0)
    nxt = run_round(problem, state, sch, SeededRng(0), variant="5gcs",
                    solver=SolverSpec(name="prox"))
    assert nxt.x[0] == pytest.approx(x1, rel=1e-10)
    assert nxt.duals[0, 0] == pytest.approx(u1, rel=1e-10)


def test_expected_update_full_refresh_identity(quad_problem):
    # averaging x+ over every cohort equals the full-participation dual refresh
    sch = build_schedule(quad_problem, 2, "thm2")
    state = init_state(quad_problem)
    # move off the initial point first
    state = run_round(quad_problem, state, sch, SeededRng(1))
    gamma = sch.gamma
    x_hat = (state.x - gamma * state.dual_sum) / (1.0 + gamma * quad_problem.mu)
    cohorts = enumerate_cohorts(quad_problem.M, 2)
    mean_x = np.zeros(quad_problem.d)
    for cohort in cohorts:
        mean_x += advance_with_cohort(quad_problem, state, sch, cohort).x
    mean_x /= len(cohorts)
    delta_full = np.zeros(quad_problem.d)
    solver = SolverSpec()
    for m in range(quad_problem.M):
        single = advance_with_cohort(
            quad_problem, state,
            Schedule(name=sch.name, C=1, gamma=sch.gamma, tau=sch.tau,
                     local_steps=sch.local_steps, rho=sch.rho),
            np.array([m]), solver=solver)
        # recover this client's dual change
        delta_full += single.duals[m] - state.duals[m]
    expected = x_hat - gamma * delta_full
    assert np.allclose(mean_x, expected, rtol=1e-11, atol=1e-13)


def test_state_invariant_dual_sum(quad_problem):
    sch = build_schedule(quad_problem, 2, "thm2")
    state = init_state(quad_problem)
    rng = SeededRng(2)
    for _ in range(10):
        state = run_round(quad_problem, state, sch, rng)
        resum = state.duals.sum(axis=0)
        assert np.linalg.norm(state.dual_sum - resum) <= 1e-10 * (
            1.0 + float(np.linalg.norm(resum)))


def test_uploads_accounting(quad_problem):
    sch = build_schedule(quad_problem, 3, "thm2")
    state = init_state(quad_problem)
    rng = SeededRng(0)
    for t in range(5):
        state = run_round(quad_problem, state, sch, rng)
        assert state.uploads == 2 * 3 * (t + 1)
        assert state.t == t + 1


def test_advance_validation(quad_problem):
    sch = build_schedule(quad_problem, 2, "thm2")
    state = init_state(quad_problem)
    with pytest.raises(ValueError, match="cohort has"):
        advance_with_cohort(quad_problem, state, sch, np.array([0, 1, 2]))
    with pytest.raises(ValueError, match="variant"):
        advance_with_cohort(quad_problem, state, sch, np.array([0, 1]), variant="6gcs")
    thm3 = build_schedule(quad_problem, 2, "thm3")
    with pytest.raises(ValueError, match="tau"):
        advance_with_cohort(quad_problem, state, thm3, np.array([0, 1]), variant="5gcsinf")
    with pytest.raises(ValueError, match="rng"):
        advance_with_cohort(quad_problem, state, sch, np.array([0, 1]),
                            solver=SolverSpec(name="lsvrg", steps=3))


def test_run_deterministic_per_seed(quad_problem):
    sch = build_schedule(quad_problem, 2, "thm2")
    xs = []
    for _ in range(2):
        state = init_state(quad_problem)
        rng = SeededRng(11)
        for _ in range(5):
            state = run_round(quad_problem, state, sch, rng)
        xs.append(state.x.copy())
    assert np.array_equal(xs[0], xs[1])


def test_contraction_rate_passthrough(l4_problem):
    sch = schedule_thm2(l4_problem, C=2)
    assert contraction_rate(sch) == sch.rho


# --- Lyapunov ------------------------------------------------------------------------


def test_lyapunov_weights_by_schedule(l4_problem):
    g1 = schedule_thm1(l4_problem, C=2)
    wx, wu = lyapunov_weights(l4_problem, g1)
    assert wx == pytest.approx(1.0 / g1.gamma, rel=1e-12)
    assert wu == pytest.approx(2.0 * (1.0 / g1.tau + 2.0 / 0.75), rel=1e-12)
    g2 = schedule_thm2(l4_problem, C=2)
    wx2, wu2 = lyapunov_weights(l4_problem, g2)
    assert wx2 == pytest.approx(1.0 / g2.gamma, rel=1e-12)
    assert wu2 == pytest.approx(2.0 * (1.0 / g2.tau + 1.0 / 0.75), rel=1e-12)
    g3 = schedule_thm3(l4_problem, C=4)
    wx3, wu3 = lyapunov_weights(l4_problem, g3)
    expect_wx3 = (4 / (16 * g3.gamma**2)) * (1.0 - math.sqrt(g3.gamma * 4 * 0.75 / 2.0))
    assert wx3 == pytest.approx(expect_wx3, rel=1e-12)
    assert wu3 == 1.0


def test_lyapunov_zero_at_reference_and_scaling(quad_problem, quad_reference):
    sch = build_schedule(quad_problem, 2, "thm2")
    state = init_state(quad_problem)
    state.x = quad_reference.x_star.copy()
    state.duals = quad_reference.duals_star.copy()
    state.dual_sum = state.duals.sum(axis=0)
    assert lyapunov(quad_problem, sch, state, quad_reference.x_star,
                    quad_reference.duals_star) == 0.0
    # quadratic homogeneity: doubling both offsets quadruples the value
    e = np.ones(quad_problem.d)
    state.x = quad_reference.x_star + e
    state.duals = quad_reference.duals_star + 0.5
    one = lyapunov(quad_problem, sch, state, quad_reference.x_star, quad_reference.duals_star)
    state.x = quad_reference.x_star + 2 * e
    state.duals = quad_reference.duals_star + 1.0
    four = lyapunov(quad_problem, sch, state, quad_reference.x_star, quad_reference.duals_star)
    assert four == pytest.approx(4.0 * one, rel=1e-12)


def test_lyapunov_hand_value(quad_problem, quad_reference):
    sch = build_schedule(quad_problem, 2, "thm1")
    wx, wu = lyapunov_weights(quad_problem, sch)
    state = init_state(quad_problem)
    state.x = quad_reference.x_star + np.eye(quad_problem.d)[0]
    state.duals = quad_reference.duals_star.copy()
    state.duals[2] += np.eye(quad_problem.d)[1] * 3.0
    val = lyapunov(quad_problem, sch, state, quad_reference.x_star, quad_reference.duals_star)
    assert val == pytest.approx(wx * 1.0 + wu * 9.0, rel=1e-12)


def test_lyapunov_flat_smoothness_no_nan():
    flat = diag_quadratic([[1.0, 1.0], [1.0, 1.0]], mu=1.0, seed=2)
    sch = build_schedule(flat, 1, "thm3")
    from fedcohort import compute_reference

    ref = compute_reference(flat)
    state = init_state(flat)
    state.duals = ref.duals_star.copy()
    state.dual_sum = state.duals.sum(axis=0)
    val = lyapunov(flat, sch, state, ref.x_star, ref.duals_star)
    assert math.isfinite(val)
