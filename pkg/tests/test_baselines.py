import math
from itertools import islice

import numpy as np
import pytest

from fedcohort import (
    SeededRng,
    compute_reference,
    iterate_gd,
    iterate_localgd,
    iterate_proxskip,
    iterate_scaffold,
    make_quadratic,
)
from fedcohort.sampling import bernoulli, sample_cohort


def take(iterator, n):
    return list(islice(iterator, n))


def test_gd_matches_manual_iteration(quad_problem):
    xs = take(iterate_gd(quad_problem), 5)
    x = np.zeros(quad_problem.d)
    for t, (got, uploads) in enumerate(xs, start=1):
        x = x - (1.0 / quad_problem.L) * quad_problem.grad_f(x)
        assert np.array_equal(got, x)
        assert uploads == 2 * quad_problem.M * t


def test_gd_converges_linearly(quad_problem, quad_reference):
    # kappa=100, so the slow mode sheds a factor (1 - 1/100) per round
    dists = [float(np.linalg.norm(x - quad_reference.x_star)) for x, _ in
             take(iterate_gd(quad_problem), 700)]
    assert dists[-1] < 1e-3 * dists[0]
    assert dists[-1] <= (1.0 - 1.0 / quad_problem.kappa) ** 700 * dists[0] * (1 + 1e-9)
    floor = 1e-12 * dists[0]  # below this, rounding noise dominates
    assert all(b <= a * (1 + 1e-12) or a < floor for a, b in zip(dists, dists[1:]))


def test_localgd_one_step_full_participation_is_mean_descent(quad_problem):
    M = quad_problem.M
    (x1, uploads), = take(iterate_localgd(quad_problem, C=M, K=1, rng=SeededRng(0)), 1)
    s = 1.0 / (6.0 * quad_problem.L)
    manual = np.mean(
        [np.zeros(quad_problem.d) - s * quad_problem.grad_f_m(m, np.zeros(quad_problem.d))
         for m in range(M)], axis=0)
    assert np.allclose(x1, manual, rtol=1e-13, atol=1e-15)
    assert uploads == 2 * M


def test_localgd_uploads_and_determinism(quad_problem):
    a = take(iterate_localgd(quad_problem, C=2, K=3, rng=SeededRng(5)), 4)
    b = take(iterate_localgd(quad_problem, C=2, K=3, rng=SeededRng(5)), 4)
    for (xa, ua), (xb, ub) in zip(a, b):
        assert np.array_equal(xa, xb)
        assert ua == ub
    assert [u for _, u in a] == [4, 8, 12, 16]


def test_localgd_rejects_zero_steps(quad_problem):
    with pytest.raises(ValueError):
        next(iterate_localgd(quad_problem, C=2, K=0, rng=SeededRng(0)))
    with pytest.raises(ValueError):
        next(iterate_scaffold(quad_problem, C=2, K=0, rng=SeededRng(0)))


def test_scaffold_first_round_bitwise_equals_localgd(quad_problem):
    # all controls start at zero, so the first-round correction is exactly zero
    (x_lgd, _), = take(iterate_localgd(quad_problem, C=2, K=4, rng=SeededRng(9)), 1)
    (x_scf, u_scf), = take(iterate_scaffold(quad_problem, C=2, K=4, rng=SeededRng(9)), 1)
    assert np.array_equal(x_lgd, x_scf)
    assert u_scf == 4 * 2  # two extra vectors per member for the controls


def test_scaffold_diverges_from_localgd_later(quad_problem):
    lgd = take(iterate_localgd(quad_problem, C=2, K=4, rng=SeededRng(9)), 3)
    scf = take(iterate_scaffold(quad_problem, C=2, K=4, rng=SeededRng(9)), 3)
    assert not np.array_equal(lgd[2][0], scf[2][0])


def test_scaffold_converges_with_client_sampling(quad_problem, quad_reference):
    # control variates remove the fixed point bias local gd suffers under sampling
    dists = [float(np.linalg.norm(x - quad_reference.x_star)) for x, _ in
             take(iterate_scaffold(quad_problem, C=2, K=5, rng=SeededRng(3)), 4000)]
    assert dists[-1] < 1e-4 * dists[0]


def test_proxskip_full_converges(quad_problem, quad_reference):
    dists = [float(np.linalg.norm(x - quad_reference.x_star)) for x, _ in
             take(iterate_proxskip(quad_problem, SeededRng(2)), 2000)]
    assert dists[-1] < 1e-6 * dists[0]


def test_proxskip_uploads_only_on_sync(quad_problem):
    rng = SeededRng(4)
    rounds = take(iterate_proxskip(quad_problem, SeededRng(4)), 60)
    p = 1.0 / math.sqrt(quad_problem.kappa)
    uploads = 0
    for t, (_, got) in enumerate(rounds):
        stream = rng.round_stream(t)
        coin = bernoulli(stream, p)
        if coin:
            uploads += 2 * quad_problem.M
        assert got == uploads


def test_proxskip_cohort_respects_sampling(quad_problem):
    rng = SeededRng(6)
    rounds = take(iterate_proxskip(quad_problem, SeededRng(6), cohort_size=2), 40)
    uploads = 0
    for t, (_, got) in enumerate(rounds):
        stream = rng.round_stream(t)
        sample_cohort(stream, quad_problem.M, 2)  # consume the cohort draw
        if bernoulli(stream, 1.0 / math.sqrt(quad_problem.kappa)):
            uploads += 2 * 2
        assert got == uploads


def test_proxskip_cohort_variant_stalls():
    problem = make_quadratic(d=6, M=8, kappa=100.0, seed=7)
    ref = compute_reference(problem)
    dists = [float(np.linalg.norm(x - ref.x_star) ** 2) for x, _ in
             take(iterate_proxskip(problem, SeededRng(1), cohort_size=2), 600)]
    # the sampled variant has no convergence guarantee; it must not come close
    # to solving the problem while the full variant does
    assert dists[-1] > 1e-3 * dists[0]
