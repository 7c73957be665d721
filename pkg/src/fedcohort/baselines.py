"""Reference methods to compare against: full gradient descent, local GD with
cohort averaging, SCAFFOLD with control variates, and ProxSkip.

Each method is an infinite generator yielding (representative iterate,
cumulative uploads) after every round, where uploads counts vectors exchanged
per participating client (model down and update up; SCAFFOLD moves a control
variate each way on top). The caller decides when to stop.
"""

from __future__ import annotations

import math
from collections.abc import Iterator

import numpy as np

from .objective import Problem
from .sampling import SeededRng, bernoulli, sample_cohort

Trace = Iterator[tuple[np.ndarray, int]]


def iterate_gd(problem: Problem) -> Trace:
    """x <- x - (1/L) grad f(x), every client reporting every round."""
    x = np.zeros(problem.d)
    uploads = 0
    while True:
        x = x - (1.0 / problem.L) * problem.grad_f(x)
        uploads += 2 * problem.M
        yield x, uploads


def iterate_localgd(problem: Problem, C: int, K: int, rng: SeededRng) -> Trace:
    """Each cohort member runs K gradient steps on its own loss from the
    server model; the server averages the results. Stepsize 1/(6LK)."""
    if K < 1:
        raise ValueError("local step count must be at least 1")
    x = np.zeros(problem.d)
    uploads = 0
    t = 0
    stepsize = 1.0 / (6.0 * problem.L * K)
    while True:
        stream = rng.round_stream(t)
        cohort = sample_cohort(stream, problem.M, C)
        ys = np.zeros((C, problem.d))
        for i, m in enumerate(cohort):
            m = int(m)
            y = x.copy()
            for _ in range(K):
                y = y - stepsize * problem.grad_f_m(m, y)
            ys[i] = y
        x = np.mean(ys, axis=0)
        uploads += 2 * C
        t += 1
        yield x, uploads


def iterate_scaffold(problem: Problem, C: int, K: int, rng: SeededRng) -> Trace:
    """Local steps corrected by control variates (option II controls).

    Each cohort member descends on grad f_m(y) - (c_m - c), then refreshes its
    control to (c_m - c) + (x - y)/(K eta); the server control is the mean of
    all client controls. With every control equal, a round is bitwise the
    local-GD round. Stepsize 1/(6LK)."""
    if K < 1:
        raise ValueError("local step count must be at least 1")
    x = np.zeros(problem.d)
    controls = np.zeros((problem.M, problem.d))
    server_control = np.zeros(problem.d)
    uploads = 0
    t = 0
    eta = 1.0 / (6.0 * problem.L * K)
    while True:
        stream = rng.round_stream(t)
        cohort = sample_cohort(stream, problem.M, C)
        ys = np.zeros((C, problem.d))
        for i, m in enumerate(cohort):
            m = int(m)
            y = x.copy()
            correction = controls[m] - server_control
            for _ in range(K):
                y = y - eta * (problem.grad_f_m(m, y) - correction)
            controls[m] = correction + (x - y) / (K * eta)
            ys[i] = y
        x = np.mean(ys, axis=0)
        server_control = np.mean(controls, axis=0)
        uploads += 4 * C
        t += 1
        yield x, uploads


def iterate_proxskip(problem: Problem, rng: SeededRng, cohort_size: int | None = None) -> Trace:
    """Local steps with gradient correction; a p-coin triggers averaging.

    gamma = 1/L and p = 1/sqrt(L/mu), the tuning that gives this method its
    accelerated communication complexity under full participation. Passing a
    cohort size restricts both the local steps and the averaging to a sampled
    cohort (everyone else is frozen); the method has no such extension in
    theory, and this is the natural-but-unsupported variant whose stall the
    comparison experiment demonstrates. Yields the mean of the client models.
    """
    M, d = problem.M, problem.d
    xs = np.zeros((M, d))
    hs = np.zeros((M, d))
    uploads = 0
    t = 0
    p = 1.0 / math.sqrt(problem.L / problem.mu)
    gamma = 1.0 / problem.L
    while True:
        stream = rng.round_stream(t)
        if cohort_size is None:
            active = np.arange(M)
        else:
            active = sample_cohort(stream, M, cohort_size)
        coin = bernoulli(stream, p)
        hats = {}
        for m in active:
            m = int(m)
            hats[m] = xs[m] - gamma * (problem.grad_f_m(m, xs[m]) - hs[m])
        if coin:
            stacked = np.stack([hats[int(m)] - (gamma / p) * hs[int(m)] for m in active])
            x_new = np.mean(stacked, axis=0)
            for m in active:
                m = int(m)
                hs[m] = hs[m] + (p / gamma) * (x_new - hats[m])
                xs[m] = x_new
            uploads += 2 * len(active)
        else:
            for m in active:
                m = int(m)
                xs[m] = hats[m]
        t += 1
        yield xs.mean(axis=0), uploads
