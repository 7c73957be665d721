"""Shared numeric helpers for the test suite."""

import numpy as np


def central_diff(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def rel_err(a, b):
    """||a - b|| / max(||b||, tiny)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30))


def diag_quadratic(eigs_per_client, mu=1.0, seed=0):
    """QuadraticProblem with diagonal clients and pinned spectra (exact constants)."""
    from fedcohort import QuadraticProblem

    rng = np.random.default_rng(seed)
    quads = [np.diag(np.asarray(e, dtype=np.float64)) for e in eigs_per_client]
    linears = [rng.standard_normal(q.shape[0]) for q in quads]
    return QuadraticProblem(quads, linears, mu)
