"""Client objectives, their reformulated (convexified) parts, and smoothness constants.

A problem is f(x) = (1/M) sum_m f_m(x) where every f_m is L_m-smooth and
mu-strongly convex. The server-side methods work on the splitting
f(x) = sum_m F_m(x) + (mu/2)||x||^2 with F_m(x) = (1/M)(f_m(x) - (mu/2)||x||^2),
which is convex and (L_m - mu)/M smooth. Local subproblems regularize F_m with a
proximal term around a center point.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data_io import ClientShard


def softplus(z: np.ndarray) -> np.ndarray:
    """log(1 + exp(z)) computed as max(z, 0) + log1p(exp(-|z|)) for overflow safety."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Problem:
    """Base class: holds the constants shared by every concrete objective.

    Subclasses set M, d, mu, lam and the per-client smoothness array L_m before
    calling _finalize_constants, and implement f_m_value / grad_f_m / hess_f_m.
    """

    M: int
    d: int
    mu: float
    lam: float
    L_m: np.ndarray

    def _finalize_constants(self) -> None:
        self.L_m = np.asarray(self.L_m, dtype=np.float64)
        if self.mu <= 0:
            raise ValueError("strong convexity modulus must be positive")
        if np.any(self.L_m < self.mu - 1e-12 * self.mu):
            raise ValueError("every client smoothness constant must be >= mu")
        self.L = float(np.max(self.L_m))
        self.L_F = (self.L - self.mu) / self.M
        self.L_F_per_client = (self.L_m - self.mu) / self.M
        self.kappa = self.L / self.mu

    # per-client pieces ------------------------------------------------------

    def f_m_value(self, m: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad_f_m(self, m: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_f_m(self, m: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # global objective -------------------------------------------------------

    def f_value(self, x: np.ndarray) -> float:
        total = 0.0
        for m in range(self.M):
            total += self.f_m_value(m, x)
        return total / self.M

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(self.d)
        for m in range(self.M):
            total += self.grad_f_m(m, x)
        return total / self.M

    def hess_f(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros((self.d, self.d))
        for m in range(self.M):
            total += self.hess_f_m(m, x)
        return total / self.M

    # reformulated (convexified) pieces --------------------------------------

    def F_m_value(self, m: int, x: np.ndarray) -> float:
        return (self.f_m_value(m, x) - 0.5 * self.mu * float(x @ x)) / self.M

    def grad_F_m(self, m: int, x: np.ndarray) -> np.ndarray:
        return (self.grad_f_m(m, x) - self.mu * x) / self.M

    def hess_F_m(self, m: int, x: np.ndarray) -> np.ndarray:
        return (self.hess_f_m(m, x) - self.mu * np.eye(self.d)) / self.M

    # plumbing ----------------------------------------------------------------

    def finite_sum_shard(self, m: int):
        """Per-point component access for variance-reduced local solvers, or None."""
        return None

    def data_digest(self) -> str:
        raise NotImplementedError


@dataclass
class LocalSubproblem:
    """psi(y) = F_m(y) + (tau/2)||y - center||^2, tau-strongly convex."""

    problem: Problem
    m: int
    tau: float
    center: np.ndarray

    def psi_value(self, y: np.ndarray) -> float:
        diff = y - self.center
        return self.problem.F_m_value(self.m, y) + 0.5 * self.tau * float(diff @ diff)

    def grad_psi(self, y: np.ndarray) -> np.ndarray:
        return self.problem.grad_F_m(self.m, y) + self.tau * (y - self.center)

    def hess_psi(self, y: np.ndarray) -> np.ndarray:
        return self.problem.hess_F_m(self.m, y) + self.tau * np.eye(self.problem.d)

    @property
    def smoothness(self) -> float:
        """Smoothness of psi with the per-client constant."""
        return float(self.problem.L_F_per_client[self.m]) + self.tau


def _power_iteration_sym(matvec, dim: int, rel_tol: float = 1e-10, max_iters: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Stops when successive Rayleigh quotients agree to rel_tol, or after
    max_iters iterations. Deterministic start vector.
    """
    v = np.ones(dim) / np.sqrt(dim)
    prev = 0.0
    for _ in range(max_iters):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        rayleigh = float(v @ matvec(v))
        if abs(rayleigh - prev) <= rel_tol * max(abs(rayleigh), 1e-300):
            return rayleigh
        prev = rayleigh
    return prev


def estimate_L_m(shard: ClientShard, lam: float) -> float:
    """Smoothness bound for one client's regularized logistic loss.

    Returns lambda_max(A^T A)/(4N) + lam via power iteration on the Gram operator
    (an all-zero feature matrix gives exactly lam).
    """
    mat, _ = shard.to_arrays()
    n = mat.shape[0]

    def gram(v):
        return mat.T @ (mat @ v)

    top = _power_iteration_sym(gram, shard.dimension)
    return top / (4.0 * n) + lam


def ridge_from_ratio(data_smoothness: float, ratio: float) -> float:
    """Solve lam = ratio * L with L = data_smoothness + lam, in closed form."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    return ratio * data_smoothness / (1.0 - ratio)


class LogisticProblem(Problem):
    """Ridge-regularized logistic regression over M client shards.

    f_m(x) = (1/N) sum_i log(1 + exp(-b_i a_i^T x)) + (lam/2)||x||^2, mu = lam.

    If lam is None it is derived from lam_ratio via the closed-form fixed point
    lam = ratio * L_data / (1 - ratio), so that lam = ratio * L exactly.
    """

    def __init__(self, shards: list[ClientShard], lam: float | None = None,
                 lam_ratio: float = 1e-3):
        if not shards:
            raise ValueError("need at least one shard")
        dims = {s.dimension for s in shards}
        if len(dims) != 1:
            raise ValueError("all shards must share one dimension")
        self.shards = shards
        self.M = len(shards)
        self.d = shards[0].dimension
        self.client_sizes = [len(s) for s in shards]
        # common per-client count when the shards are balanced, else None
        self.N = self.client_sizes[0] if len(set(self.client_sizes)) == 1 else None
        self._mats = []
        self._labels = []
        for s in shards:
            mat, labels = s.to_arrays()
            self._mats.append(mat)
            self._labels.append(labels)
        data_smooth = np.array(
            [_power_iteration_sym(lambda v, A=A: A.T @ (A @ v), self.d) / (4.0 * A.shape[0])
             for A in self._mats]
        )
        if lam is None:
            lam = ridge_from_ratio(float(np.max(data_smooth)), lam_ratio)
        if lam <= 0:
            raise ValueError("ridge coefficient must be positive")
        self.lam = float(lam)
        self.mu = float(lam)
        self.L_m = data_smooth + self.lam
        self._row_sq_norms = [np.asarray(A.multiply(A).sum(axis=1)).ravel() for A in self._mats]
        self._finalize_constants()

    def f_m_value(self, m: int, x: np.ndarray) -> float:
        z = self._labels[m] * (self._mats[m] @ x)
        return float(np.mean(softplus(-z))) + 0.5 * self.lam * float(x @ x)

    def grad_f_m(self, m: int, x: np.ndarray) -> np.ndarray:
        A, b = self._mats[m], self._labels[m]
        s = sigmoid(-b * (A @ x))
        return -(A.T @ (b * s)) / len(b) + self.lam * x

    def hess_f_m(self, m: int, x: np.ndarray) -> np.ndarray:
        A, b = self._mats[m], self._labels[m]
        s = sigmoid(-b * (A @ x))
        w = s * (1.0 - s)
        weighted = A.multiply(w[:, None])
        H = (weighted.T @ A).toarray() / len(b)
        return H + self.lam * np.eye(self.d)

    def finite_sum_shard(self, m: int):
        return _LogisticComponents(self, m)

    def data_digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"logistic:{self.M}:{self.d}:{self.N}:{self.lam!r}".encode())
        for A, b in zip(self._mats, self._labels):
            h.update(A.indptr.tobytes())
            h.update(A.indices.tobytes())
            h.update(A.data.tobytes())
            h.update(b.tobytes())
        return h.hexdigest()


class _LogisticComponents:
    """Per-point component gradients of one client's subproblem, for minibatch solvers.

    Component i of psi is g_i(y) = (1/M)(f_{m,i}(y) - (mu/2)||y||^2) + (tau/2)||y - center||^2
    with f_{m,i}(y) = log(1 + exp(-b_i a_i^T y)) + (lam/2)||y||^2; psi = (1/N) sum_i g_i.
    """

    def __init__(self, problem: LogisticProblem, m: int):
        self.problem = problem
        self.m = m
        self.A = problem._mats[m]
        self.b = problem._labels[m]
        self.n = len(self.b)
        # per-component smoothness of f_{m,i}: ||a_i||^2 / 4 + lam
        self.component_smoothness = problem._row_sq_norms[m] / 4.0 + problem.lam

    def grad_components(self, idx: np.ndarray, y: np.ndarray, sub: LocalSubproblem) -> np.ndarray:
        """Average of the component gradients of psi over the index batch."""
        p = self.problem
        A = self.A[idx]
        b = self.b[idx]
        s = sigmoid(-b * (A @ y))
        loss_part = -(A.T @ (b * s)) / len(idx)
        return (loss_part + (p.lam - p.mu) * y) / p.M + sub.tau * (y - sub.center)


class QuadraticProblem(Problem):
    """Per-client quadratics f_m(x) = (1/2) x^T Q_m x + c_m^T x with spectra in [mu, L_m].

    Used by the synthetic generators: the condition number is exactly controllable
    by pinning eigenvalues. lam is reported equal to mu for interface parity.
    """

    def __init__(self, quads: list[np.ndarray], linears: list[np.ndarray], mu: float):
        if len(quads) != len(linears) or not quads:
            raise ValueError("need matching, non-empty quadratic and linear term lists")
        self.M = len(quads)
        self.d = quads[0].shape[0]
        self._Q = [np.asarray(Q, dtype=np.float64) for Q in quads]
        self._c = [np.asarray(c, dtype=np.float64) for c in linears]
        self.mu = float(mu)
        self.lam = float(mu)
        eig_min = min(float(np.linalg.eigvalsh(Q)[0]) for Q in self._Q)
        if eig_min < mu * (1 - 1e-9):
            raise ValueError("a client quadratic is less than mu-strongly convex")
        self.L_m = np.array([float(np.linalg.eigvalsh(Q)[-1]) for Q in self._Q])
        self._finalize_constants()

    def f_m_value(self, m: int, x: np.ndarray) -> float:
        return 0.5 * float(x @ (self._Q[m] @ x)) + float(self._c[m] @ x)

    def grad_f_m(self, m: int, x: np.ndarray) -> np.ndarray:
        return self._Q[m] @ x + self._c[m]

    def hess_f_m(self, m: int, x: np.ndarray) -> np.ndarray:
        return self._Q[m].copy()

    def data_digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"quadratic:{self.M}:{self.d}:{self.mu!r}".encode())
        for Q, c in zip(self._Q, self._c):
            h.update(np.ascontiguousarray(Q).tobytes())
            h.update(np.ascontiguousarray(c).tobytes())
        return h.hexdigest()


def logistic_from_points(points, num_clients: int, lam: float | None = None,
                         lam_ratio: float = 1e-3, dimension: int | None = None) -> LogisticProblem:
    """Partition parsed points and build the regularized logistic objective."""
    from .data_io import partition

    shards = partition(points, num_clients, dimension=dimension)
    return LogisticProblem(shards, lam=lam, lam_ratio=lam_ratio)
