"""Synthetic problem generators with exactly controlled conditioning.

Both families accept a target condition number and hit it: the quadratic family
pins extreme eigenvalues, the logistic family solves for the ridge coefficient
that makes (data smoothness + lam) / lam equal the target.
"""

from __future__ import annotations

import numpy as np

from .data_io import ClientShard, DataPoint
from .objective import LogisticProblem, Problem, QuadraticProblem, estimate_L_m


def make_quadratic(d: int, M: int, kappa: float, seed: int, mu: float = 1.0) -> QuadraticProblem:
    """Random client quadratics whose condition number is kappa, per client and
    in aggregate.

    Every client has curvature exactly mu along the first coordinate and
    kappa * mu along the second, so the averaged Hessian is as ill-conditioned
    as each client and observed rates reflect the nominal kappa. The remaining
    directions get a client-specific random orthogonal basis with eigenvalues
    drawn uniformly from [mu, kappa * mu]. Linear terms c_m = -Q_m z_m with
    random z_m give heterogeneous minimizers.
    """
    if kappa < 1:
        raise ValueError("condition number must be at least 1")
    if d < 2 and kappa != 1:
        raise ValueError("need d >= 2 to realize a condition number above 1")
    rng = np.random.default_rng(seed)
    L = kappa * mu
    quads = []
    linears = []
    for m in range(M):
        Q = np.zeros((d, d))
        Q[0, 0] = mu
        if d > 1:
            Q[1, 1] = L
        if d > 2:
            eigs = rng.uniform(mu, L, size=d - 2)
            basis = np.linalg.qr(rng.standard_normal((d - 2, d - 2)))[0]
            block = (basis * eigs) @ basis.T
            Q[2:, 2:] = 0.5 * (block + block.T)
        z = rng.standard_normal(d)
        quads.append(Q)
        linears.append(-Q @ z)
    return QuadraticProblem(quads, linears, mu)


def _shard_from_rows(rows: np.ndarray, labels: np.ndarray, d: int) -> ClientShard:
    points = []
    for row, label in zip(rows, labels):
        features = {j + 1: float(v) for j, v in enumerate(row) if v != 0.0}
        points.append(DataPoint(label=float(label), features=features))
    return ClientShard(points=tuple(points), dimension=d)


def make_logistic(d: int, M: int, N: int, seed: int, kappa: float | None = None,
                  lam: float | None = None, lam_ratio: float | None = None) -> LogisticProblem:
    """Random-feature logistic regression over M clients of N points each.

    Exactly one of kappa, lam, lam_ratio picks the ridge strength. With kappa,
    lam = L_data / (kappa - 1) so the resulting condition number is the target.
    Client label models are perturbations of a shared weight vector, so the
    client optima disagree.
    """
    chosen = [v is not None for v in (kappa, lam, lam_ratio)]
    if sum(chosen) > 1:
        raise ValueError("pass at most one of kappa, lam, lam_ratio")
    if sum(chosen) == 0:
        lam_ratio = 1e-3
    rng = np.random.default_rng(seed)
    w_shared = rng.standard_normal(d)
    shards = []
    for _ in range(M):
        rows = rng.standard_normal((N, d))
        w_m = w_shared + 0.5 * rng.standard_normal(d)
        margins = rows @ w_m
        labels = np.where(margins >= 0.0, 1.0, -1.0)
        # flip a few labels so no client is linearly separable
        flip = rng.random(N) < 0.1
        labels[flip] = -labels[flip]
        shards.append(_shard_from_rows(rows, labels, d))
    if kappa is not None:
        if kappa <= 1:
            raise ValueError("condition number must exceed 1 for a logistic problem")
        data_smooth = max(estimate_L_m(s, lam=0.0) for s in shards)
        lam = data_smooth / (kappa - 1.0)
        return LogisticProblem(shards, lam=lam)
    if lam is not None:
        return LogisticProblem(shards, lam=lam)
    return LogisticProblem(shards, lam_ratio=lam_ratio)


_INT_KEYS = {"d", "M", "N", "seed"}
_FLOAT_KEYS = {"kappa", "mu", "lam", "lam_ratio"}


def parse_synthetic_spec(spec: str) -> Problem:
    """Build a problem from a compact string.

    Examples: "quadratic:d=10,M=4,kappa=100,seed=1" and
    "logistic:d=20,M=5,N=40,kappa=1000,seed=3" (logistic also accepts lam= or
    lam_ratio= in place of kappa=).
    """
    family, _, rest = spec.partition(":")
    family = family.strip()
    params: dict[str, float | int] = {}
    if rest.strip():
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            key = key.strip()
            val = val.strip()
            if not sep or not key or not val:
                raise ValueError(f"malformed synthetic parameter {item!r}")
            if key in _INT_KEYS:
                params[key] = int(val)
            elif key in _FLOAT_KEYS:
                params[key] = float(val)
            else:
                raise ValueError(f"unknown synthetic parameter {key!r}")
    if family == "quadratic":
        allowed = {"d", "M", "kappa", "seed", "mu"}
        _require(params, {"d", "M", "kappa"}, allowed, family)
        return make_quadratic(d=params["d"], M=params["M"], kappa=params["kappa"],
                              seed=params.get("seed", 0), mu=params.get("mu", 1.0))
    if family == "logistic":
        allowed = {"d", "M", "N", "kappa", "lam", "lam_ratio", "seed"}
        _require(params, {"d", "M", "N"}, allowed, family)
        return make_logistic(d=params["d"], M=params["M"], N=params["N"],
                             seed=params.get("seed", 0), kappa=params.get("kappa"),
                             lam=params.get("lam"), lam_ratio=params.get("lam_ratio"))
    raise ValueError(f"unknown synthetic family {family!r}")


def _require(params: dict, required: set, allowed: set, family: str) -> None:
    missing = required - params.keys()
    if missing:
        raise ValueError(f"{family} spec is missing {sorted(missing)}")
    extra = params.keys() - allowed
    if extra:
        raise ValueError(f"{family} spec does not accept {sorted(extra)}")
