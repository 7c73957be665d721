"""Deterministic randomness plumbing and uniform cohort sampling.

One master seed fans out into independent substreams: one per round for cohort
selection, and one per (round, client) for any randomized local solver. Streams
are reconstructed from indices rather than advanced in place, so any round can
be replayed in isolation.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


class SeededRng:
    """PCG64 stream tree keyed by a master seed."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = int(seed)

    def round_stream(self, t: int) -> np.random.Generator:
        """Stream for round t's server-side draws (cohort selection)."""
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed ^ t)))

    def client_stream(self, t: int, m: int) -> np.random.Generator:
        """Stream for client m's local solver randomness in round t."""
        seq = np.random.SeedSequence(self.seed ^ t, spawn_key=(m,))
        return np.random.Generator(np.random.PCG64(seq))


def bernoulli(stream: np.random.Generator, p: float) -> bool:
    return bool(stream.random() < p)


def sample_cohort(stream: np.random.Generator, M: int, C: int) -> np.ndarray:
    """C distinct client indices, uniform over all C-subsets, returned sorted.

    Partial Fisher-Yates: C swap steps on an index array, keeping the prefix.
    """
    if not 1 <= C <= M:
        raise ValueError("cohort size must satisfy 1 <= C <= M")
    idx = np.arange(M)
    for i in range(C):
        j = i + int(stream.integers(0, M - i))
        idx[i], idx[j] = idx[j], idx[i]
    return np.sort(idx[:C])


def apply_sampling_operator(vectors: np.ndarray, cohort: np.ndarray, M: int, C: int) -> np.ndarray:
    """Unbiased cohort projection: row m becomes (M/C) * vectors[m] inside the cohort, 0 outside."""
    out = np.zeros_like(vectors)
    out[cohort] = (M / C) * vectors[cohort]
    return out


def expected_sq_deviation(vectors: np.ndarray, C: int) -> float:
    """E over cohorts of || sum_m (P(v)_m - v_m) ||^2 in closed form.

    For uniform C-of-M sampling this equals
    (M/C) ((M-C)/(M-1)) sum_m ||v_m||^2 - ((M-C)/(C(M-1))) ||sum_m v_m||^2,
    and 0 when M = 1 or C = M.
    """
    M = vectors.shape[0]
    if M == 1 or C == M:
        return 0.0
    sum_sq = float(np.sum(vectors * vectors))
    total = vectors.sum(axis=0)
    total_sq = float(total @ total)
    scale = (M - C) / (M - 1)
    return (M / C) * scale * sum_sq - (scale / C) * total_sq


def enumerate_cohorts(M: int, C: int) -> list[np.ndarray]:
    """All C-subsets of range(M) in lexicographic order, for exact expectations."""
    return [np.array(c, dtype=np.int64) for c in combinations(range(M), C)]
