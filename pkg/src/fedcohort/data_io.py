"""LibSVM-format parsing and partitioning of labeled rows across simulated clients.

The on-disk format is line oriented: ``<label> <idx>:<val> <idx>:<val> ...``
with 1-based, strictly increasing feature indices per line. Labels are
normalized to -1/+1 (inputs 0/1 are mapped to -1/+1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp


class LibsvmParseError(ValueError):
    """Raised on malformed input, carrying the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class DataPoint:
    """One labeled example: a sparse feature map (1-based indices) and a +-1 label."""

    label: float
    features: dict[int, float]

    def max_index(self) -> int:
        return max(self.features) if self.features else 0


@dataclass(frozen=True)
class ClientShard:
    """The ordered block of examples owned by one client, plus the global dimension."""

    points: tuple[DataPoint, ...]
    dimension: int

    def __post_init__(self):
        if not self.points:
            raise ValueError("a client shard must hold at least one point")
        worst = max(p.max_index() for p in self.points)
        if worst > self.dimension:
            raise ValueError(
                f"shard dimension {self.dimension} is smaller than max feature index {worst}"
            )

    def __len__(self) -> int:
        return len(self.points)

    def to_arrays(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Sparse (N, d) feature matrix and the (N,) label vector, 0-based columns."""
        rows, cols, vals = [], [], []
        labels = np.empty(len(self.points))
        for i, p in enumerate(self.points):
            labels[i] = p.label
            for idx, val in p.features.items():
                rows.append(i)
                cols.append(idx - 1)
                vals.append(val)
        mat = sp.csr_matrix(
            (vals, (rows, cols)), shape=(len(self.points), self.dimension), dtype=np.float64
        )
        return mat, labels


_LABEL_MAP = {-1.0: -1.0, 0.0: -1.0, 1.0: 1.0}


def _parse_label(token: str, line_no: int) -> float:
    try:
        raw = float(token)
    except ValueError:
        raise LibsvmParseError(line_no, f"bad label token {token!r}") from None
    if raw not in _LABEL_MAP:
        raise LibsvmParseError(line_no, f"label {token!r} outside {{-1, 0, +1}}")
    return _LABEL_MAP[raw]


def parse_libsvm(text: str | Iterable[str]) -> tuple[list[DataPoint], int]:
    """Parse LibSVM text (a string or iterable of lines) into points and the dimension.

    Returns (points, dimension) with dimension the maximum feature index seen.
    Blank lines are skipped. Malformed tokens, non-positive or non-increasing
    indices, and out-of-range labels raise ``LibsvmParseError`` with the line number.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    points: list[DataPoint] = []
    dimension = 0
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        tokens = stripped.split()
        label = _parse_label(tokens[0], line_no)
        features: dict[int, float] = {}
        prev_idx = 0
        for token in tokens[1:]:
            idx_str, sep, val_str = token.partition(":")
            if not sep:
                raise LibsvmParseError(line_no, f"expected idx:val, got {token!r}")
            try:
                idx = int(idx_str)
                val = float(val_str)
            except ValueError:
                raise LibsvmParseError(line_no, f"bad feature token {token!r}") from None
            if idx <= 0:
                raise LibsvmParseError(line_no, f"feature index {idx} is not positive")
            if idx <= prev_idx:
                raise LibsvmParseError(
                    line_no, f"feature index {idx} does not increase (previous {prev_idx})"
                )
            prev_idx = idx
            features[idx] = val
        dimension = max(dimension, prev_idx)
        points.append(DataPoint(label=label, features=features))
    return points, dimension


def format_libsvm(points: Iterable[DataPoint]) -> str:
    """Serialize points back to LibSVM text; round-trips exactly through parse_libsvm."""
    out = []
    for p in points:
        head = "+1" if p.label > 0 else "-1"
        feats = " ".join(f"{i}:{v!r}" for i, v in sorted(p.features.items()))
        out.append(f"{head} {feats}".rstrip())
    return "\n".join(out) + ("\n" if out else "")


def load_libsvm_file(path) -> tuple[list[DataPoint], int]:
    with open(path, "r") as fh:
        return parse_libsvm(fh)


def partition(points: list[DataPoint], num_clients: int, dimension: int | None = None) -> list[ClientShard]:
    """Split points into num_clients contiguous equal blocks, discarding the remainder.

    Every client receives exactly floor(len(points)/num_clients) points in the
    original order; the trailing len(points) mod num_clients points are dropped so
    the per-client count is uniform.
    """
    if num_clients < 1:
        raise ValueError("need at least one client")
    if len(points) < num_clients:
        raise ValueError(f"cannot split {len(points)} points across {num_clients} clients")
    if dimension is None:
        dimension = max((p.max_index() for p in points), default=0)
    per_client = len(points) // num_clients
    shards = []
    for m in range(num_clients):
        block = tuple(points[m * per_client : (m + 1) * per_client])
        shards.append(ClientShard(points=block, dimension=dimension))
    return shards
