"""Minimum-cost one-to-one assignment between two box sets.

Rectangular problems are squared up by padding with a sentinel cost larger
than any real entry, so padded pairings can never displace a real pairing
and rows/columns matched to padding come back as unmatched.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class CostMatrix:
    """Pairwise costs, rows = one side of the matching, cols = the other."""

    cost: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.cost, dtype=float)
        if mat.ndim != 2:
            raise ValueError(f"cost must be 2-D, got shape {mat.shape}")
        if mat.size and (not np.isfinite(mat).all() or (mat < 0).any()):
            raise ValueError("costs must be finite and non-negative")
        self.cost = mat

    @property
    def n_rows(self) -> int:
        return int(self.cost.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.cost.shape[1])


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total_cost(self, costs: CostMatrix) -> float:
        return float(sum(costs.cost[r, c] for r, c in self.pairs))


def build_cost_matrix(positions_a: Sequence, positions_b: Sequence) -> CostMatrix:
    """Euclidean distances between two lists of 3-D positions."""
    a = np.asarray(positions_a, dtype=float).reshape(-1, 3)
    b = np.asarray(positions_b, dtype=float).reshape(-1, 3)
    diff = a[:, None, :] - b[None, :, :]
    return CostMatrix(np.sqrt((diff * diff).sum(axis=2)))


def _hungarian_square(cost: np.ndarray) -> np.ndarray:
    """O(n^3) Hungarian algorithm on a square matrix; returns col chosen per row.

    Potentials-plus-augmenting-path formulation; 1-indexed internal arrays
    with column 0 as the virtual start column.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[col] = row currently matched to col
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col


def solve_assignment(costs: CostMatrix, max_cost: Optional[float] = None) -> Matching:
    """Globally optimal min-cost matching; ties broken deterministically.

    With max_cost set, optimal pairs costing more than it are demoted to
    unmatched after the solve (the gate does not change which pairing is
    optimal, only which pairs survive).
    """
    n_rows, n_cols = costs.n_rows, costs.n_cols
    if n_rows == 0 or n_cols == 0:
        return Matching(
            pairs=[],
            unmatched_rows=list(range(n_rows)),
            unmatched_cols=list(range(n_cols)),
        )
    n = max(n_rows, n_cols)
    sentinel = 10.0 * float(costs.cost.max()) + 1.0
    square = np.full((n, n), sentinel)
    square[:n_rows, :n_cols] = costs.cost
    row_to_col = _hungarian_square(square)
    pairs: list[tuple[int, int]] = []
    matched_cols: set[int] = set()
    for r in range(n_rows):
        c = int(row_to_col[r])
        if c >= n_cols:
            continue
        if max_cost is not None and costs.cost[r, c] > max_cost:
            continue
        pairs.append((r, c))
        matched_cols.add(c)
    matched_rows = {r for r, _ in pairs}
    return Matching(
        pairs=pairs,
        unmatched_rows=[r for r in range(n_rows) if r not in matched_rows],
        unmatched_cols=[c for c in range(n_cols) if c not in matched_cols],
    )
