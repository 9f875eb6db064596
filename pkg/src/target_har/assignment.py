"""Exact minimum-cost bipartite matching (Hungarian algorithm)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

FORBIDDEN = float("inf")


@dataclass(frozen=True)
class Matching:
    pairs: Tuple[Tuple[int, int], ...]
    total_cost: float
    unmatched_rows: Tuple[int, ...] = ()
    unmatched_cols: Tuple[int, ...] = ()


def _hungarian_square(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path Hungarian method on a square matrix.

    Returns (col_of_row, u, v) where u, v are optimal dual potentials, i.e.
    cost[i, j] - u[i] - v[j] >= 0 with equality on matched pairs.
    """
    n = cost.shape[0]
    # 1-based arrays; index 0 is the virtual root.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used[1:]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _has_perfect_matching(adj: List[List[int]], rows: Sequence[int], taken_cols: set) -> bool:
    """Kuhn's augmenting-path test for a perfect matching of `rows`."""
    match_col: dict = {}

    def augment(r: int, seen: set) -> bool:
        for c in adj[r]:
            if c in taken_cols or c in seen:
                continue
            seen.add(c)
            if c not in match_col or augment(match_col[c], seen):
                match_col[c] = r
                return True
        return False

    return all(augment(r, set()) for r in rows)


def _lexicographic_tight_matching(cost: np.ndarray, u: np.ndarray, v: np.ndarray, tol: float) -> np.ndarray:
    """Lexicographically smallest perfect matching on tight edges.

    Any perfect matching using only zero-reduced-cost edges is optimal, so this
    picks the (row, col)-lexicographic minimum among optimal matchings.
    """
    n = cost.shape[0]
    reduced = cost - u[:, None] - v[None, :]
    adj = [list(np.flatnonzero(reduced[i] <= tol)) for i in range(n)]
    chosen = np.empty(n, dtype=np.int64)
    taken: set = set()
    for i in range(n):
        for c in adj[i]:
            if c in taken:
                continue
            taken.add(c)
            if _has_perfect_matching(adj, range(i + 1, n), taken):
                chosen[i] = c
                break
            taken.discard(c)
        else:  # pragma: no cover - tolerance failure
            return None
    return chosen


def solve_assignment(costs) -> Matching:
    """Minimum-cost matching of size min(n, m); +inf entries are never matched.

    Rows or columns that can only be matched through a forbidden pair are
    reported unmatched. Ties between optimal matchings resolve to the
    lexicographically smallest (row, col) pair list.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2:
        if c.size == 0:
            c = c.reshape(0, 0)
        else:
            raise ValueError("cost matrix must be two-dimensional")
    if np.isnan(c).any():
        raise ValueError("cost matrix contains NaN")
    if np.isneginf(c).any():
        raise ValueError("cost matrix contains -inf")
    n_rows, n_cols = c.shape
    if n_rows == 0 or n_cols == 0:
        return Matching((), 0.0, tuple(range(n_rows)), tuple(range(n_cols)))

    finite = np.isfinite(c)
    size = max(n_rows, n_cols)
    if finite.any():
        shifted = c - c[finite].min()
        big = size * float(shifted[finite].max()) + 1.0
    else:
        shifted = np.zeros_like(c)
        big = 1.0
    square = np.full((size, size), big)
    square[:n_rows, :n_cols] = np.where(finite, shifted, big)

    col_of_row, u, v = _hungarian_square(square)
    # Tight edges are found with a loose tolerance, but the lexicographic
    # candidate replaces the solver's matching only on a near-exact cost tie.
    lex = _lexicographic_tight_matching(square, u, v, 1e-9 * max(1.0, big))
    if lex is not None:
        rows = np.arange(size)
        if square[rows, lex].sum() <= square[rows, col_of_row].sum() + 1e-12 * max(1.0, big):
            col_of_row = lex

    pairs = []
    for r in range(n_rows):
        col = int(col_of_row[r])
        if col < n_cols and finite[r, col]:
            pairs.append((r, col))
    matched_rows = {r for r, _ in pairs}
    matched_cols = {col for _, col in pairs}
    total = float(sum(c[r, col] for r, col in pairs))
    return Matching(
        tuple(pairs),
        total,
        tuple(r for r in range(n_rows) if r not in matched_rows),
        tuple(col for col in range(n_cols) if col not in matched_cols),
    )

