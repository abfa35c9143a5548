"""Semantic correspondence between target and reference foreground pixels.

Candidate matches are scored by cosine distance in feature space and
resolved globally with the Hungarian algorithm (shortest augmenting path
formulation with dual potentials). Rectangular problems are padded square
with a constant strictly exceeding max(cost) * min(n, m), so padding is
never preferred over a real match. Ties between equal-cost optimal
assignments are broken lexicographically by ascending row then column,
realized as a lexicographically minimal perfect matching on the graph of
zero-reduced-cost edges.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

METHOD_HUNGARIAN = 0
METHOD_NN_FALLBACK = 1

BRUTE_FORCE_LIMIT = 8


@dataclass
class CorrespondenceMap:
    """Matched (target, reference) foreground pixel pairs, sorted by target
    flat index. method is 0 for Hungarian matches (injective) and 1 for
    nearest-neighbor fallback matches (duplicates allowed)."""

    tgt_index: np.ndarray
    ref_index: np.ndarray
    cost: np.ndarray
    method: np.ndarray

    def __len__(self):
        return len(self.tgt_index)

    def validate(self):
        n = len(self.tgt_index)
        if not (len(self.ref_index) == len(self.cost) == len(self.method) == n):
            raise ValueError("correspondence arrays have mismatched lengths")
        if n and len(np.unique(self.tgt_index)) != n:
            raise ValueError("target indices must be unique")
        hung = self.ref_index[self.method == METHOD_HUNGARIAN]
        if len(np.unique(hung)) != len(hung):
            raise ValueError("hungarian matches must be injective on reference indices")
        if (self.cost < 0).any():
            raise ValueError("match costs must be nonnegative")

    def to_records(self):
        from . import tensorio

        table = np.stack(
            [
                self.tgt_index.astype(np.float32),
                self.ref_index.astype(np.float32),
                self.cost.astype(np.float32),
            ],
            axis=1,
        )
        return (
            tensorio.float_record(tensorio.CORRESPONDENCE, table),
            tensorio.byte_record(tensorio.CORRESPONDENCE_METHOD, self.method),
        )

    @classmethod
    def from_records(cls, table_record, method_record):
        table = np.asarray(table_record.data, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != 3:
            raise ValueError(f"correspondence record must be N x 3, got {table.shape}")
        cmap = cls(
            tgt_index=table[:, 0].astype(np.int64),
            ref_index=table[:, 1].astype(np.int64),
            cost=table[:, 2].copy(),
            method=np.asarray(method_record.data, dtype=np.uint8).reshape(-1),
        )
        cmap.validate()
        return cmap


def foreground_indices(mask: np.ndarray) -> np.ndarray:
    """Ascending flat indices of foreground (value 1) pixels."""
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return np.flatnonzero(m.reshape(-1) == 1)


def feature_cost(feat_tgt, feat_ref, mask_tgt, mask_ref) -> np.ndarray:
    """Cosine-distance cost matrix (|FG_tgt| x |FG_ref|).

    Rows/columns follow ascending flat foreground order. Zero-norm feature
    vectors are given cosine 0, i.e. cost 1. Costs are clipped at 0 to guard
    against negative rounding residue.
    """
    ft = np.asarray(feat_tgt, dtype=np.float64)
    fr = np.asarray(feat_ref, dtype=np.float64)
    if ft.ndim != 3 or fr.ndim != 3:
        raise ValueError("feature grids must be h x w x d")
    if ft.shape[2] != fr.shape[2]:
        raise ValueError(f"feature dims differ: {ft.shape[2]} vs {fr.shape[2]}")
    fg_t = foreground_indices(mask_tgt)
    fg_r = foreground_indices(mask_ref)
    if len(fg_t) == 0 or len(fg_r) == 0:
        raise ValueError("both foregrounds must be nonempty")

    def unit_rows(grid, idx):
        rows = grid.reshape(-1, grid.shape[2])[idx]
        norms = np.linalg.norm(rows, axis=1)
        out = np.zeros_like(rows)
        nz = norms > 0
        out[nz] = rows[nz] / norms[nz, None]
        return out

    cost = 1.0 - unit_rows(ft, fg_t) @ unit_rows(fr, fg_r).T
    return np.maximum(cost, 0.0)


def _solve_square(cost: np.ndarray):
    """Shortest-augmenting-path assignment on a square matrix.

    Returns (col_of_row, u, v): an optimal assignment plus dual potentials
    with cost[i, j] - u[i] - v[j] >= 0 (up to rounding) everywhere and == 0
    on matched pairs.
    """
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n + 1)
    col_row = np.full(n + 1, -1, dtype=np.int64)  # column -> assigned row; index n is virtual
    for i in range(n):
        col_row[n] = i
        j0 = n
        minv = np.full(n, np.inf)
        way = np.full(n, -1, dtype=np.int64)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            cur = cost[i0, :] - u[i0] - v[:n]
            better = ~used[:n] & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            slack = np.where(used[:n], np.inf, minv)
            j1 = int(np.argmin(slack))
            delta = slack[j1]
            used_cols = np.flatnonzero(used)
            u[col_row[used_cols]] += delta
            v[used_cols] -= delta
            minv[~used[:n]] -= delta
            j0 = j1
            if col_row[j0] == -1:
                break
        while j0 != n:
            j1 = way[j0]
            col_row[j0] = col_row[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        col_of_row[col_row[j]] = j
    return col_of_row, u, v[:n]


def _augment(r, adjacency, row_of_col, col_of_row, usable, visited):
    for j in adjacency[r]:
        if visited[j] or not usable[j]:
            continue
        visited[j] = True
        holder = row_of_col[j]
        if holder < 0 or _augment(holder, adjacency, row_of_col, col_of_row, usable, visited):
            row_of_col[j] = r
            col_of_row[r] = j
            return True
    return False


def _lexicographic_pairs(sq, u, v, col_of_row, n, m, tol):
    """Rewrite an optimal square assignment into the lexicographically
    smallest one (by ascending real row, then column), moving only along
    tight edges so total cost is preserved. Padded columns rank after all
    real columns, i.e. leaving a real row unmatched is a last resort."""
    s = sq.shape[0]
    tight = (sq - u[:, None] - v[None, :]) <= tol
    adjacency = [np.flatnonzero(tight[r]) for r in range(s)]
    row_of_col = np.full(s, -1, dtype=np.int64)
    for r in range(s):
        row_of_col[col_of_row[r]] = r
    usable = np.ones(s, dtype=bool)
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 2 * s + 100))
    try:
        for r in range(n):
            current = col_of_row[r]
            candidates = adjacency[r]
            ordered = np.concatenate([candidates[candidates < m], candidates[candidates >= m]])
            chosen = current
            for jc in ordered:
                if jc == current:
                    chosen = current
                    break
                if not usable[jc]:
                    continue
                displaced = row_of_col[jc]
                col_of_row[r] = jc
                row_of_col[jc] = r
                row_of_col[current] = -1
                visited = np.zeros(s, dtype=bool)
                visited[jc] = True
                if _augment(displaced, adjacency, row_of_col, col_of_row, usable, visited):
                    chosen = jc
                    break
                col_of_row[r] = current
                row_of_col[current] = r
                row_of_col[jc] = displaced
            usable[chosen] = False
    finally:
        sys.setrecursionlimit(old_limit)
    rows = np.array([r for r in range(n) if col_of_row[r] < m], dtype=np.int64)
    cols = col_of_row[rows]
    return rows, cols


def hungarian(cost):
    """Minimum-cost injective assignment of the smaller side into the larger.

    Returns (rows, cols, total): matched row/column index arrays sorted by
    ascending row, and the total cost accumulated in that order.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0 or c.shape[1] == 0:
        raise ValueError("cost matrix must be non-empty and 2-D")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix must be finite")
    if (c < 0).any():
        raise ValueError("cost matrix must be nonnegative")
    n, m = c.shape
    s = max(n, m)
    if n == m:
        sq = c.copy()
    else:
        pad = float(c.max()) * min(n, m) + 1.0
        sq = np.full((s, s), pad)
        sq[:n, :m] = c
    col_of_row, u, v = _solve_square(sq)
    tol = 1e-9 * max(1.0, float(np.abs(sq).max()))
    rows, cols = _lexicographic_pairs(sq, u, v, col_of_row, n, m, tol)
    total = 0.0
    for r, j in zip(rows, cols):
        total += float(c[r, j])
    return rows, cols, total


def brute_force_assignment(cost):
    """Exhaustive assignment oracle; identical contract and tie rule as
    hungarian(). Only valid for min(n, m) <= 8."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0 or c.shape[1] == 0:
        raise ValueError("cost matrix must be non-empty and 2-D")
    n, m = c.shape
    if min(n, m) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to min(n, m) <= {BRUTE_FORCE_LIMIT}")
    best_total = None
    best_pairs = None
    if n <= m:
        candidates = (
            tuple(zip(range(n), cols)) for cols in permutations(range(m), n)
        )
    else:
        candidates = (
            tuple(zip(rows, cols))
            for rows in combinations(range(n), m)
            for cols in permutations(range(m))
        )
    for pairs in candidates:
        total = 0.0
        for r, j in pairs:
            total += float(c[r, j])
        if best_total is None or total < best_total or (total == best_total and pairs < best_pairs):
            best_total = total
            best_pairs = pairs
    rows = np.array([r for r, _ in best_pairs], dtype=np.int64)
    cols = np.array([j for _, j in best_pairs], dtype=np.int64)
    return rows, cols, best_total


def build_correspondence(feat_tgt, feat_ref, mask_tgt, mask_ref) -> CorrespondenceMap:
    """Hungarian matching over foreground pixels; when the target foreground
    is larger than the reference one, leftover target pixels fall back to
    their plain feature nearest neighbor (non-injective)."""
    fg_t = foreground_indices(mask_tgt)
    fg_r = foreground_indices(mask_ref)
    cost = feature_cost(feat_tgt, feat_ref, mask_tgt, mask_ref)
    rows, cols, _ = hungarian(cost)

    tgt = list(fg_t[rows])
    ref = list(fg_r[cols])
    costs = [float(cost[r, j]) for r, j in zip(rows, cols)]
    methods = [METHOD_HUNGARIAN] * len(rows)

    if len(fg_t) > len(fg_r):
        matched = set(int(r) for r in rows)
        for r in range(len(fg_t)):
            if r in matched:
                continue
            j = int(np.argmin(cost[r]))  # first minimum = smaller flat index
            tgt.append(fg_t[r])
            ref.append(fg_r[j])
            costs.append(float(cost[r, j]))
            methods.append(METHOD_NN_FALLBACK)

    order = np.argsort(np.asarray(tgt, dtype=np.int64), kind="stable")
    cmap = CorrespondenceMap(
        tgt_index=np.asarray(tgt, dtype=np.int64)[order],
        ref_index=np.asarray(ref, dtype=np.int64)[order],
        cost=np.asarray(costs, dtype=np.float64)[order],
        method=np.asarray(methods, dtype=np.uint8)[order],
    )
    cmap.validate()
    return cmap
