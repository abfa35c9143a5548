"""Per-pixel motion extraction from cross-frame attention blocks.

Coordinates are (u, v) with u the column index (increasing rightward) and
v the row index (increasing downward), in latent-pixel units. Flat pixel
indices are row-major: q = v * w + u.

Two extraction modes:
  * ``hard`` — destination is the unweighted mean of the coordinates of the
    K largest attention entries in the row (ties broken toward the smaller
    flat index). Piecewise constant in the attention, hence not usable for
    gradients.
  * ``soft`` — destination is the full attention-weighted expectation of the
    column coordinates, normalized by the row mass. Smooth in the attention
    entries and invariant to positive row rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorio import GridShape


@dataclass(frozen=True)
class ExtractionConfig:
    """Top-K count and extraction mode. k is ignored in soft mode."""

    k: int = 3
    mode: str = "hard"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"mode must be 'hard' or 'soft', got {self.mode!r}")


def grid_coords(h: int, w: int) -> np.ndarray:
    """(h*w, 2) float64 array of (u, v) coordinates in flat row-major order."""
    v, u = np.divmod(np.arange(h * w), w)
    return np.stack([u, v], axis=1).astype(np.float64)


def slice_pair(attention: np.ndarray, shape: GridShape, n: int, m: int) -> np.ndarray:
    """Cut the (h*w x h*w) cross-frame block relating frame n pixels (rows)
    to frame m pixels (columns). Errors if any row of the block is all-zero."""
    if not (0 <= n < shape.f) or not (0 <= m < shape.f):
        raise ValueError(f"frame indices ({n}, {m}) out of range for f={shape.f}")
    hw = shape.pixels
    block = np.asarray(attention, dtype=np.float64)[
        n * hw : (n + 1) * hw, m * hw : (m + 1) * hw
    ]
    row_sums = block.sum(axis=1)
    if (row_sums <= 0).any():
        bad = int(np.argmax(row_sums <= 0))
        raise ValueError(f"pair ({n}->{m}): row {bad} of the attention slice is all-zero")
    return block


def soft_destinations_with_mass(pair: np.ndarray, coords: np.ndarray):
    """Row-normalized expected destination coordinates plus the row mass.

    Summation runs over ascending flat column index (numpy's deterministic
    reduction), so results do not depend on scheduling. Returns
    (destinations (h*w, 2), row mass (h*w,)).
    """
    weighted = pair[:, :, None] * coords[None, :, :]
    num = weighted.sum(axis=1)
    den = pair.sum(axis=1)
    return num / den[:, None], den


def soft_destinations(pair: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Row-normalized expected destination coordinates, (h*w, 2)."""
    return soft_destinations_with_mass(pair, coords)[0]


def topk_indices(pair: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries per row, ties toward the smaller
    flat index, returned as an (h*w, k) array."""
    order = np.argsort(-pair, axis=1, kind="stable")
    return order[:, :k]


def extract_motion(pair: np.ndarray, h: int, w: int, cfg: ExtractionConfig) -> np.ndarray:
    """Motion field (h, w, 2) from one cross-frame block; [..., 0] is the u
    component, [..., 1] the v component."""
    hw = h * w
    if pair.shape != (hw, hw):
        raise ValueError(f"pair shape {pair.shape} does not match grid {h}x{w}")
    if cfg.mode == "hard" and cfg.k > hw:
        raise ValueError(f"k={cfg.k} exceeds {hw} pixels")
    coords = grid_coords(h, w)
    if cfg.mode == "hard":
        idx = topk_indices(np.asarray(pair, dtype=np.float64), cfg.k)
        dest = coords[idx].mean(axis=1)
    else:
        dest = soft_destinations(np.asarray(pair, dtype=np.float64), coords)
    return (dest - coords).reshape(h, w, 2)


def extract_all_pairs(
    attention: np.ndarray, shape: GridShape, cfg: ExtractionConfig
) -> dict[tuple[int, int], np.ndarray]:
    """Motion fields for every ordered frame pair (i, j), i != j, keyed and
    iterated in ascending (i, j) order."""
    fields = {}
    for i in range(shape.f):
        for j in range(shape.f):
            if i == j:
                continue
            block = slice_pair(attention, shape, i, j)
            fields[(i, j)] = extract_motion(block, shape.h, shape.w, cfg)
    return fields


def mse_vs_flow(extracted: np.ndarray, gt: np.ndarray) -> float:
    """Mean over pixels of the squared Euclidean norm of the vector difference."""
    if extracted.shape != gt.shape:
        raise ValueError(f"field shapes differ: {extracted.shape} vs {gt.shape}")
    diff = np.asarray(extracted, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    return float((diff**2).sum(axis=-1).mean())


def sweep_selection(
    samples: list[tuple[int, int, np.ndarray]],
    gt_flows: dict[tuple[int, int], np.ndarray],
    shape: GridShape,
    cfg: ExtractionConfig,
):
    """Mean extraction error per (timestep, block) cell.

    ``samples`` holds (t, b, attention) triples; several samples may share a
    cell. For each sample, motion is extracted for exactly the frame pairs
    covered by ``gt_flows`` and compared with mse_vs_flow; the cell value is
    the mean over all its samples and pairs. Returns (table, argmin) where
    table maps (t, b) to the mean MSE and argmin is the lowest cell
    (lexicographically smallest (t, b) on ties).
    """
    if not samples:
        raise ValueError("sweep requires at least one sample")
    if not gt_flows:
        raise ValueError("sweep requires ground-truth flow for at least one pair")
    sums: dict[tuple[int, int], float] = {}
    counts: dict[tuple[int, int], int] = {}
    for t, b, attention in samples:
        for (i, j), gt in sorted(gt_flows.items()):
            block = slice_pair(attention, shape, i, j)
            field = extract_motion(block, shape.h, shape.w, cfg)
            cell = (int(t), int(b))
            sums[cell] = sums.get(cell, 0.0) + mse_vs_flow(field, gt)
            counts[cell] = counts.get(cell, 0) + 1
    table = {cell: sums[cell] / counts[cell] for cell in sorted(sums)}
    argmin = min(table, key=lambda cell: (table[cell], cell))
    return table, argmin


def sweep_csv(table: dict[tuple[int, int], float], argmin: tuple[int, int]) -> str:
    """Render the sweep table as CSV with a trailing argmin comment line."""
    lines = ["t,b,mse"]
    for (t, b), mse in sorted(table.items()):
        lines.append(f"{t},{b},{mse:.17g}")
    lines.append(f"# argmin t={argmin[0]} b={argmin[1]}")
    return "\n".join(lines) + "\n"
