"""Alignment of pairwise inter-frame motion to the first frame.

A cumulative field taking frame 0 to frame j composes with a j->i step by
sampling the step field at the displaced position (bilinear, clamped to the
grid) and adding. Frame i's aligned field averages the compositions over all
intermediate frames j < i; the ``verbatim_one_over_f`` mode divides by the
frame count f instead of the number of summed paths i, which damps early
frames but mirrors the printed recurrence it was taken from.
"""

from __future__ import annotations

import numpy as np

from .tensorio import GridShape

MEAN_OVER_PATHS = "mean_over_paths"
VERBATIM_ONE_OVER_F = "verbatim_one_over_f"
CHAIN_MODES = (MEAN_OVER_PATHS, VERBATIM_ONE_OVER_F)


def bilinear_parts(qu: np.ndarray, qv: np.ndarray, h: int, w: int):
    """Corner indices and weights for clamped bilinear sampling.

    Returns (x0, x1, y0, y1, fx, fy, inside_u, inside_v); ``inside_*`` mark
    queries whose coordinate was not clamped, i.e. where the sample still
    moves with the query.
    """
    inside_u = (qu > 0.0) & (qu < w - 1)
    inside_v = (qv > 0.0) & (qv < h - 1)
    cu = np.clip(qu, 0.0, float(w - 1))
    cv = np.clip(qv, 0.0, float(h - 1))
    x0 = np.floor(cu).astype(np.int64)
    y0 = np.floor(cv).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cu - x0
    fy = cv - y0
    return x0, x1, y0, y1, fx, fy, inside_u, inside_v


def sample_bilinear(field: np.ndarray, qu: np.ndarray, qv: np.ndarray) -> np.ndarray:
    """Sample an (h, w, 2) field at float coordinates, clamping queries to
    [0, w-1] x [0, h-1]. Returns an array of shape qu.shape + (2,)."""
    h, w = field.shape[:2]
    x0, x1, y0, y1, fx, fy, _, _ = bilinear_parts(qu, qv, h, w)
    f00 = field[y0, x0]
    f01 = field[y0, x1]
    f10 = field[y1, x0]
    f11 = field[y1, x1]
    fx = fx[..., None]
    fy = fy[..., None]
    top = f00 * (1.0 - fx) + f01 * fx
    bottom = f10 * (1.0 - fx) + f11 * fx
    return top * (1.0 - fy) + bottom * fy


def splice(base: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Compose a cumulative 0->j field with a j->i step field.

    result(p) = base(p) + step sampled at p + base(p).
    """
    if base.shape != step.shape:
        raise ValueError(f"field shapes differ: {base.shape} vs {step.shape}")
    h, w = base.shape[:2]
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    qu = u + base[..., 0]
    qv = v + base[..., 1]
    return base + sample_bilinear(step, qu, qv)


def align_to_first(
    pairs: dict[tuple[int, int], np.ndarray],
    shape: GridShape,
    mode: str = MEAN_OVER_PATHS,
) -> np.ndarray:
    """Aligned motion sequence (f, h, w, 2); entry i is the cumulative
    displacement from frame 0 to frame i, entry 0 is identically zero.

    Requires pairs[(j, i)] for every 0 <= j < i < f. Frames are processed in
    ascending i and the inner sum in ascending j, so the result is
    deterministic.
    """
    if mode not in CHAIN_MODES:
        raise ValueError(f"unknown chain mode {mode!r}")
    f, h, w = shape.f, shape.h, shape.w
    aligned = np.zeros((f, h, w, 2), dtype=np.float64)
    for i in range(1, f):
        acc = np.zeros((h, w, 2), dtype=np.float64)
        for j in range(i):
            if (j, i) not in pairs:
                raise ValueError(f"missing motion pair ({j}, {i})")
            step = np.asarray(pairs[(j, i)], dtype=np.float64)
            if step.shape != (h, w, 2):
                raise ValueError(
                    f"pair ({j}, {i}) has shape {step.shape}, expected {(h, w, 2)}"
                )
            if not np.isfinite(step).all():
                raise ValueError(f"pair ({j}, {i}) contains non-finite components")
            acc += splice(aligned[j], step)
        scale = 1.0 / i if mode == MEAN_OVER_PATHS else 1.0 / f
        aligned[i] = acc * scale
    return aligned
