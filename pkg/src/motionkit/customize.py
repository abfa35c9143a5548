"""Content-aware customization of an aligned motion sequence.

The reference motion is split by the reference foreground mask, the
foreground part is rearranged onto target pixels through the semantic
correspondence map, the background part is completed by nearest-neighbor
inpainting over the foreground holes, the two are merged by mask, and the
result is refined with a truncated Gaussian blur. All stages operate on
(f, h, w, 2) motion sequences and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaining import sample_bilinear
from .correspond import METHOD_HUNGARIAN, CorrespondenceMap

MERGE_MASK_TARGET = "target"
MERGE_MASK_REFERENCE = "reference_verbatim"


@dataclass(frozen=True)
class CustomizeConfig:
    """Gaussian refinement and merge-mask settings. kernel radius is always
    ceil(3 * sigma); sigma 0 disables smoothing."""

    sigma: float = 1.5
    merge_mask_source: str = MERGE_MASK_TARGET

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.merge_mask_source not in (MERGE_MASK_TARGET, MERGE_MASK_REFERENCE):
            raise ValueError(f"unknown merge_mask_source {self.merge_mask_source!r}")

    @property
    def kernel_radius(self) -> int:
        return math.ceil(3.0 * self.sigma)


def _check_mask(mask, h, w):
    m = np.asarray(mask)
    if m.shape != (h, w):
        raise ValueError(f"mask shape {m.shape} does not match grid {(h, w)}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return m.astype(np.uint8)


def split_motion(motion: np.ndarray, mask_ref) -> tuple[np.ndarray, np.ndarray]:
    """Partition a sequence into foreground and background parts; zeros fill
    the complementary pixels, so the two parts sum back to the input."""
    seq = np.asarray(motion, dtype=np.float64)
    f, h, w, _ = seq.shape
    mask = _check_mask(mask_ref, h, w)
    fg = seq * mask[None, :, :, None]
    bg = seq * (1 - mask)[None, :, :, None]
    return fg, bg


def warp_motion(motion_fg: np.ndarray, cmap: CorrespondenceMap, mask_tgt) -> np.ndarray:
    """Move foreground vectors onto target pixels: each matched target pixel
    takes the reference pixel's vector, everything else is zero."""
    seq = np.asarray(motion_fg, dtype=np.float64)
    f, h, w, _ = seq.shape
    _check_mask(mask_tgt, h, w)
    n_pix = h * w
    if len(cmap) and (
        cmap.tgt_index.min() < 0
        or cmap.tgt_index.max() >= n_pix
        or cmap.ref_index.min() < 0
        or cmap.ref_index.max() >= n_pix
    ):
        raise ValueError("correspondence indices out of grid")
    out = np.zeros_like(seq)
    flat_in = seq.reshape(f, n_pix, 2)
    flat_out = out.reshape(f, n_pix, 2)
    flat_out[:, cmap.tgt_index] = flat_in[:, cmap.ref_index]
    return out


def inpaint_background(motion_bg: np.ndarray, mask_ref) -> np.ndarray:
    """Fill foreground holes with the value of the Euclidean-nearest
    background pixel (integer grid distance, ties toward the smaller flat
    index). Background pixels pass through bit-identical."""
    seq = np.asarray(motion_bg, dtype=np.float64)
    f, h, w, _ = seq.shape
    mask = _check_mask(mask_ref, h, w)
    flat_mask = mask.reshape(-1)
    fg = np.flatnonzero(flat_mask == 1)
    bg = np.flatnonzero(flat_mask == 0)
    if len(bg) == 0:
        raise ValueError("inpainting requires at least one background pixel")
    out = seq.copy()
    if len(fg) == 0:
        return out
    fu, fv = fg % w, fg // w
    bu, bv = bg % w, bg // w
    d2 = (fu[:, None] - bu[None, :]) ** 2 + (fv[:, None] - bv[None, :]) ** 2
    nearest = bg[np.argmin(d2, axis=1)]  # first minimum = smallest flat index
    flat = out.reshape(f, h * w, 2)
    flat[:, fg] = flat[:, nearest]
    return out


def merge(motion_fg: np.ndarray, motion_bg: np.ndarray, mask) -> np.ndarray:
    """Per-pixel select: foreground pixels from motion_fg, background from
    motion_bg."""
    a = np.asarray(motion_fg, dtype=np.float64)
    b = np.asarray(motion_bg, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    f, h, w, _ = a.shape
    m = _check_mask(mask, h, w)[None, :, :, None]
    return np.where(m == 1, a, b)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized truncated 2-D Gaussian, radius ceil(3 * sigma)."""
    radius = math.ceil(3.0 * sigma)
    if radius == 0:
        return np.ones((1, 1), dtype=np.float64)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs[None, :] ** 2 + xs[:, None] ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def smooth(motion: np.ndarray, cfg: CustomizeConfig) -> np.ndarray:
    """Per-frame, per-component 2-D convolution with the truncated Gaussian,
    reflect padding (mirror without repeating the border sample). The
    accumulation order over kernel taps is fixed, so output is deterministic."""
    seq = np.asarray(motion, dtype=np.float64)
    if cfg.sigma == 0 or cfg.kernel_radius == 0:
        return seq.copy()
    f, h, w, _ = seq.shape
    r = cfg.kernel_radius
    kernel = gaussian_kernel(cfg.sigma)
    out = np.zeros_like(seq)
    for frame in range(f):
        for comp in range(2):
            padded = np.pad(seq[frame, :, :, comp], r, mode="reflect")
            acc = np.zeros((h, w), dtype=np.float64)
            for dy in range(2 * r + 1):
                for dx in range(2 * r + 1):
                    acc += kernel[dy, dx] * padded[dy : dy + h, dx : dx + w]
            out[frame, :, :, comp] = acc
    return out


def customize_pipeline(
    motion_ref: np.ndarray,
    mask_ref,
    mask_tgt,
    cmap: CorrespondenceMap,
    cfg: CustomizeConfig,
) -> np.ndarray:
    """split -> warp -> inpaint -> merge -> smooth, in that order."""
    fg, bg = split_motion(motion_ref, mask_ref)
    warped = warp_motion(fg, cmap, mask_tgt)
    inpainted = inpaint_background(bg, mask_ref)
    mask = mask_tgt if cfg.merge_mask_source == MERGE_MASK_TARGET else mask_ref
    merged = merge(warped, inpainted, mask)
    return smooth(merged, cfg)


def scale_motion(motion: np.ndarray, s: float) -> np.ndarray:
    """Zoom a motion sequence about the grid center: vectors are sampled at
    center + (p - center) / s and scaled by s. s = 1 is the identity."""
    if s <= 0:
        raise ValueError(f"scale must be positive, got {s}")
    seq = np.asarray(motion, dtype=np.float64)
    f, h, w, _ = seq.shape
    cu, cv = (w - 1) / 2.0, (h - 1) / 2.0
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    qu = cu + (u - cu) / s
    qv = cv + (v - cv) / s
    out = np.empty_like(seq)
    for frame in range(f):
        out[frame] = s * sample_bilinear(seq[frame], qu, qv)
    return out


def merge_multi(
    parts: list[tuple[np.ndarray, np.ndarray]], background: np.ndarray
) -> np.ndarray:
    """Combine per-subject motion sequences over a shared background; the
    subject masks must be pairwise disjoint."""
    out = np.asarray(background, dtype=np.float64).copy()
    f, h, w, _ = out.shape
    coverage = np.zeros((h, w), dtype=np.int64)
    for seq, mask in parts:
        seq = np.asarray(seq, dtype=np.float64)
        if seq.shape != out.shape:
            raise ValueError(f"part shape {seq.shape} does not match {out.shape}")
        m = _check_mask(mask, h, w)
        coverage += m
        if (coverage > 1).any():
            raise ValueError("subject masks overlap")
        sel = m == 1
        out[:, sel] = seq[:, sel]
    return out
