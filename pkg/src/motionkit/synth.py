"""Synthetic oracles: attention tensors with known extraction ground truth,
feature grids with a known correspondence, and parametric flow families.

Everything here is deterministic given an explicit seed, and every
construction states exactly what the downstream modules must recover from
it, so tests can assert recovery instead of inventing expected values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspond import METHOD_HUNGARIAN, CorrespondenceMap, foreground_indices
from .extraction import grid_coords
from .tensorio import GridShape

FLOW_KINDS = ("constant", "rotation", "zoom", "random")


@dataclass(frozen=True)
class FlowSpec:
    """Parametric flow family over a latent grid.

    constant: every pixel moves by (dx, dy) per unit frame gap.
    rotation: omega_deg per unit frame gap about the grid center.
    zoom: displacement of the rate^(j-i)-fold scaling about the center.
    random: seeded integer displacements bounded by ``bound`` per component;
        forward and backward chains are built independently by composing
        per-step maps, so cumulative pairs stay integer and in-grid.
    """

    kind: str
    shape: GridShape
    dx: float = 0.0
    dy: float = 0.0
    omega_deg: float = 0.0
    rate: float = 1.0
    bound: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if self.kind == "zoom" and self.rate <= 0:
            raise ValueError(f"zoom rate must be positive, got {self.rate}")
        if self.kind == "random" and self.bound < 0:
            raise ValueError(f"bound must be >= 0, got {self.bound}")


def _clip_destinations(dest_u, dest_v, h, w):
    cu = np.clip(dest_u, 0.0, float(w - 1))
    cv = np.clip(dest_v, 0.0, float(h - 1))
    clipped = (cu != dest_u) | (cv != dest_v)
    return cu, cv, clipped


def _parametric_destinations(spec: FlowSpec, gap: int, u, v):
    h, w = spec.shape.h, spec.shape.w
    cu, cv = (w - 1) / 2.0, (h - 1) / 2.0
    if spec.kind == "constant":
        return u + gap * spec.dx, v + gap * spec.dy
    if spec.kind == "rotation":
        theta = np.deg2rad(spec.omega_deg * gap)
        ru, rv = u - cu, v - cv
        return (
            ru * np.cos(theta) - rv * np.sin(theta) + cu,
            ru * np.sin(theta) + rv * np.cos(theta) + cv,
        )
    if spec.kind == "zoom":
        factor = spec.rate**gap
        return cu + factor * (u - cu), cv + factor * (v - cv)
    raise ValueError(spec.kind)


def generate_flow(spec: FlowSpec):
    """All ordered-pair motion fields for the spec, plus per-pair clip masks.

    Returns (flows, clipped): flows maps (i, j) -> (h, w, 2) field for every
    i != j; clipped maps (i, j) -> boolean (h, w) mask of pixels whose
    requested destination was pulled back onto the grid.
    """
    f, h, w = spec.shape.f, spec.shape.h, spec.shape.w
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    flows: dict[tuple[int, int], np.ndarray] = {}
    clip_masks: dict[tuple[int, int], np.ndarray] = {}

    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        coords = grid_coords(h, w)

        def random_step_maps(count):
            maps = []
            clips = []
            for _ in range(count):
                du = rng.integers(-spec.bound, spec.bound + 1, size=(h, w))
                dv = rng.integers(-spec.bound, spec.bound + 1, size=(h, w))
                cu, cv, clipped = _clip_destinations(u + du, v + dv, h, w)
                maps.append((cv.astype(np.int64) * w + cu.astype(np.int64)).reshape(-1))
                clips.append(clipped.reshape(-1))
            return maps, clips

        def compose(maps, clips, start, stop, step):
            # cumulative destination map and clip union along the chain
            dest = np.arange(h * w, dtype=np.int64)
            clip = np.zeros(h * w, dtype=bool)
            for k in range(start, stop, step):
                clip = clip | clips[k][dest]
                dest = maps[k][dest]
            return dest, clip

        fwd_maps, fwd_clips = random_step_maps(max(f - 1, 0))
        bwd_maps, bwd_clips = random_step_maps(max(f - 1, 0))
        for i in range(f):
            for j in range(f):
                if i == j:
                    continue
                if j > i:
                    dest, clip = compose(fwd_maps, fwd_clips, i, j, 1)
                else:
                    # backward chain: step k maps frame k+1 to frame k
                    dest = np.arange(h * w, dtype=np.int64)
                    clip = np.zeros(h * w, dtype=bool)
                    for k in range(i - 1, j - 1, -1):
                        clip = clip | bwd_clips[k][dest]
                        dest = bwd_maps[k][dest]
                flows[(i, j)] = (coords[dest] - coords[np.arange(h * w)]).reshape(h, w, 2)
                clip_masks[(i, j)] = clip.reshape(h, w)
        return flows, clip_masks

    for i in range(f):
        for j in range(f):
            if i == j:
                continue
            du, dv = _parametric_destinations(spec, j - i, u, v)
            cu, cv, clipped = _clip_destinations(du, dv, h, w)
            flows[(i, j)] = np.stack([cu - u, cv - v], axis=-1)
            clip_masks[(i, j)] = clipped
    return flows, clip_masks


def _integer_destinations(flow: np.ndarray, h: int, w: int, pair) -> np.ndarray:
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    du = u + flow[..., 0]
    dv = v + flow[..., 1]
    ru = np.rint(du)
    rv = np.rint(dv)
    if not (np.abs(du - ru).max() < 1e-9 and np.abs(dv - rv).max() < 1e-9):
        raise ValueError(f"pair {pair}: flow destinations are not integers")
    if ru.min() < 0 or ru.max() > w - 1 or rv.min() < 0 or rv.max() > h - 1:
        raise ValueError(f"pair {pair}: flow destinations leave the grid")
    return (rv.astype(np.int64) * w + ru.astype(np.int64)).reshape(-1)


def onehot_attention_from_flow(
    flows: dict[tuple[int, int], np.ndarray], shape: GridShape
) -> np.ndarray:
    """Attention whose rows are one-hot at p + flow(p) for every provided
    pair; diagonal blocks are identity. Hard K=1 extraction recovers the
    flows exactly."""
    n = shape.tokens
    hw = shape.pixels
    attn = np.zeros((n, n), dtype=np.float32)
    pixel = np.arange(hw)
    for i in range(shape.f):
        attn[i * hw + pixel, i * hw + pixel] = 1.0
    for (i, j), flow in sorted(flows.items()):
        dest = _integer_destinations(np.asarray(flow, dtype=np.float64), shape.h, shape.w, (i, j))
        attn[i * hw + pixel, j * hw + dest] = 1.0
    return attn


def soft_attention_from_flow(
    flows: dict[tuple[int, int], np.ndarray], shape: GridShape, beta: float
) -> np.ndarray:
    """Rows are a softmax of -beta * squared distance to p + flow(p), taken
    jointly over the diagonal block (zero self-flow) and every provided pair
    block; uncovered blocks stay zero. Rows sum to 1; larger beta
    concentrates each row on the nearest grid point to its destination."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    f, h, w = shape.f, shape.h, shape.w
    n, hw = shape.tokens, shape.pixels
    coords = grid_coords(h, w)
    scores = np.full((n, n), -np.inf, dtype=np.float64)
    zero_flow = np.zeros((h, w, 2))
    blocks = {(i, i): zero_flow for i in range(f)}
    blocks.update(flows)
    for (i, j), flow in blocks.items():
        flow = np.asarray(flow, dtype=np.float64)
        dest = coords + flow.reshape(hw, 2)
        d2 = ((coords[None, :, :] - dest[:, None, :]) ** 2).sum(axis=2)
        scores[i * hw : (i + 1) * hw, j * hw : (j + 1) * hw] = -beta * d2
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=1, keepdims=True)
    return attn.astype(np.float64)


def features_with_permutation(
    shape: GridShape, d: int, perm: dict[int, int], mask_tgt, mask_ref
):
    """Feature grids whose unique optimal correspondence is ``perm``.

    Each matched pair shares a signed unit basis vector, so matched costs
    are exactly 0 and every cross cost is 1 or 2 (>= 0.5 separation).
    Capacity is 2*d distinct vectors. Returns (features_ref, features_tgt,
    expected CorrespondenceMap).
    """
    if d < 2:
        raise ValueError(f"feature dim must be >= 2, got {d}")
    fg_t = foreground_indices(mask_tgt)
    fg_r = foreground_indices(mask_ref)
    if sorted(perm.keys()) != list(fg_t):
        raise ValueError("perm keys must be exactly the target foreground")
    if sorted(perm.values()) != list(fg_r):
        raise ValueError("perm values must be exactly the reference foreground")
    if len(fg_t) > 2 * d:
        raise ValueError(f"{len(fg_t)} foreground pixels exceed capacity 2*d={2 * d}")
    h, w = shape.h, shape.w
    feat_ref = np.zeros((h, w, d), dtype=np.float64)
    feat_tgt = np.zeros((h, w, d), dtype=np.float64)
    for rank, tgt_flat in enumerate(fg_t):
        vec = np.zeros(d)
        vec[rank % d] = 1.0 if rank < d else -1.0
        feat_tgt.reshape(-1, d)[tgt_flat] = vec
        feat_ref.reshape(-1, d)[perm[int(tgt_flat)]] = vec
    expected = CorrespondenceMap(
        tgt_index=fg_t.astype(np.int64),
        ref_index=np.array([perm[int(a)] for a in fg_t], dtype=np.int64),
        cost=np.zeros(len(fg_t)),
        method=np.full(len(fg_t), METHOD_HUNGARIAN, dtype=np.uint8),
    )
    expected.validate()
    return feat_ref, feat_tgt, expected
