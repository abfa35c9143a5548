"""Motion-matching guidance objective and a toy optimization loop.

The loss is the mean squared difference between a target motion sequence
(soft-extracted from attention and aligned to the first frame) and a fixed
customized sequence. Attention is parameterized by pre-softmax logits, which
stand in for the generative latent at toy scale: the full chain
softmax -> soft extraction -> splice alignment -> loss is differentiated
analytically, and a central finite-difference oracle is provided for
checking the gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaining import MEAN_OVER_PATHS, CHAIN_MODES, align_to_first, bilinear_parts
from .extraction import ExtractionConfig, grid_coords, soft_destinations_with_mass
from .tensorio import GridShape


class GuidanceDivergence(RuntimeError):
    """Raised when the optimization loop hits a non-finite loss; carries the
    loss trace accumulated so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = np.asarray(trace, dtype=np.float64)


class ZeroMassError(ValueError):
    """A cross-frame block lost all softmax mass: the logits are so extreme
    that every entry of the block underflowed to zero."""


@dataclass(frozen=True)
class GuidanceSchedule:
    """Denoising-style schedule: guidance runs for the first
    ``guidance_fraction`` of ``total_steps``, with a fixed number of inner
    gradient steps per guidance step."""

    total_steps: int = 50
    guidance_fraction: float = 0.2
    optimize_steps_per_guidance: int = 1
    step_size: float = 0.1

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.guidance_fraction <= 1.0:
            raise ValueError(f"guidance_fraction must be in [0, 1], got {self.guidance_fraction}")
        if self.optimize_steps_per_guidance < 1:
            raise ValueError("optimize_steps_per_guidance must be >= 1")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")


def guidance_step_count(total_steps: int, fraction: float) -> int:
    """ceil(fraction * total_steps), guarded against float residue so that
    e.g. (50, 0.2) is exactly 10."""
    return math.ceil(round(fraction * total_steps, 9))


def guidance_loss(m_tgt: np.ndarray, m_final: np.ndarray) -> float:
    """Mean squared difference over all f*h*w*2 components."""
    a = np.asarray(m_tgt, dtype=np.float64)
    b = np.asarray(m_final, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    return float(((a - b) ** 2).mean())


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_inputs(params, shape: GridShape, m_final, cfg: ExtractionConfig):
    if cfg.mode != "soft":
        raise ValueError("gradient-based guidance requires soft extraction mode")
    logits = np.asarray(params, dtype=np.float64)
    n = shape.tokens
    if logits.shape != (n, n):
        raise ValueError(f"logits shape {logits.shape} does not match ({n}, {n})")
    if not np.isfinite(logits).all():
        raise ValueError("logits must be finite")
    final = np.asarray(m_final, dtype=np.float64)
    if final.shape != (shape.f, shape.h, shape.w, 2):
        raise ValueError(f"target sequence shape {final.shape} is invalid for {shape}")
    return logits, final


def _forward(logits, shape: GridShape, chain_mode):
    """Soft-extract all forward pairs from softmaxed logits and align them.

    Returns (attention, pair fields, per-pair cache, aligned sequence);
    the cache holds (block, destinations, row mass) for the backward pass.
    """
    attn = softmax_rows(logits)
    hw = shape.pixels
    coords = grid_coords(shape.h, shape.w)
    pairs = {}
    cache = {}
    for i in range(1, shape.f):
        for j in range(i):
            block = attn[j * hw : (j + 1) * hw, i * hw : (i + 1) * hw]
            with np.errstate(invalid="ignore", divide="ignore"):
                dest, den = soft_destinations_with_mass(block, coords)
            if (den <= 0).any() or not np.isfinite(dest).all():
                raise ZeroMassError(
                    f"pair ({j}, {i}): a row of the attention block has zero mass"
                )
            pairs[(j, i)] = (dest - coords).reshape(shape.h, shape.w, 2)
            cache[(j, i)] = (dest, den)
    aligned = align_to_first(pairs, shape, chain_mode)
    return attn, pairs, cache, aligned


def extraction_loss(params, shape: GridShape, m_final, cfg: ExtractionConfig,
                    chain_mode: str = MEAN_OVER_PATHS) -> float:
    """Loss only (no gradient); the forward path shared with loss_and_grad."""
    logits, final = _check_inputs(params, shape, m_final, cfg)
    _, _, _, aligned = _forward(logits, shape, chain_mode)
    return guidance_loss(aligned, final)


def loss_and_grad(params, shape: GridShape, m_final, cfg: ExtractionConfig,
                  chain_mode: str = MEAN_OVER_PATHS):
    """Loss and its exact gradient with respect to the attention logits.

    The chain rule runs through the row softmax, the normalized soft
    expectation per cross-frame block, and the bilinear splice recurrence
    (including the dependence of sample positions on earlier aligned
    frames; clamped queries contribute no positional gradient).
    """
    if chain_mode not in CHAIN_MODES:
        raise ValueError(f"unknown chain mode {chain_mode!r}")
    logits, final = _check_inputs(params, shape, m_final, cfg)
    f, h, w = shape.f, shape.h, shape.w
    hw = shape.pixels
    attn, pairs, cache, aligned = _forward(logits, shape, chain_mode)
    resid = aligned - final
    loss = float((resid**2).mean())

    coords = grid_coords(h, w)
    u_grid, v_grid = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    g_frames = (2.0 / resid.size) * resid  # d loss / d aligned, accumulated in place
    g_fields = {key: np.zeros((h, w, 2)) for key in pairs}

    for i in range(f - 1, 0, -1):
        scale = 1.0 / i if chain_mode == MEAN_OVER_PATHS else 1.0 / f
        gi = g_frames[i] * scale
        for j in range(i):
            g_frames[j] += gi  # additive path of the splice
            field = pairs[(j, i)]
            qu = u_grid + aligned[j, :, :, 0]
            qv = v_grid + aligned[j, :, :, 1]
            x0, x1, y0, y1, fx, fy, in_u, in_v = bilinear_parts(qu, qv, h, w)
            w00 = ((1.0 - fx) * (1.0 - fy))[..., None]
            w01 = (fx * (1.0 - fy))[..., None]
            w10 = ((1.0 - fx) * fy)[..., None]
            w11 = (fx * fy)[..., None]
            gf = g_fields[(j, i)]
            np.add.at(gf, (y0, x0), gi * w00)
            np.add.at(gf, (y0, x1), gi * w01)
            np.add.at(gf, (y1, x0), gi * w10)
            np.add.at(gf, (y1, x1), gi * w11)
            # sample moves with the query only where the query is unclamped
            dv_du = (1.0 - fy)[..., None] * (field[y0, x1] - field[y0, x0]) + fy[..., None] * (
                field[y1, x1] - field[y1, x0]
            )
            dv_dv = (1.0 - fx)[..., None] * (field[y1, x0] - field[y0, x0]) + fx[..., None] * (
                field[y1, x1] - field[y0, x1]
            )
            g_frames[j, :, :, 0] += (gi * dv_du).sum(axis=-1) * in_u
            g_frames[j, :, :, 1] += (gi * dv_dv).sum(axis=-1) * in_v

    g_attn = np.zeros_like(attn)
    for (j, i), gf in g_fields.items():
        dest, den = cache[(j, i)]
        g_dest = gf.reshape(hw, 2)
        g_num = g_dest / den[:, None]
        g_den = -(g_dest * dest).sum(axis=1) / den
        g_block = g_num @ coords.T + g_den[:, None]
        g_attn[j * hw : (j + 1) * hw, i * hw : (i + 1) * hw] += g_block

    row_dot = (g_attn * attn).sum(axis=1, keepdims=True)
    g_logits = attn * (g_attn - row_dot)
    return loss, g_logits


def central_difference(fn, x: np.ndarray, epsilon: float) -> np.ndarray:
    """Generic central-difference gradient of a scalar function."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    grad = np.zeros_like(x, dtype=np.float64)
    flat_grad = grad.reshape(-1)
    base = np.array(x, dtype=np.float64)
    flat = base.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + epsilon
        hi = fn(base)
        flat[idx] = orig - epsilon
        lo = fn(base)
        flat[idx] = orig
        flat_grad[idx] = (hi - lo) / (2.0 * epsilon)
    return grad


def fd_gradient(params, shape: GridShape, m_final, cfg: ExtractionConfig, epsilon: float,
                chain_mode: str = MEAN_OVER_PATHS) -> np.ndarray:
    """Finite-difference oracle for loss_and_grad."""
    logits, final = _check_inputs(params, shape, m_final, cfg)
    return central_difference(
        lambda x: extraction_loss(x, shape, final, cfg, chain_mode), logits, epsilon
    )


def optimize(params0, shape: GridShape, m_final, schedule: GuidanceSchedule,
             cfg: ExtractionConfig, chain_mode: str = MEAN_OVER_PATHS):
    """Plain gradient descent on the logits for
    guidance_step_count(T, fraction) * optimize_steps_per_guidance steps.

    Returns (optimized params, loss trace). The trace holds the loss before
    any update followed by the loss after each update; it is empty when the
    schedule yields zero steps. Aborts with GuidanceDivergence on a
    non-finite loss.
    """
    steps = (
        guidance_step_count(schedule.total_steps, schedule.guidance_fraction)
        * schedule.optimize_steps_per_guidance
    )
    params = np.array(params0, dtype=np.float64)
    if steps == 0:
        return params, np.zeros(0, dtype=np.float64)
    loss, grad = loss_and_grad(params, shape, m_final, cfg, chain_mode)
    trace = [loss]
    if not math.isfinite(loss):
        raise GuidanceDivergence("non-finite loss at the starting point", trace)
    for _ in range(steps):
        params = params - schedule.step_size * grad
        if not np.isfinite(params).all():
            raise GuidanceDivergence("parameters became non-finite", trace)
        try:
            loss, grad = loss_and_grad(params, shape, m_final, cfg, chain_mode)
        except ZeroMassError as exc:
            raise GuidanceDivergence(str(exc), trace) from exc
        trace.append(loss)
        if not math.isfinite(loss):
            raise GuidanceDivergence("optimization diverged to a non-finite loss", trace)
    return params, np.asarray(trace, dtype=np.float64)


def trace_csv(trace) -> str:
    lines = ["step,loss"]
    for step, value in enumerate(np.asarray(trace, dtype=np.float64)):
        lines.append(f"{step},{value:.17g}")
    return "\n".join(lines) + "\n"
