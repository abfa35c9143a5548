"""Subcommand front-end running the motion pipeline on container files.

Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 numeric
failure. Inputs are never modified and identical inputs plus identical
configuration produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import chaining, correspond, customize, extraction, guidance, synth, tensorio
from .config import resolve_config

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _add_common(parser, need_in=True, need_out=True):
    parser.add_argument("--config", help="key=value config file (flags override it)")
    if need_in:
        parser.add_argument("--in", dest="in_path", help="input container path")
    if need_out:
        parser.add_argument("--out", dest="out_path", help="output path")
    parser.add_argument(
        "--threads",
        type=int,
        help="cap on worker parallelism; results never depend on it (default: 1)",
    )


def _add_extraction_flags(parser):
    parser.add_argument("--k", type=int, help="top-K count for hard extraction (default: 3)")
    parser.add_argument(
        "--mode", choices=("hard", "soft"), help="extraction mode (default: hard)"
    )


def _cfg(args, **command_defaults):
    flag_values = {
        key: getattr(args, key)
        for key in (
            "k",
            "mode",
            "chain_mode",
            "sigma",
            "merge_mask_source",
            "total_steps",
            "guidance_fraction",
            "optimize_steps_per_guidance",
            "step_size",
            "beta",
            "seed",
            "in_path",
            "out_path",
            "threads",
        )
        if hasattr(args, key)
    }
    return resolve_config(args.config, flag_values, command_defaults)


def _require_paths(cfg, need_in=True, need_out=True):
    if need_in and not cfg.in_path:
        raise ValueError("an input container is required (--in or config key 'in')")
    if need_out and not cfg.out_path:
        raise ValueError("an output path is required (--out or config key 'out')")


def _load_shape(records) -> tensorio.GridShape:
    return tensorio.parse_meta_shape(tensorio.require_record(records, tensorio.META_SHAPE))


def cmd_validate(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg, need_out=False)
    records = tensorio.read_container(cfg.in_path)
    names = {rec.name for rec in records}
    if tensorio.ATTENTION in names:
        shape = _load_shape(records)
        tensorio.validate_attention(
            tensorio.require_record(records, tensorio.ATTENTION), shape
        )
    print(f"ok: {len(records)} records")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg)
    records = tensorio.read_container(cfg.in_path)
    shape = _load_shape(records)
    attention = tensorio.require_record(records, tensorio.ATTENTION)
    tensorio.validate_attention(attention, shape)
    fields = extraction.extract_all_pairs(
        attention.data, shape, extraction.ExtractionConfig(k=cfg.k, mode=cfg.mode)
    )
    out = [tensorio.meta_shape_record(shape)]
    for (i, j), field in fields.items():
        out.append(tensorio.float_record(tensorio.pair_name(i, j), field))
    tensorio.write_container(cfg.out_path, out)
    return EXIT_OK


def cmd_chain(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg)
    records = tensorio.read_container(cfg.in_path)
    shape = _load_shape(records)
    pairs = {}
    for rec in records:
        key = tensorio.parse_pair_name(rec.name)
        if key is not None:
            pairs[key] = np.asarray(rec.data, dtype=np.float64)
    aligned = chaining.align_to_first(pairs, shape, cfg.chain_mode)
    tensorio.write_container(
        cfg.out_path,
        [
            tensorio.meta_shape_record(shape),
            tensorio.float_record(tensorio.MOTION_ALIGNED, aligned),
        ],
    )
    return EXIT_OK


def cmd_correspond(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg)
    records = tensorio.read_container(cfg.in_path)
    cmap = correspond.build_correspondence(
        tensorio.require_record(records, tensorio.FEATURES_TGT).data,
        tensorio.require_record(records, tensorio.FEATURES_REF).data,
        tensorio.require_record(records, tensorio.MASK_TGT).data,
        tensorio.require_record(records, tensorio.MASK_REF).data,
    )
    out = list(cmap.to_records())
    names = {rec.name for rec in records}
    if tensorio.META_SHAPE in names:
        out.insert(0, tensorio.meta_shape_record(_load_shape(records)))
    tensorio.write_container(cfg.out_path, out)
    return EXIT_OK


def cmd_customize(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg)
    records = tensorio.read_container(cfg.in_path)
    shape = _load_shape(records)
    cmap = correspond.CorrespondenceMap.from_records(
        tensorio.require_record(records, tensorio.CORRESPONDENCE),
        tensorio.require_record(records, tensorio.CORRESPONDENCE_METHOD),
    )
    final = customize.customize_pipeline(
        np.asarray(tensorio.require_record(records, tensorio.MOTION_ALIGNED).data, dtype=np.float64),
        tensorio.require_record(records, tensorio.MASK_REF).data,
        tensorio.require_record(records, tensorio.MASK_TGT).data,
        cmap,
        customize.CustomizeConfig(sigma=cfg.sigma, merge_mask_source=cfg.merge_mask_source),
    )
    tensorio.write_container(
        cfg.out_path,
        [
            tensorio.meta_shape_record(shape),
            tensorio.float_record(tensorio.MOTION_FINAL, final),
        ],
    )
    return EXIT_OK


def cmd_guide(args) -> int:
    cfg = _cfg(args, mode="soft")
    _require_paths(cfg)
    records = tensorio.read_container(cfg.in_path)
    shape = _load_shape(records)
    logits = np.asarray(
        tensorio.require_record(records, tensorio.ATTENTION_LOGITS).data, dtype=np.float64
    )
    final = np.asarray(
        tensorio.require_record(records, tensorio.MOTION_FINAL).data, dtype=np.float64
    )
    schedule = guidance.GuidanceSchedule(
        total_steps=cfg.total_steps,
        guidance_fraction=cfg.guidance_fraction,
        optimize_steps_per_guidance=cfg.optimize_steps_per_guidance,
        step_size=cfg.step_size,
    )
    trace_path = args.trace or cfg.out_path + ".trace.csv"
    try:
        params, trace = guidance.optimize(
            logits,
            shape,
            final,
            schedule,
            extraction.ExtractionConfig(k=cfg.k, mode=cfg.mode),
            cfg.chain_mode,
        )
    except guidance.GuidanceDivergence as exc:
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write(guidance.trace_csv(exc.trace))
        raise
    tensorio.write_container(
        cfg.out_path,
        [
            tensorio.meta_shape_record(shape),
            tensorio.float_record(tensorio.ATTENTION_LOGITS, params),
        ],
    )
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write(guidance.trace_csv(trace))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg, need_in=False)
    shape = tensorio.GridShape(args.frames, args.height, args.width)
    spec = synth.FlowSpec(
        kind=args.kind,
        shape=shape,
        dx=args.dx,
        dy=args.dy,
        omega_deg=args.omega_deg,
        rate=args.rate,
        bound=args.bound,
        seed=cfg.seed,
    )
    flows, _ = synth.generate_flow(spec)
    if args.attention == "onehot":
        attn = synth.onehot_attention_from_flow(flows, shape)
    else:
        attn = synth.soft_attention_from_flow(flows, shape, cfg.beta)
    records = [
        tensorio.meta_shape_record(shape),
        tensorio.float_record(tensorio.ATTENTION, attn),
    ]
    if shape.f > 1:
        gt = np.stack([flows[(i, i + 1)] for i in range(shape.f - 1)])
        records.append(tensorio.float_record(tensorio.FLOW_GT, gt))
    if args.with_features:
        records.extend(_synth_feature_records(shape, args.feature_dim, cfg.seed))
    tensorio.write_container(cfg.out_path, records)
    return EXIT_OK


def _synth_feature_records(shape, feature_dim, seed):
    rng = np.random.default_rng(seed + 1)
    hw = shape.pixels
    size = max(1, hw // 4)
    mask_ref = np.zeros(hw, dtype=np.uint8)
    mask_tgt = np.zeros(hw, dtype=np.uint8)
    mask_ref[rng.choice(hw, size=size, replace=False)] = 1
    mask_tgt[rng.choice(hw, size=size, replace=False)] = 1
    mask_ref = mask_ref.reshape(shape.h, shape.w)
    mask_tgt = mask_tgt.reshape(shape.h, shape.w)
    d = feature_dim if feature_dim > 0 else max(2, (size + 1) // 2)
    fg_t = correspond.foreground_indices(mask_tgt)
    fg_r = correspond.foreground_indices(mask_ref)
    perm = {int(a): int(b) for a, b in zip(fg_t, rng.permutation(fg_r))}
    feat_ref, feat_tgt, _ = synth.features_with_permutation(shape, d, perm, mask_tgt, mask_ref)
    return [
        tensorio.float_record(tensorio.FEATURES_REF, feat_ref),
        tensorio.float_record(tensorio.FEATURES_TGT, feat_tgt),
        tensorio.byte_record(tensorio.MASK_REF, mask_ref),
        tensorio.byte_record(tensorio.MASK_TGT, mask_tgt),
    ]


def cmd_sweep(args) -> int:
    cfg = _cfg(args)
    _require_paths(cfg)
    records = tensorio.read_container(cfg.in_path)
    shape = _load_shape(records)
    gt = np.asarray(
        tensorio.require_record(records, tensorio.FLOW_GT).data, dtype=np.float64
    )
    gt_flows = {(i, i + 1): gt[i] for i in range(gt.shape[0])}
    samples = []
    for rec in records:
        cell = tensorio.parse_sweep_name(rec.name)
        if cell is not None:
            samples.append((cell[0], cell[1], np.asarray(rec.data, dtype=np.float64)))
    table, argmin = extraction.sweep_selection(
        samples, gt_flows, shape, extraction.ExtractionConfig(k=cfg.k, mode=cfg.mode)
    )
    with open(cfg.out_path, "w", encoding="utf-8") as fh:
        fh.write(extraction.sweep_csv(table, argmin))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionkit",
        description="Attention-derived motion toolkit operating on MAFT containers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a container (and its attention record)")
    _add_common(p, need_out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("extract", help="extract per-pair motion fields from attention")
    _add_common(p)
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("chain", help="align pairwise motions to the first frame")
    _add_common(p)
    p.add_argument(
        "--chain-mode",
        dest="chain_mode",
        choices=chaining.CHAIN_MODES,
        help="path normalization (default: mean_over_paths)",
    )
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("correspond", help="match foreground pixels by feature similarity")
    _add_common(p)
    p.set_defaults(func=cmd_correspond)

    p = sub.add_parser("customize", help="warp, inpaint, merge and smooth the motion")
    _add_common(p)
    p.add_argument("--sigma", type=float, help="Gaussian refinement std-dev (default: 1.5)")
    p.add_argument(
        "--merge-mask-source",
        dest="merge_mask_source",
        choices=(customize.MERGE_MASK_TARGET, customize.MERGE_MASK_REFERENCE),
        help="mask used by the merge stage (default: target)",
    )
    p.set_defaults(func=cmd_customize)

    p = sub.add_parser("guide", help="optimize attention logits toward a target motion")
    _add_common(p)
    p.add_argument("--k", type=int, help="top-K count, unused in soft mode (default: 3)")
    p.add_argument(
        "--mode",
        choices=("hard", "soft"),
        help="extraction mode; the gradient needs soft (default: soft)",
    )
    p.add_argument(
        "--chain-mode",
        dest="chain_mode",
        choices=chaining.CHAIN_MODES,
        help="path normalization (default: mean_over_paths)",
    )
    p.add_argument("--total-steps", dest="total_steps", type=int,
                   help="denoising step count T (default: 50)")
    p.add_argument("--guidance-fraction", dest="guidance_fraction", type=float,
                   help="fraction of steps with guidance (default: 0.2)")
    p.add_argument("--optimize-steps-per-guidance", dest="optimize_steps_per_guidance",
                   type=int, help="inner gradient steps (default: 1)")
    p.add_argument("--step-size", dest="step_size", type=float,
                   help="gradient descent step size (default: 0.1)")
    p.add_argument("--trace", help="loss trace CSV path (default: <out>.trace.csv)")
    p.set_defaults(func=cmd_guide)

    p = sub.add_parser("synth", help="write synthetic oracle containers")
    _add_common(p, need_in=False)
    p.add_argument("--kind", choices=synth.FLOW_KINDS, default="constant",
                   help="flow family (default: constant)")
    p.add_argument("--frames", type=int, default=3, help="latent frame count (default: 3)")
    p.add_argument("--height", type=int, default=6, help="grid rows (default: 6)")
    p.add_argument("--width", type=int, default=6, help="grid columns (default: 6)")
    p.add_argument("--dx", type=float, default=1.0,
                   help="constant flow u component per frame gap (default: 1)")
    p.add_argument("--dy", type=float, default=0.0,
                   help="constant flow v component per frame gap (default: 0)")
    p.add_argument("--omega-deg", dest="omega_deg", type=float, default=90.0,
                   help="rotation angle per frame gap in degrees (default: 90)")
    p.add_argument("--rate", type=float, default=1.0, help="zoom rate (default: 1)")
    p.add_argument("--bound", type=int, default=1,
                   help="max random displacement per component (default: 1)")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")
    p.add_argument("--attention", choices=("onehot", "soft"), default="onehot",
                   help="attention construction (default: onehot)")
    p.add_argument("--beta", type=float, help="soft attention concentration (default: 50)")
    p.add_argument("--with-features", dest="with_features", action="store_true",
                   help="also write feature grids and masks with a seeded permutation")
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=0,
                   help="feature dimension; 0 picks the smallest that fits (default: 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="score sweep/<t>_<b> attention records against flow_gt")
    _add_common(p)
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except guidance.GuidanceDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (tensorio.TensorIOError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
