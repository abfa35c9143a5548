"""Flat key=value run configuration shared by all CLI subcommands.

Precedence: command-line flag > config file > built-in default. Unknown
keys are rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .chaining import CHAIN_MODES
from .customize import MERGE_MASK_REFERENCE, MERGE_MASK_TARGET


@dataclass
class RunConfig:
    k: int = 3
    mode: str = "hard"
    chain_mode: str = "mean_over_paths"
    sigma: float = 1.5
    merge_mask_source: str = MERGE_MASK_TARGET
    total_steps: int = 50
    guidance_fraction: float = 0.2
    optimize_steps_per_guidance: int = 1
    step_size: float = 0.1
    beta: float = 50.0
    seed: int = 0
    in_path: str | None = None
    out_path: str | None = None
    threads: int = 1

    def validate(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"mode must be 'hard' or 'soft', got {self.mode!r}")
        if self.chain_mode not in CHAIN_MODES:
            raise ValueError(f"chain_mode must be one of {CHAIN_MODES}, got {self.chain_mode!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.merge_mask_source not in (MERGE_MASK_TARGET, MERGE_MASK_REFERENCE):
            raise ValueError(f"bad merge_mask_source {self.merge_mask_source!r}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.guidance_fraction <= 1.0:
            raise ValueError(f"guidance_fraction must be in [0, 1], got {self.guidance_fraction}")
        if self.optimize_steps_per_guidance < 1:
            raise ValueError("optimize_steps_per_guidance must be >= 1")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


# config-file key -> (dataclass field, parser)
_KEYS = {
    "k": ("k", int),
    "mode": ("mode", str),
    "chain_mode": ("chain_mode", str),
    "sigma": ("sigma", float),
    "merge_mask_source": ("merge_mask_source", str),
    "total_steps": ("total_steps", int),
    "guidance_fraction": ("guidance_fraction", float),
    "optimize_steps_per_guidance": ("optimize_steps_per_guidance", int),
    "step_size": ("step_size", float),
    "beta": ("beta", float),
    "seed": ("seed", int),
    "in": ("in_path", str),
    "out": ("out_path", str),
    "threads": ("threads", int),
}


def parse_config(path: str) -> dict:
    """Read a key=value config file into a {field: value} dict."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            field_name, parser = _KEYS[key]
            try:
                values[field_name] = parser(value)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
    return values


def resolve_config(config_path, flag_values: dict, command_defaults: dict | None = None) -> RunConfig:
    """Layer defaults, the optional config file, and explicit flags."""
    merged = {}
    if command_defaults:
        merged.update(command_defaults)
    if config_path:
        merged.update(parse_config(config_path))
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    known = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg
