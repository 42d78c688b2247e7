"""Configuration loading from YAML, env vars, and CLI defaults."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field

from engelnq.schemas import InstantiationStrategy

DEFAULT_CONFIG_PATHS = [
    Path("engelnq.yaml"),
    Path.home() / ".engelnq" / "config.yaml",
]

DEFAULT_CACHE_DIR = Path.home() / ".engelnq" / "cache"

DEFAULT_SEED = 20240229


class Config(BaseModel):
    cache_dir: str = str(DEFAULT_CACHE_DIR)
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=DEFAULT_SEED, ge=-(2**63), lt=2**63)
    max_class: int | None = Field(default=None, ge=1)
    timeout_seconds: float | None = Field(default=None, gt=0)
    step_budget: int = Field(default=16, ge=1)
    random_law_samples: int = Field(default=200, ge=0)
    identity_samples: int = Field(default=1000, ge=0)
    verify_consistency: bool = True
    output_dir: str = "./out"
    strategy: InstantiationStrategy = Field(default_factory=InstantiationStrategy)


def load_config(
    config_path: str | None = None,
    overrides: dict[str, Any] | None = None,
) -> Config:
    """Load config from YAML file, env vars, and caller overrides (in that priority)."""
    raw: dict[str, Any] = {}

    # 1. Load from YAML file
    paths_to_try = [Path(config_path)] if config_path else DEFAULT_CONFIG_PATHS
    for p in paths_to_try:
        if p.exists():
            with open(p) as f:
                raw = yaml.safe_load(f) or {}
            break

    # 2. Env var overrides
    if cache := os.environ.get("ENGELNQ_CACHE"):
        raw["cache_dir"] = cache
    if threads := os.environ.get("ENGELNQ_THREADS"):
        raw["threads"] = threads
    if seed := os.environ.get("ENGELNQ_SEED"):
        raw["seed"] = seed

    # 3. Caller overrides (CLI flags)
    if overrides:
        overrides = dict(overrides)
        # strategy overrides merge field by field into the YAML sub-model
        strategy = overrides.pop("strategy", None)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        if strategy:
            merged = dict(raw.get("strategy") or {})
            merged.update({k: v for k, v in strategy.items() if v is not None})
            raw["strategy"] = merged

    return Config(**raw)
