"""Experiment configuration: one seed, one ladder, named tolerances.

All randomness in a pipeline flows from the single seed through per-command
counters (command k uses stream (seed, "pipeline", k)), so serial and
parallel executions of the same config agree.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

__all__ = ["ExperimentConfig", "load_config"]


@dataclass
class ExperimentConfig:
    seed: int = 0
    truncation_ladder: List[int] = field(default_factory=lambda: [32, 64, 128])
    tolerances: Dict[str, float] = field(default_factory=dict)
    output_dir: str = "."
    space_source: Optional[dict] = None  # {"file": path} or {"grid": {...}}

    def __post_init__(self):
        lad = list(self.truncation_ladder)
        if any(b <= a for a, b in zip(lad, lad[1:])):
            raise ValueError("truncation ladder must be strictly increasing")
        for name, tol in self.tolerances.items():
            if not tol > 0:
                raise ValueError(f"tolerance {name!r} must be positive")

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))


def load_config(path) -> ExperimentConfig:
    """Read a TOML or JSON config file."""
    p = Path(path)
    text = p.read_text(encoding="utf8")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py >= 3.11
        except ModuleNotFoundError:  # pragma: no cover
            import tomli as tomllib
        doc = tomllib.loads(text)
    else:
        doc = json.loads(text)
    known = {"seed", "truncation_ladder", "tolerances", "output_dir", "space_source"}
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    return ExperimentConfig(**doc)
