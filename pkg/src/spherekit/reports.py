"""Report objects the CLI writes: deterministic JSON plus CSV series.

A report's body is byte-stable for a fixed configuration: the wall clock
lives in a side field excluded from the config hash, randomness is pinned
by the seed, and JSON is dumped with sorted keys.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

__all__ = ["Report", "emit_plot_data", "config_hash"]

SCHEMA = "spherekit/1"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = list(obj)
        if isinstance(obj, (set, frozenset)):
            items = sorted(items, key=str)
        return [_jsonable(x) for x in items]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def config_hash(config: Dict[str, Any]) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True).encode("utf8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Report:
    """One command's outcome: constants/verdicts plus evidence rows, each
    row addressable by its index so numeric claims can cite them."""

    command: str
    config: Dict[str, Any]
    constants: Dict[str, Any] = field(default_factory=dict)
    verdict: Optional[str] = None
    check: Optional[str] = None  # functional label of what was verified
    evidence: List[dict] = field(default_factory=list)
    series: Dict[str, dict] = field(default_factory=dict)
    wall_clock_s: Optional[float] = None

    def add_evidence(self, rows: Sequence[dict]) -> List[int]:
        start = len(self.evidence)
        for r in rows:
            self.evidence.append(_jsonable(r))
        return list(range(start, len(self.evidence)))

    def add_series(self, name: str, x_label: str, y_label: str,
                   points: Sequence[Tuple[float, float]]):
        self.series[name] = {
            "x_label": x_label,
            "y_label": y_label,
            "points": [[float(a), float(b)] for a, b in points],
        }

    def body(self) -> Dict[str, Any]:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "config": _jsonable(self.config),
            "config_hash": config_hash(self.config),
            "constants": _jsonable(self.constants),
            "verdict": self.verdict,
            "check": self.check,
            "evidence": self.evidence,
            "series": self.series,
        }

    def to_json(self) -> str:
        doc = self.body()
        doc["wall_clock_s"] = self.wall_clock_s
        return json.dumps(doc, sort_keys=True, indent=1)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf8") as f:
            f.write(self.to_json())
            f.write("\n")


def emit_plot_data(report: Report, series: str) -> str:
    """Two-column CSV of a named series; the header names the units."""
    if series not in report.series:
        raise KeyError(
            f"unknown series {series!r}; available: {sorted(report.series)}"
        )
    s = report.series[series]
    lines = [f"{s['x_label']},{s['y_label']}"]
    for x, y in s["points"]:
        lines.append(f"{x!r},{y!r}")
    return "\n".join(lines) + "\n"
