"""Run configuration shared by the CLI subcommands.

A config file is JSON with optional sections::

    {
      "class_map": "classes.json",
      "augment": [{"kind": "hflip"}, ...],
      "split": {"ratios": [0.88, 0.06, 0.06], "seed": 42},
      "metrics": {"conf_threshold": 0.25, "skip_empty_classes": true},
      "progress": {"min_confidence": 0.5, "window_types": {"W1": "single_layer"}},
      "reconcile": {"quality": {...}, "pos_tol": 0.1, "coverage": {...}}
    }

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import ClassMap
from .augment import AugmentOp, SplitSpec, load_plan
from .progress import WindowType
from .reconcile import ConfigError, ReconcileConfig


@dataclass(frozen=True)
class Config:
    class_map: ClassMap | None = None
    augment: tuple[AugmentOp, ...] = ()
    split: SplitSpec = SplitSpec()
    conf_threshold: float = 0.25
    skip_empty_classes: bool = True
    min_confidence: float = 0.5
    window_types: dict[str, WindowType] = field(default_factory=dict)
    reconcile: ReconcileConfig = ReconcileConfig()
    source: Path | None = None

    @classmethod
    def load(cls, path: str | Path) -> Config:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_json(data, path.parent, path)

    @classmethod
    def from_json(cls, data: dict, base: Path = Path("."), source: Path | None = None) -> Config:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        kwargs: dict = {"source": source}
        if "class_map" in data:
            cm_path = base / data["class_map"]
            if not cm_path.is_file():
                raise ConfigError(f"class map {cm_path} does not exist")
            kwargs["class_map"] = ClassMap.load(cm_path)
        if "augment" in data:
            kwargs["augment"] = tuple(load_plan(data["augment"]))
        if "split" in data:
            s = data["split"]
            kwargs["split"] = SplitSpec(tuple(s.get("ratios", (0.88, 0.06, 0.06))), int(s.get("seed", 0)))
        metrics = data.get("metrics", {})
        if "conf_threshold" in metrics:
            kwargs["conf_threshold"] = _fraction(metrics["conf_threshold"], "metrics.conf_threshold")
        if "skip_empty_classes" in metrics:
            kwargs["skip_empty_classes"] = bool(metrics["skip_empty_classes"])
        progress = data.get("progress", {})
        if "min_confidence" in progress:
            kwargs["min_confidence"] = _fraction(progress["min_confidence"], "progress.min_confidence")
        if "window_types" in progress:
            kwargs["window_types"] = {k: WindowType(v) for k, v in progress["window_types"].items()}
        if "reconcile" in data:
            kwargs["reconcile"] = ReconcileConfig.from_json(data["reconcile"])
        return cls(**kwargs)


def _fraction(value, name: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {v}")
    return v
