"""Deterministic synthetic site used by the end-to-end tests and the README.

``write_fixture(root)`` produces a small labelled dataset, perfect
predictions, progress events and an outdoor drone survey whose scene frame
is a known similarity transform of the building frame.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .annotations import Annotation, LabelFile, NormBox, write_label_file
from .progress import checkpoint_class_names
from .raster import LuminanceGrid, write_pgm
from .reconcile import SimilarityTransform, apply_transform

IMAGE_SIZE = 64

# stem -> [(class_id, cx, cy, w, h)]; coordinates on a 1/64 lattice
_LABELS = {
    "site_001": [(0, 0.25, 0.5, 0.25, 0.5)],
    "site_002": [(1, 0.5, 0.375, 0.375, 0.25), (3, 0.8125, 0.75, 0.25, 0.25)],
    "site_003": [(2, 0.375, 0.5, 0.5, 0.5)],
    "site_004": [(4, 0.5, 0.5, 0.25, 0.75)],
    "site_005": [(5, 0.3125, 0.3125, 0.25, 0.25), (6, 0.6875, 0.6875, 0.25, 0.25)],
    "site_006": [(7, 0.5, 0.5, 0.5, 0.375)],
    "site_007": [(1, 0.25, 0.25, 0.25, 0.25), (2, 0.75, 0.75, 0.25, 0.25)],
    "site_008": [],
}

# window -> checkpoint class sequence (confidence, class)
_EVENTS = {
    "W1": [(0.9, 0), (0.9, 1), (0.9, 4), (0.9, 5), (0.9, 6), (0.9, 7)],
    "W2": [(0.9, 0), (0.8, 1), (0.85, 2), (0.9, 6)],
    "W3": [(0.9, 1), (0.3, 4), (0.8, 0)],
    "W4": [(0.9, 0), (0.9, 5)],
    "W5": [(0.9, 0), (0.9, 1), (0.7, 3), (0.9, 4), (0.9, 6)],
}

_TARGETS = {
    "W1": (0.0, 0.0, 1.5),
    "W2": (3.0, 0.0, 1.5),
    "W3": (6.0, 0.0, 1.5),
    "W4": (0.0, 0.0, 4.5),
    "W5": (3.0, 0.0, 4.5),
}

_MARKERS = {
    "M1": (-1.0, 0.0, 0.0),
    "M2": (8.0, 0.0, 0.0),
    "M3": (8.0, 0.0, 6.0),
    "M4": (-1.0, -2.0, 6.0),
}

_COVERAGE = {
    "drone_01": ["W1", "W2"],
    "drone_02": ["W3", "W4"],
    "drone_03": ["W5"],
    "drone_dark": ["W2"],
}

# (window id, image, building-frame offset in metres)
_OBSERVATIONS = [
    ("W1", "drone_01", (0.01, 0.0, 0.0)),
    ("W2", "drone_01", (0.0, 0.02, 0.0)),
    ("W3", "drone_02", (0.0, 0.0, -0.01)),
    ("W4", "drone_02", (0.02, 0.0, 0.01)),
    ("W5", "drone_03", (0.0, 0.0, 0.0)),
    ("W5", "drone_03", (0.05, 0.0, 0.0)),
    ("W2", "drone_dark", (0.5, 0.0, 0.0)),
    ("W99", "drone_02", (0.0, 0.0, 0.0)),
]


def scene_to_building() -> SimilarityTransform:
    a = math.radians(30.0)
    rot = np.array([[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]])
    return SimilarityTransform(2.0, rot, np.array([10.0, -5.0, 2.0]))


def _label_image(rng: np.random.Generator, boxes: list) -> LuminanceGrid:
    px = rng.integers(60, 120, size=(IMAGE_SIZE, IMAGE_SIZE))
    for cid, cx, cy, w, h in boxes:
        x1, x2 = round((cx - w / 2) * IMAGE_SIZE), round((cx + w / 2) * IMAGE_SIZE)
        y1, y2 = round((cy - h / 2) * IMAGE_SIZE), round((cy + h / 2) * IMAGE_SIZE)
        px[y1:y2, x1:x2] = 150 + 12 * cid
    return LuminanceGrid(px)


def _drone_image(rng: np.random.Generator, dark: bool) -> LuminanceGrid:
    if dark:
        return LuminanceGrid.filled(48, 48, 30)
    return LuminanceGrid(rng.integers(40, 216, size=(48, 48)))


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_fixture(root: str | Path) -> Path:
    root = Path(root)
    rng = np.random.default_rng(20230115)
    images, labels = root / "dataset" / "images", root / "dataset" / "labels"
    images.mkdir(parents=True, exist_ok=True)
    labels.mkdir(parents=True, exist_ok=True)
    predictions = []
    for stem, boxes in _LABELS.items():
        (images / f"{stem}.pgm").write_bytes(write_pgm(_label_image(rng, boxes)))
        if boxes:
            lf = LabelFile(stem, tuple(Annotation(c, NormBox(cx, cy, w, h)) for c, cx, cy, w, h in boxes))
            (labels / f"{stem}.txt").write_text(write_label_file(lf), encoding="utf-8")
        for c, cx, cy, w, h in boxes:
            predictions.append({"image": stem, "class_id": c, "box": [cx, cy, w, h], "confidence": 0.9})
    _dump(root / "predictions.json", predictions)
    _dump(root / "classes.json", checkpoint_class_names())

    events = []
    for wid, seq in _EVENTS.items():
        for t, (conf, cls) in enumerate(seq, 1):
            events.append({"window_id": wid, "timestamp": t, "checkpoint_class": cls, "confidence": conf})
    _dump(root / "events.json", events)

    to_scene = scene_to_building().inverse()
    drone = root / "drone"
    _dump(drone / "targets.json", [
        {"window_id": w, "position": list(p), "normal": [0.0, -1.0, 0.0]} for w, p in _TARGETS.items()
    ])
    _dump(drone / "markers.json", [
        {"marker_id": m, "building": list(p), "scene": apply_transform(to_scene, p).tolist()}
        for m, p in _MARKERS.items()
    ])
    obs = []
    for wid, image, offset in _OBSERVATIONS:
        planned = np.array(_TARGETS.get(wid, (1.5, 0.0, 3.0)))
        scene = apply_transform(to_scene, planned + np.array(offset))
        obs.append({"window_id": wid, "scene": scene.tolist(), "image": image, "decode_quality": 0.95})
    _dump(drone / "observations.json", obs)
    for image_id in _COVERAGE:
        grid = _drone_image(rng, image_id == "drone_dark")
        (drone / "images").mkdir(parents=True, exist_ok=True)
        (drone / "images" / f"{image_id}.pgm").write_bytes(write_pgm(grid))

    _dump(root / "config.json", {
        "class_map": "classes.json",
        "augment": [{"kind": "hflip"}, {"kind": "rot90cw"}, {"kind": "rot_deg", "degrees": 15},
                    {"kind": "brightness", "factor": 0.25}, {"kind": "blur", "radius": 2}],
        "split": {"ratios": [0.88, 0.06, 0.06], "seed": 42},
        "metrics": {"conf_threshold": 0.25, "skip_empty_classes": True},
        "progress": {"min_confidence": 0.5, "window_types": {"W5": "single_layer"}},
        "reconcile": {
            "quality": {"min_sharpness": 100.0, "min_contrast": 0.05, "max_clip_fraction": 0.2},
            "pos_tol": 0.1,
            "coverage": _COVERAGE,
        },
    })
    return root
