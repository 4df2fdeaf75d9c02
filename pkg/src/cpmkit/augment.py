"""Deterministic image/label augmentation and train/val/test partitioning.

Geometric ops act on normalized coordinates about the image centre. Angles
are measured in the image frame (y down), so a positive rotation turns the
picture clockwise on screen; ``rot90cw`` is ``rot_deg(90)`` done exactly.
"""

from __future__ import annotations

import math
import random
import shutil
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .annotations import (
    Annotation,
    DatasetIndex,
    DatasetItem,
    LabelFile,
    NormBox,
    load_labels,
    write_label_file,
)
from .errors import CpmError, DomainError
from .raster import (
    Affine2,
    LuminanceGrid,
    adjust_brightness,
    box_blur,
    read_pgm,
    warp_nearest,
    write_pgm,
)

__all__ = [
    "AugmentOp",
    "SplitSpec",
    "StemCollisionError",
    "GEOMETRIC_KINDS",
    "PHOTOMETRIC_KINDS",
    "DEFAULT_OPS",
    "op_to_affine",
    "transform_box",
    "transform_labels",
    "apply_augment",
    "expand_dataset",
    "materialize",
    "split_sizes",
    "split_dataset",
    "assignment",
    "load_plan",
]

GEOMETRIC_KINDS = ("hflip", "rot90cw", "rot90ccw", "rot_deg", "shear_deg")
PHOTOMETRIC_KINDS = ("brightness", "blur")
MAX_DEGREES = 15.0
MAX_BRIGHTNESS = 0.25
MIN_BOX_AREA = 1e-6


class StemCollisionError(CpmError):
    pass


def _signed(v: float) -> str:
    return ("p" if v >= 0 else "m") + format(abs(v), "g")


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    value: float = 0.0
    axis: str = "x"

    def __post_init__(self) -> None:
        if self.kind not in GEOMETRIC_KINDS + PHOTOMETRIC_KINDS:
            raise DomainError(f"unknown augmentation kind {self.kind!r}")
        if self.kind in ("rot_deg", "shear_deg") and not -MAX_DEGREES <= self.value <= MAX_DEGREES:
            raise DomainError(f"{self.kind} angle {self.value} outside [-15, 15] degrees")
        if self.kind == "shear_deg" and self.axis not in ("x", "y"):
            raise DomainError(f"shear axis must be 'x' or 'y', got {self.axis!r}")
        if self.kind == "brightness" and not -MAX_BRIGHTNESS <= self.value <= MAX_BRIGHTNESS:
            raise DomainError(f"brightness factor {self.value} outside [-0.25, 0.25]")
        if self.kind == "blur":
            if self.value == 0.0:
                object.__setattr__(self, "value", 2)
            if self.value not in (1, 2):
                raise DomainError(f"blur radius must be 1 or 2 pixels, got {self.value}")
            object.__setattr__(self, "value", int(self.value))

    @property
    def geometric(self) -> bool:
        return self.kind in GEOMETRIC_KINDS

    @property
    def name(self) -> str:
        if self.kind in ("hflip", "rot90cw", "rot90ccw"):
            return self.kind
        if self.kind == "rot_deg":
            return "rot_" + _signed(self.value)
        if self.kind == "shear_deg":
            return ("shear_" if self.axis == "x" else "sheary_") + _signed(self.value)
        if self.kind == "brightness":
            return "bright_" + _signed(round(self.value * 100, 6))
        return f"blur{self.value}"

    def to_json(self) -> dict:
        if self.kind in ("rot_deg", "shear_deg"):
            out = {"kind": self.kind, "degrees": self.value}
            if self.kind == "shear_deg":
                out["axis"] = self.axis
            return out
        if self.kind == "brightness":
            return {"kind": self.kind, "factor": self.value}
        if self.kind == "blur":
            return {"kind": self.kind, "radius": self.value}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, obj: dict) -> AugmentOp:
        if not isinstance(obj, dict) or "kind" not in obj:
            raise DomainError(f"augmentation op must be an object with 'kind': {obj!r}")
        kind = obj["kind"]
        value = obj.get("degrees", obj.get("factor", obj.get("radius", 0.0)))
        return cls(kind, value, obj.get("axis", "x"))


# The transform set used for the original dataset.
DEFAULT_OPS = (
    AugmentOp("hflip"),
    AugmentOp("rot90cw"),
    AugmentOp("rot90ccw"),
    AugmentOp("rot_deg", 15),
    AugmentOp("rot_deg", -15),
    AugmentOp("shear_deg", 15),
    AugmentOp("shear_deg", -15),
    AugmentOp("brightness", 0.25),
    AugmentOp("brightness", -0.25),
    AugmentOp("blur", 2),
)


def _about_center(a: float, b: float, c: float, d: float) -> Affine2:
    # p' = M (p - 0.5) + 0.5
    return Affine2(a, b, c, d, 0.5 - 0.5 * (a + b), 0.5 - 0.5 * (c + d))


def op_to_affine(op: AugmentOp, aspect: float = 1.0) -> Affine2:
    """Normalized-coordinate affine for a geometric op.

    ``aspect`` is image width / height. It keeps angles true in pixel space
    for non-square images; the default treats the image as square.
    """
    if not op.geometric:
        raise DomainError(f"{op.kind} is photometric and has no affine form")
    if op.kind == "hflip":
        return Affine2(-1.0, 0.0, 0.0, 1.0, 1.0, 0.0)
    if op.kind == "rot90cw":
        return Affine2(0.0, -1.0, 1.0, 0.0, 1.0, 0.0)
    if op.kind == "rot90ccw":
        return Affine2(0.0, 1.0, -1.0, 0.0, 0.0, 1.0)
    theta = math.radians(op.value)
    if op.kind == "rot_deg":
        cos, sin = math.cos(theta), math.sin(theta)
        return _about_center(cos, -sin / aspect, sin * aspect, cos)
    t = math.tan(theta)
    if op.axis == "x":
        return _about_center(1.0, t / aspect, 0.0, 1.0)
    return _about_center(1.0, 0.0, t * aspect, 1.0)


def transform_box(box: NormBox, transform: Affine2) -> NormBox | None:
    """Axis-aligned hull of the mapped corners, clipped to the unit square.

    Returns None when the clipped box covers less than 1e-6 of the image.
    """
    x1, y1, x2, y2 = box.corners()
    pts = [transform.apply(x, y) for x, y in ((x1, y1), (x2, y1), (x1, y2), (x2, y2))]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    nx1, nx2 = max(min(xs), 0.0), min(max(xs), 1.0)
    ny1, ny2 = max(min(ys), 0.0), min(max(ys), 1.0)
    if nx2 <= nx1 or ny2 <= ny1 or (nx2 - nx1) * (ny2 - ny1) < MIN_BOX_AREA:
        return None
    return NormBox.from_corners(nx1, ny1, nx2, ny2)


def transform_labels(labels: LabelFile, transform: Affine2, stem: str | None = None) -> LabelFile:
    anns = []
    for ann in labels.annotations:
        box = transform_box(ann.box, transform)
        if box is not None:
            anns.append(Annotation(ann.class_id, box))
    return LabelFile(labels.image_stem if stem is None else stem, tuple(anns))


def apply_augment(image: LuminanceGrid, labels: LabelFile, op: AugmentOp) -> tuple[LuminanceGrid, LabelFile]:
    if op.kind == "brightness":
        return adjust_brightness(image, op.value), labels
    if op.kind == "blur":
        return box_blur(image, int(op.value)), labels
    transform = op_to_affine(op, aspect=image.width / image.height)
    if op.kind in ("rot90cw", "rot90ccw"):
        out = warp_nearest(image, transform, image.height, image.width)
    else:
        out = warp_nearest(image, transform)
    return out, transform_labels(labels, transform)


def expand_dataset(index: DatasetIndex, ops: Sequence[AugmentOp]) -> DatasetIndex:
    """Originals followed by one derived item ``<stem>__<opname>`` per (item, op)."""
    if not ops:
        raise DomainError("augmentation plan is empty")
    seen = {(it.subset, it.stem) for it in index.items}
    derived = []
    for item in index.items:
        for op in ops:
            stem = f"{item.stem}__{op.name}"
            key = (item.subset, stem)
            if key in seen:
                raise StemCollisionError(f"derived stem {stem!r} already exists in subset {item.subset!r}")
            seen.add(key)
            derived.append(replace(item, stem=stem, source=item.stem, op=op))
    return DatasetIndex(index.root, index.items + tuple(derived), index.warnings)


def _subset_dirs(root: Path, subset: str) -> tuple[Path, Path]:
    if subset == "none":
        return root / "images", root / "labels"
    return root / "images" / subset, root / "labels" / subset


def materialize(index: DatasetIndex, out_root: str | Path, *, mode: str = "validate") -> DatasetIndex:
    """Write every item of an expanded index to ``out_root`` in dataset layout.

    Originals are copied byte for byte; derived items are rendered from their
    source image, which must be a PGM.
    """
    out_root = Path(out_root)
    written = []
    for item in index.items:
        img_dir, lbl_dir = _subset_dirs(out_root, item.subset)
        img_dir.mkdir(parents=True, exist_ok=True)
        lbl_dir.mkdir(parents=True, exist_ok=True)
        label_out = lbl_dir / f"{item.stem}.txt" if item.label is not None else None
        if item.op is None:
            img_out = img_dir / item.image.name
            shutil.copyfile(item.image, img_out)
            if label_out is not None:
                shutil.copyfile(item.label, label_out)
        else:
            if item.image.suffix.lower() != ".pgm":
                raise DomainError(f"cannot augment non-PGM image {item.image}")
            grid = read_pgm(item.image.read_bytes())
            labels = load_labels(item, mode=mode)
            new_grid, new_labels = apply_augment(grid, labels, item.op)
            img_out = img_dir / f"{item.stem}.pgm"
            img_out.write_bytes(write_pgm(new_grid))
            if label_out is not None:
                label_out.write_text(write_label_file(new_labels), encoding="utf-8")
        written.append(replace(item, image=img_out, label=label_out))
    return DatasetIndex(out_root, tuple(written), index.warnings)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.88, 0.06, 0.06)
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.ratios) != 3:
            raise DomainError("split needs exactly three ratios (train, val, test)")
        if any(r < 0 for r in self.ratios):
            raise DomainError(f"split ratios must be non-negative: {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise DomainError(f"split ratios must sum to 1, got {sum(self.ratios)!r}")


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, ...]:
    """Largest-remainder apportionment of ``n`` items; ties go to the earlier subset."""
    exact = [Fraction(repr(float(r))) for r in ratios]
    total = sum(exact)
    quotas = [n * r / total for r in exact]
    sizes = [math.floor(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return tuple(sizes)


def split_dataset(index: DatasetIndex, spec: SplitSpec) -> DatasetIndex:
    """Tag every item train/val/test.

    Items are ordered by (stem, original subset) and shuffled with a
    ``random.Random(seed)``, so the result depends only on the stems, the
    seed and the ratios. Item order in the returned index is unchanged.
    """
    keys = sorted(range(len(index.items)), key=lambda i: (index.items[i].stem, index.items[i].subset))
    random.Random(spec.seed).shuffle(keys)
    sizes = split_sizes(len(keys), spec.ratios)
    tag: dict[int, str] = {}
    start = 0
    for name, size in zip(("train", "val", "test"), sizes):
        for i in keys[start : start + size]:
            tag[i] = name
        start += size
    items = tuple(replace(it, subset=tag[i]) for i, it in enumerate(index.items))
    return DatasetIndex(index.root, items, index.warnings)


def assignment(index: DatasetIndex) -> dict[str, list[str]]:
    """Sorted stems per subset, the canonical content of an assignment file."""
    out: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    for it in index.items:
        out.setdefault(it.subset, []).append(it.stem)
    return {k: sorted(v) for k, v in out.items()}


def load_plan(obj: list) -> list[AugmentOp]:
    if not isinstance(obj, list):
        raise DomainError("augmentation plan must be a JSON array of op objects")
    return [AugmentOp.from_json(o) for o in obj]
