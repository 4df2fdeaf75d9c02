"""Label files in normalized ``class cx cy w h`` format, class maps and the
dataset directory layout.

A dataset root holds ``images/`` and ``labels/``; either both are flat or
both contain ``train/``, ``val/`` and ``test/`` subdirectories. Every image
``<stem>.<ext>`` pairs with ``labels/.../<stem>.txt``. Images without a label
file are background images.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CpmError, DomainError, ParseError
from .progress import checkpoint_class_names

__all__ = [
    "NormBox",
    "Annotation",
    "LabelFile",
    "ClassMap",
    "DatasetItem",
    "DatasetIndex",
    "Issue",
    "LabelError",
    "FieldCountError",
    "NonNumericError",
    "NegativeClassError",
    "OutOfRangeError",
    "UnknownClassError",
    "DatasetError",
    "SUBSETS",
    "IMAGE_SUFFIXES",
    "parse_label_line",
    "parse_label_text",
    "write_label_file",
    "validate_label_text",
    "to_pixel_xyxy",
    "from_pixel_xyxy",
    "scan_dataset",
    "load_labels",
]

SUBSETS = ("train", "val", "test")
IMAGE_SUFFIXES = (".pgm", ".png", ".jpg", ".jpeg")
EXTENT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class NormBox:
    """Box centre and size as fractions of image width/height."""

    cx: float
    cy: float
    w: float
    h: float

    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> NormBox:
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    @property
    def area(self) -> float:
        return self.w * self.h

    def extent_excursion(self) -> float:
        """How far the box reaches outside the unit square (0 when inside)."""
        x1, y1, x2, y2 = self.corners()
        return max(0.0, -x1, -y1, x2 - 1.0, y2 - 1.0)


@dataclass(frozen=True)
class Annotation:
    class_id: int
    box: NormBox


@dataclass(frozen=True)
class LabelFile:
    image_stem: str
    annotations: tuple[Annotation, ...] = ()


@dataclass(frozen=True)
class ClassMap:
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise DomainError("class map is empty")
        if any(not isinstance(n, str) or not n.strip() for n in names):
            raise DomainError("class names must be nonempty strings")
        if len(set(names)) != len(names):
            raise DomainError("class names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def default(cls) -> ClassMap:
        return cls(tuple(checkpoint_class_names()))

    @classmethod
    def from_json(cls, text: str) -> ClassMap:
        data = json.loads(text)
        if not isinstance(data, list):
            raise DomainError("class map JSON must be an array of strings")
        return cls(tuple(data))

    @classmethod
    def load(cls, path: str | Path) -> ClassMap:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


class LabelError(ParseError):
    code = "label"

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        where = f"{path or '<label>'}:{line}" if line is not None else (path or "<label>")
        super().__init__(f"{where}: {message}")


class FieldCountError(LabelError):
    code = "field_count"


class NonNumericError(LabelError):
    code = "non_numeric"


class NegativeClassError(LabelError):
    code = "negative_class"


class OutOfRangeError(LabelError):
    code = "out_of_range"


class UnknownClassError(LabelError):
    code = "unknown_class"


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" | "warning"
    code: str
    message: str
    path: str | None = None
    line: int | None = None

    def __str__(self) -> str:
        where = self.path or ""
        if self.line is not None:
            where += f":{self.line}"
        return f"{self.severity}: {where}: {self.message} [{self.code}]" if where else f"{self.severity}: {self.message} [{self.code}]"

    def to_json(self) -> dict:
        return {"severity": self.severity, "code": self.code, "message": self.message, "path": self.path, "line": self.line}


def _parse_float(tok: str, name: str, line: int | None) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise NonNumericError(f"{name} is not a number: {tok!r}", line) from None
    if not math.isfinite(value):
        raise NonNumericError(f"{name} is not finite: {tok!r}", line)
    return value


def parse_label_line(
    text: str,
    line: int | None = None,
    *,
    mode: str = "validate",
    class_map: ClassMap | None = None,
    warnings: list[Issue] | None = None,
) -> Annotation:
    """Parse ``class cx cy w h``.

    In ``validate`` mode out-of-range coordinates raise. In ``ingest`` mode
    coordinates above 1 (or centres below 0) are clamped and a warning is
    appended to ``warnings``; sizes that are not positive still raise.
    """
    if mode not in ("validate", "ingest"):
        raise DomainError(f"unknown parse mode {mode!r}")
    fields = text.split()
    if len(fields) != 5:
        raise FieldCountError(f"expected 5 fields, got {len(fields)}", line)
    cls_tok = fields[0]
    if cls_tok.startswith("-") and cls_tok[1:].isascii() and cls_tok[1:].isdigit():
        raise NegativeClassError(f"class id {cls_tok} is negative", line)
    if not (cls_tok.isascii() and cls_tok.isdigit()):
        raise NonNumericError(f"class id is not an integer: {cls_tok!r}", line)
    class_id = int(cls_tok)
    if class_map is not None and class_id >= len(class_map):
        raise UnknownClassError(f"class id {class_id} not in class map of size {len(class_map)}", line)

    names = ("cx", "cy", "w", "h")
    values = [_parse_float(tok, n, line) for tok, n in zip(fields[1:], names)]
    clamped = list(values)
    for i, (name, v) in enumerate(zip(names, values)):
        low_ok = v > 0.0 if name in ("w", "h") else v >= 0.0
        if low_ok and v <= 1.0:
            continue
        if mode == "ingest" and (v > 1.0 or (name in ("cx", "cy") and v < 0.0)):
            clamped[i] = min(max(v, 0.0), 1.0)
            if warnings is not None:
                warnings.append(Issue("warning", "clamped", f"{name}={v!r} clamped to {clamped[i]!r}", line=line))
            continue
        bound = "(0, 1]" if name in ("w", "h") else "[0, 1]"
        raise OutOfRangeError(f"{name}={fields[i + 1]} outside {bound}", line)
    return Annotation(class_id, NormBox(*clamped))


def parse_label_text(
    text: str,
    image_stem: str = "",
    *,
    mode: str = "validate",
    class_map: ClassMap | None = None,
    path: str | None = None,
    warnings: list[Issue] | None = None,
) -> LabelFile:
    """Parse a whole label file; blank lines are skipped. Raises on the first bad line."""
    anns = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            anns.append(parse_label_line(raw, lineno, mode=mode, class_map=class_map, warnings=warnings))
        except LabelError as exc:
            raise type(exc)(exc.message, lineno, path) from None
    return LabelFile(image_stem, tuple(anns))


def write_label_file(label: LabelFile) -> str:
    return "".join(
        f"{a.class_id} {a.box.cx:.6f} {a.box.cy:.6f} {a.box.w:.6f} {a.box.h:.6f}\n" for a in label.annotations
    )


def validate_label_text(
    text: str,
    image_stem: str = "",
    *,
    class_map: ClassMap | None = None,
    path: str | None = None,
) -> tuple[LabelFile | None, list[Issue]]:
    """Check every line, collecting all issues instead of stopping at the first.

    Boxes reaching outside the unit square by more than 1e-6 are reported as
    warnings. Returns the parsed file only when there are no errors.
    """
    issues: list[Issue] = []
    anns: list[Annotation] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            ann = parse_label_line(raw, lineno, class_map=class_map)
        except LabelError as exc:
            issues.append(Issue("error", exc.code, exc.message, path, lineno))
            continue
        if ann.box.extent_excursion() > EXTENT_TOLERANCE:
            issues.append(
                Issue("warning", "extent", f"box extends {ann.box.extent_excursion():.6f} outside the image", path, lineno)
            )
        anns.append(ann)
    if any(i.severity == "error" for i in issues):
        return None, issues
    return LabelFile(image_stem, tuple(anns)), issues


def to_pixel_xyxy(box: NormBox, width: float, height: float) -> tuple[float, float, float, float]:
    if width <= 0 or height <= 0:
        raise DomainError(f"image size must be positive, got {width}x{height}")
    x1, y1, x2, y2 = box.corners()
    return (x1 * width, y1 * height, x2 * width, y2 * height)


def from_pixel_xyxy(x1: float, y1: float, x2: float, y2: float, width: float, height: float) -> NormBox:
    if width <= 0 or height <= 0:
        raise DomainError(f"image size must be positive, got {width}x{height}")
    return NormBox.from_corners(x1 / width, y1 / height, x2 / width, y2 / height)


@dataclass(frozen=True)
class DatasetItem:
    stem: str
    subset: str  # train | val | test | none
    image: Path
    label: Path | None
    # set on items produced by augmentation
    source: str | None = None
    op: object | None = None


@dataclass(frozen=True)
class DatasetIndex:
    root: Path | None
    items: tuple[DatasetItem, ...]
    warnings: tuple[Issue, ...] = ()

    def __len__(self) -> int:
        return len(self.items)

    def stems(self) -> list[str]:
        return [it.stem for it in self.items]

    def subset(self, name: str) -> list[DatasetItem]:
        return [it for it in self.items if it.subset == name]


class DatasetError(CpmError):
    def __init__(self, issues: Sequence[Issue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


def _layout_dirs(root: Path) -> list[tuple[str, Path, Path]]:
    images, labels = root / "images", root / "labels"
    if any((images / s).is_dir() or (labels / s).is_dir() for s in SUBSETS):
        return [(s, images / s, labels / s) for s in SUBSETS]
    return [("none", images, labels)]


def _files(directory: Path, suffixes: Iterable[str]) -> list[Path]:
    if not directory.is_dir():
        return []
    wanted = tuple(suffixes)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in wanted)


def scan_dataset(root: str | Path) -> DatasetIndex:
    """Pair images with label files.

    Raises :class:`DatasetError` listing every duplicate stem and every label
    without an image. Images without labels become items with ``label=None``
    and a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError([Issue("error", "missing_root", f"dataset root {root} is not a directory")])
    items: list[DatasetItem] = []
    errors: list[Issue] = []
    warnings: list[Issue] = []
    for subset, img_dir, lbl_dir in _layout_dirs(root):
        by_stem: dict[str, Path] = {}
        for img in _files(img_dir, IMAGE_SUFFIXES):
            if img.stem in by_stem:
                errors.append(
                    Issue("error", "duplicate_stem", f"stem {img.stem!r} used by {by_stem[img.stem].name} and {img.name}", str(img))
                )
                continue
            by_stem[img.stem] = img
        labels = {p.stem: p for p in _files(lbl_dir, (".txt",))}
        for stem, lbl in labels.items():
            if stem not in by_stem:
                errors.append(Issue("error", "orphan_label", "label file has no matching image", str(lbl)))
        for stem, img in by_stem.items():
            lbl = labels.get(stem)
            if lbl is None:
                warnings.append(Issue("warning", "no_label", "image has no label file (background image)", str(img)))
            items.append(DatasetItem(stem, subset, img, lbl))
    if errors:
        raise DatasetError(errors)
    return DatasetIndex(root, tuple(items), tuple(warnings))


def load_labels(
    item: DatasetItem,
    *,
    mode: str = "validate",
    class_map: ClassMap | None = None,
    warnings: list[Issue] | None = None,
) -> LabelFile:
    if item.label is None:
        return LabelFile(item.stem, ())
    return parse_label_text(
        item.label.read_text(encoding="utf-8"),
        item.stem,
        mode=mode,
        class_map=class_map,
        path=str(item.label),
        warnings=warnings,
    )
