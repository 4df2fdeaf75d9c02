"""Detection evaluation: IoU, greedy matching, precision/recall/F1,
101-point interpolated AP and mAP over IoU thresholds.

Boxes are ``(x1, y1, x2, y2)`` tuples. Any unit works as long as
detections and ground truth share it; IoU is unchanged by per-axis
scaling, so normalized and pixel boxes give the same results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .annotations import NormBox
from .errors import DomainError

__all__ = [
    "Box",
    "Detection",
    "GroundTruth",
    "MatchResult",
    "EvalSummary",
    "COCO_THRESHOLDS",
    "RECALL_POINTS",
    "iou",
    "match_detections",
    "precision_recall_f1",
    "average_precision",
    "map_range",
    "evaluate",
]

Box = tuple[float, float, float, float]

COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS: tuple[float, ...] = tuple(i / 100 for i in range(101))


def _xyxy(box: Box | NormBox) -> Box:
    if isinstance(box, NormBox):
        return box.corners()
    return tuple(box)  # type: ignore[return-value]


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: Box
    confidence: float
    image: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", _xyxy(self.box))
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    class_id: int
    box: Box
    image: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", _xyxy(self.box))


def iou(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


@dataclass
class MatchResult:
    """Outcome of matching, indexed like the inputs.

    ``det_gt[i]`` is the ground-truth index matched by detection ``i`` or
    None for a false positive. ``gt_det[j]`` is the reverse.
    """

    det_gt: list[int | None]
    gt_det: list[int | None]
    order: list[int] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return sum(m is not None for m in self.det_gt)

    @property
    def fp(self) -> int:
        return sum(m is None for m in self.det_gt)

    def flags_in_rank_order(self) -> list[bool]:
        return [self.det_gt[i] is not None for i in self.order]


def _rank(dets: Sequence[Detection]) -> list[int]:
    # sorted() is stable: equal confidences keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float
) -> MatchResult:
    """Greedy matching in decreasing confidence, per image.

    Each detection takes the still-unmatched ground truth in its image with
    the highest IoU, if that IoU reaches ``iou_threshold`` (ties go to the
    lower ground-truth index). Classes are not checked; pass one class.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise DomainError(f"IoU threshold {iou_threshold} outside (0, 1)")
    by_image: dict[str, list[int]] = {}
    for j, g in enumerate(gts):
        by_image.setdefault(g.image, []).append(j)
    det_gt: list[int | None] = [None] * len(dets)
    gt_det: list[int | None] = [None] * len(gts)
    order = _rank(dets)
    for i in order:
        d = dets[i]
        best, best_iou = None, iou_threshold
        for j in by_image.get(d.image, ()):
            if gt_det[j] is not None:
                continue
            v = iou(d.box, gts[j].box)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = j, v
        if best is not None:
            det_gt[i] = best
            gt_det[best] = i
    return MatchResult(det_gt, gt_det, order)


def precision_recall_f1(match: MatchResult, gt_count: int) -> tuple[float, float, float]:
    if gt_count < 0:
        raise DomainError("ground-truth count must be non-negative")
    tp, fp = match.tp, match.fp
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / gt_count if gt_count else 1.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _ap_from_flags(flags: Sequence[bool], n_gt: int) -> float:
    if n_gt == 0:
        return 0.0 if flags else 1.0
    precision, recall = [], []
    tp = 0
    for k, hit in enumerate(flags, 1):
        tp += hit
        precision.append(tp / k)
        recall.append(tp / n_gt)
    # monotone envelope from the right
    envelope = precision[:]
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])
    total = 0.0
    k = 0
    for r in RECALL_POINTS:
        while k < len(recall) and recall[k] < r:
            k += 1
        if k == len(recall):
            break
        total += envelope[k]
    return total / len(RECALL_POINTS)


def average_precision(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float
) -> float:
    """101-point interpolated AP for a single class.

    With no ground truth the AP is 0 if there are detections and 1 if not.
    """
    match = match_detections(dets, gts, iou_threshold)
    return _ap_from_flags(match.flags_in_rank_order(), len(gts))


@dataclass
class EvalSummary:
    thresholds: tuple[float, ...]
    per_class_ap: dict[int, tuple[float, ...]]
    map_by_threshold: tuple[float, ...]
    mean_ap: float
    precision: float
    recall: float
    f1: float
    skipped_classes: tuple[int, ...] = ()

    def ap_at(self, threshold: float) -> float:
        return self.map_by_threshold[self.thresholds.index(threshold)]

    def to_json(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "map": self.mean_ap,
            "map_by_threshold": list(self.map_by_threshold),
            "per_class_ap": {str(c): list(v) for c, v in sorted(self.per_class_ap.items())},
            "skipped_classes": list(self.skipped_classes),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _group(items: Iterable, classes: set[int]) -> dict[int, list]:
    out: dict[int, list] = {c: [] for c in classes}
    for it in items:
        out[it.class_id].append(it)
    return out


def map_range(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
    *,
    conf_threshold: float = 0.25,
    skip_empty_classes: bool = True,
    classes: Iterable[int] | None = None,
) -> EvalSummary:
    """Per-class AP at each IoU threshold, averaged over classes then thresholds.

    Classes with neither detections nor ground truth are skipped unless
    ``skip_empty_classes`` is False (then they score 1). If every class is
    skipped the mAP is 1. Precision, recall and F1 are taken at IoU 0.5 over
    detections with confidence >= ``conf_threshold``.
    """
    thresholds = tuple(thresholds)
    if not thresholds or any(not 0.0 < t < 1.0 for t in thresholds):
        raise DomainError(f"IoU thresholds must be a nonempty list in (0, 1): {thresholds}")
    all_classes = {d.class_id for d in dets} | {g.class_id for g in gts} | set(classes or ())
    det_by = _group(dets, all_classes)
    gt_by = _group(gts, all_classes)

    per_class: dict[int, tuple[float, ...]] = {}
    skipped = []
    for c in sorted(all_classes):
        if skip_empty_classes and not det_by[c] and not gt_by[c]:
            skipped.append(c)
            continue
        per_class[c] = tuple(average_precision(det_by[c], gt_by[c], t) for t in thresholds)

    if per_class:
        by_thr = tuple(sum(v[k] for v in per_class.values()) / len(per_class) for k in range(len(thresholds)))
    else:
        by_thr = tuple(1.0 for _ in thresholds)
    mean_ap = sum(by_thr) / len(by_thr)

    tp = fp = 0
    for c in sorted(all_classes):
        kept = [d for d in det_by[c] if d.confidence >= conf_threshold]
        m = match_detections(kept, gt_by[c], 0.5)
        tp += m.tp
        fp += m.fp
    p, r, f1 = precision_recall_f1(MatchResult([0] * tp + [None] * fp, []), len(gts))
    return EvalSummary(thresholds, per_class, by_thr, mean_ap, p, r, f1, tuple(skipped))


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    *,
    conf_threshold: float = 0.25,
    skip_empty_classes: bool = True,
    class_names: Sequence[str] | None = None,
) -> dict:
    """mAP50, mAP50-95, precision/recall/F1 and a per-class breakdown as JSON-ready data."""
    summary = map_range(
        dets, gts, COCO_THRESHOLDS, conf_threshold=conf_threshold, skip_empty_classes=skip_empty_classes
    )
    per_class = []
    for c, aps in sorted(summary.per_class_ap.items()):
        per_class.append(
            {
                "class_id": c,
                "name": class_names[c] if class_names is not None and c < len(class_names) else None,
                "ground_truths": sum(g.class_id == c for g in gts),
                "detections": sum(d.class_id == c for d in dets),
                "ap50": aps[0],
                "ap50_95": sum(aps) / len(aps),
            }
        )
    return {
        "map50": summary.map_by_threshold[0],
        "map50_95": summary.mean_ap,
        "precision": summary.precision,
        "recall": summary.recall,
        "f1": summary.f1,
        "conf_threshold": conf_threshold,
        "iou_thresholds": list(COCO_THRESHOLDS),
        "skipped_classes": list(summary.skipped_classes),
        "per_class": per_class,
    }
