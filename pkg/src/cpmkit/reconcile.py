"""Outdoor as-built check of windows against the BIM target list.

The pipeline gates drone images on sharpness, contrast and exposure. It then
registers the scene to building coordinates from surveyed coordinate
markers and confirms each target window by its QR sticker. Targets that
cannot be confirmed go to a pending list with a reason code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CpmError, DomainError
from .raster import LuminanceGrid, exposure_clip_fraction, laplacian_variance, rms_contrast

__all__ = [
    "TargetWindow",
    "MarkerObservation",
    "QrObservation",
    "SimilarityTransform",
    "SimilarityFit",
    "QualityThresholds",
    "QualityMetrics",
    "Reason",
    "PendingEntry",
    "ReconciliationReport",
    "ReconcileConfig",
    "RegistrationError",
    "TooFewPointsError",
    "DegenerateConfigurationError",
    "ReflectionError",
    "ConfigError",
    "assess_quality",
    "estimate_similarity",
    "apply_transform",
    "match_observations",
    "build_report",
    "load_targets",
    "load_markers",
    "load_observations",
    "report_json",
]


NO_OBSERVATION_NOTE = "no QR observation for this id; needs a site check or new images"


class RegistrationError(CpmError):
    pass


class TooFewPointsError(RegistrationError):
    pass


class DegenerateConfigurationError(RegistrationError):
    pass


class ReflectionError(RegistrationError):
    pass


class ConfigError(CpmError):
    pass


def _vec3(v: Sequence[float], name: str) -> tuple[float, float, float]:
    if len(v) != 3:
        raise DomainError(f"{name} must have 3 components, got {len(v)}")
    return (float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class TargetWindow:
    window_id: str
    planned_position: tuple[float, float, float]
    planned_normal: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        if not self.window_id:
            raise DomainError("window id must be nonempty")
        object.__setattr__(self, "planned_position", _vec3(self.planned_position, "position"))
        n = _vec3(self.planned_normal, "normal")
        if abs(math.sqrt(sum(c * c for c in n)) - 1.0) > 1e-9:
            raise DomainError(f"normal of {self.window_id} is not a unit vector: {n}")
        object.__setattr__(self, "planned_normal", n)


@dataclass(frozen=True)
class MarkerObservation:
    marker_id: str
    observed_position: tuple[float, float, float]
    known_position: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "observed_position", _vec3(self.observed_position, "scene"))
        object.__setattr__(self, "known_position", _vec3(self.known_position, "building"))


@dataclass(frozen=True)
class QrObservation:
    window_id: str
    observed_position: tuple[float, float, float]
    source_image: str = ""
    decode_quality: float = 1.0

    def __post_init__(self) -> None:
        if not self.window_id:
            raise DomainError("QR payload must be nonempty")
        object.__setattr__(self, "observed_position", _vec3(self.observed_position, "scene"))
        if not 0.0 <= self.decode_quality <= 1.0:
            raise DomainError(f"decode quality {self.decode_quality} outside [0, 1]")


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> scale * rotation @ x + translation``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9, rtol=0) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise DomainError("rotation must be orthonormal with determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls(1.0, np.eye(3), np.zeros(3))

    def inverse(self) -> SimilarityTransform:
        r_inv = self.rotation.T
        return SimilarityTransform(1.0 / self.scale, r_inv, -(r_inv @ self.translation) / self.scale)

    def compose(self, other: SimilarityTransform) -> SimilarityTransform:
        """``self ∘ other``: apply ``other`` first."""
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
        )

    def to_json(self) -> dict:
        return {
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }


@dataclass(frozen=True)
class SimilarityFit:
    transform: SimilarityTransform
    rms_residual: float
    n_points: int


def apply_transform(t: SimilarityTransform, p: Sequence[float]) -> np.ndarray:
    return t.scale * (t.rotation @ np.asarray(p, dtype=float)) + t.translation


def estimate_similarity(
    correspondences: Iterable[tuple[Sequence[float], Sequence[float]]],
) -> SimilarityFit:
    """Least-squares similarity mapping scene points onto building points.

    Closed form from the SVD of the cross-covariance of the centred point
    sets. Coplanar scene points are fine; collinear ones are rejected, as is
    data that only a mirror image would fit.
    """
    pairs = list(correspondences)
    if len(pairs) < 3:
        raise TooFewPointsError(f"need at least 3 correspondences, got {len(pairs)}")
    src = np.array([p[0] for p in pairs], dtype=float).reshape(-1, 3)
    dst = np.array([p[1] for p in pairs], dtype=float).reshape(-1, 3)
    n = len(src)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    sc, dc = src - mu_s, dst - mu_d

    spread = np.linalg.svd(sc, compute_uv=False)
    if spread[0] == 0.0 or spread[1] <= 1e-9 * spread[0]:
        raise DegenerateConfigurationError("scene points are coincident or collinear")

    cov = dc.T @ sc / n
    u, d, vt = np.linalg.svd(cov)
    flip = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        if d[2] > 1e-9 * d[0]:
            raise ReflectionError("points are related by a reflection, not a rotation")
        flip[2, 2] = -1.0
    rotation = u @ flip @ vt
    var_s = (sc * sc).sum() / n
    scale = float(np.trace(np.diag(d) @ flip) / var_s)
    if scale <= 0:
        raise ReflectionError("least-squares scale is not positive")
    translation = mu_d - scale * rotation @ mu_s
    # re-orthonormalize against SVD round-off
    uu, _, vv = np.linalg.svd(rotation)
    rotation = uu @ vv
    transform = SimilarityTransform(scale, rotation, translation)
    resid = dst - (scale * (src @ rotation.T) + translation)
    rms = float(math.sqrt((resid * resid).sum() / n))
    return SimilarityFit(transform, rms, n)


@dataclass(frozen=True)
class QualityThresholds:
    min_sharpness: float = 100.0
    min_contrast: float = 0.05
    max_clip_fraction: float = 0.2

    @classmethod
    def from_json(cls, obj: Mapping) -> QualityThresholds:
        try:
            return cls(float(obj["min_sharpness"]), float(obj["min_contrast"]), float(obj["max_clip_fraction"]))
        except KeyError as exc:
            raise ConfigError(f"quality thresholds missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class QualityMetrics:
    image: str
    sharpness: float
    contrast: float
    clip_fraction: float
    sharpness_ok: bool
    contrast_ok: bool
    exposure_ok: bool

    @property
    def passed(self) -> bool:
        return self.sharpness_ok and self.contrast_ok and self.exposure_ok

    def to_json(self) -> dict:
        return {
            "image": self.image,
            "sharpness": self.sharpness,
            "contrast": self.contrast,
            "clip_fraction": self.clip_fraction,
            "sharpness_ok": self.sharpness_ok,
            "contrast_ok": self.contrast_ok,
            "exposure_ok": self.exposure_ok,
            "passed": self.passed,
        }


def assess_quality(grid: LuminanceGrid, thresholds: QualityThresholds, image: str = "") -> QualityMetrics:
    s = laplacian_variance(grid)
    c = rms_contrast(grid)
    e = exposure_clip_fraction(grid)
    return QualityMetrics(
        image, s, c, e,
        s >= thresholds.min_sharpness,
        c >= thresholds.min_contrast,
        e <= thresholds.max_clip_fraction,
    )


class Reason(str, Enum):
    NO_OBSERVATION = "NO_OBSERVATION"
    LOW_QUALITY_IMAGES = "LOW_QUALITY_IMAGES"
    ID_NOT_IN_TARGETS = "ID_NOT_IN_TARGETS"
    POSITION_MISMATCH = "POSITION_MISMATCH"
    INSUFFICIENT_MARKERS = "INSUFFICIENT_MARKERS"


@dataclass(frozen=True)
class PendingEntry:
    window_id: str
    reason: Reason
    note: str = ""

    def to_json(self) -> dict:
        return {"window_id": self.window_id, "reason": self.reason.value, "note": self.note}


@dataclass
class ReconciliationReport:
    """Every target id lands in exactly one of confirmed, position_mismatch
    or pending. QR ids that are not targets are listed under
    ``unknown_observations``."""

    confirmed: list[tuple[str, float]] = field(default_factory=list)
    position_mismatch: list[tuple[str, float]] = field(default_factory=list)
    pending: list[PendingEntry] = field(default_factory=list)
    quality_rejections: list[QualityMetrics] = field(default_factory=list)
    unknown_observations: list[PendingEntry] = field(default_factory=list)
    duplicates: list[tuple[str, float]] = field(default_factory=list)
    registration: SimilarityFit | None = None

    def to_json(self) -> dict:
        reg = None
        if self.registration is not None:
            reg = dict(self.registration.transform.to_json(),
                       rms_residual=self.registration.rms_residual,
                       n_markers=self.registration.n_points)
        return {
            "confirmed": [{"window_id": w, "residual_m": r} for w, r in self.confirmed],
            "position_mismatch": [{"window_id": w, "residual_m": r} for w, r in self.position_mismatch],
            "pending": [p.to_json() for p in self.pending],
            "quality_rejections": [q.to_json() for q in self.quality_rejections],
            "unknown_observations": [p.to_json() for p in self.unknown_observations],
            "duplicate_observations": [{"window_id": w, "residual_m": r} for w, r in self.duplicates],
            "registration": reg,
        }


def match_observations(
    targets: Sequence[TargetWindow],
    obs: Sequence[QrObservation],
    transform: SimilarityTransform,
    pos_tol: float = 0.10,
) -> ReconciliationReport:
    """Check QR observations against the target list.

    A target is confirmed when some observation of its id lands within
    ``pos_tol`` metres of the planned position, else it is a position
    mismatch. The smallest residual is kept; other observations of the same
    id are listed as duplicates. Targets never observed are pending with
    NO_OBSERVATION.
    """
    if not pos_tol > 0:
        raise DomainError(f"position tolerance must be positive, got {pos_tol}")
    by_id: dict[str, TargetWindow] = {}
    for t in targets:
        if t.window_id in by_id:
            raise DomainError(f"duplicate window id {t.window_id!r} in target list")
        by_id[t.window_id] = t
    residuals: dict[str, list[float]] = {}
    report = ReconciliationReport()
    unknown: dict[str, int] = {}
    for o in obs:
        target = by_id.get(o.window_id)
        if target is None:
            unknown[o.window_id] = unknown.get(o.window_id, 0) + 1
            continue
        p = apply_transform(transform, o.observed_position)
        residuals.setdefault(o.window_id, []).append(float(np.linalg.norm(p - np.asarray(target.planned_position))))
    for wid in sorted(by_id):
        rs = residuals.get(wid)
        if not rs:
            report.pending.append(PendingEntry(wid, Reason.NO_OBSERVATION, NO_OBSERVATION_NOTE))
            continue
        rs = sorted(rs)
        (report.confirmed if rs[0] <= pos_tol else report.position_mismatch).append((wid, rs[0]))
        report.duplicates.extend((wid, r) for r in rs[1:])
    report.unknown_observations = [
        PendingEntry(wid, Reason.ID_NOT_IN_TARGETS, f"{n} observation(s)") for wid, n in sorted(unknown.items())
    ]
    return report


@dataclass(frozen=True)
class ReconcileConfig:
    thresholds: QualityThresholds = QualityThresholds()
    pos_tol: float = 0.10
    # image id -> window ids the image is expected to show
    coverage: Mapping[str, Sequence[str]] | None = None

    @classmethod
    def from_json(cls, obj: Mapping) -> ReconcileConfig:
        if not isinstance(obj, Mapping):
            raise ConfigError("reconcile config must be an object")
        for key in ("quality", "pos_tol"):
            if key not in obj:
                raise ConfigError(f"reconcile config missing required field {key!r}")
        pos_tol = float(obj["pos_tol"])
        if not pos_tol > 0:
            raise ConfigError(f"pos_tol must be positive, got {pos_tol}")
        return cls(QualityThresholds.from_json(obj["quality"]), pos_tol, obj.get("coverage"))


def build_report(
    targets: Sequence[TargetWindow],
    images: Mapping[str, LuminanceGrid | QualityMetrics],
    markers: Sequence[MarkerObservation],
    obs: Sequence[QrObservation],
    config: ReconcileConfig,
) -> ReconciliationReport:
    """Gate images, register via markers, match QR observations.

    ``images`` maps image ids to pixels (or precomputed metrics).
    Observations from rejected images are discarded. Without a usable
    marker registration every target is pending with INSUFFICIENT_MARKERS.
    With coverage hints, a target whose covering images all failed the gate
    is pending with LOW_QUALITY_IMAGES instead of NO_OBSERVATION.
    """
    if config is None:
        raise ConfigError("reconcile config is required")
    metrics = {}
    for image_id in sorted(images):
        v = images[image_id]
        metrics[image_id] = v if isinstance(v, QualityMetrics) else assess_quality(v, config.thresholds, image_id)
    rejected = {k for k, m in metrics.items() if not m.passed}
    rejections = [metrics[k] for k in sorted(rejected)]

    try:
        fit = estimate_similarity((m.observed_position, m.known_position) for m in markers)
    except RegistrationError as exc:
        report = ReconciliationReport(quality_rejections=rejections)
        report.pending = [
            PendingEntry(t.window_id, Reason.INSUFFICIENT_MARKERS, str(exc))
            for t in sorted(targets, key=lambda t: t.window_id)
        ]
        return report

    usable = [o for o in obs if o.source_image not in rejected]
    report = match_observations(targets, usable, fit.transform, config.pos_tol)
    report.registration = fit
    report.quality_rejections = rejections

    if config.coverage:
        covering: dict[str, list[str]] = {}
        for image_id, wids in config.coverage.items():
            for wid in wids:
                covering.setdefault(wid, []).append(image_id)
        pending = []
        for entry in report.pending:
            imgs = covering.get(entry.window_id, [])
            if imgs and all(i in rejected for i in imgs):
                entry = PendingEntry(entry.window_id, Reason.LOW_QUALITY_IMAGES, "covering images: " + ", ".join(sorted(imgs)))
            pending.append(entry)
        report.pending = pending
    return report


def load_targets(data: list) -> list[TargetWindow]:
    return [TargetWindow(d["window_id"], d["position"], d.get("normal", (0.0, 0.0, 1.0))) for d in data]


def load_markers(data: list) -> list[MarkerObservation]:
    return [MarkerObservation(d["marker_id"], d["scene"], d["building"]) for d in data]


def load_observations(data: list) -> list[QrObservation]:
    return [
        QrObservation(d["window_id"], d["scene"], d.get("image", ""), float(d.get("decode_quality", 1.0)))
        for d in data
    ]


def report_json(report: ReconciliationReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
