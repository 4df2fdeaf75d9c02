"""Window-installation progress: the six installation parts, the eight
completion checkpoints, precedence between parts and timeline inference
from detector observations.

Parts
-----
P1 frame fixing, P2 hinges and sashes, P3 sealing and insulation,
P4 inner sashes (double-layer windows only), P5 painting,
P6 membrane removal.

P3 may happen before or after the P4/P5 branch, so the precedence relation
is a partial order rather than a sequence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DomainError

__all__ = [
    "Part",
    "Status",
    "WindowType",
    "PartStateVector",
    "Checkpoint",
    "ObservationEvent",
    "Anomaly",
    "WindowTimeline",
    "PrecedenceError",
    "UnknownCheckpointError",
    "CHECKPOINT_PERCENTAGES",
    "PRECEDENCE",
    "checkpoint_table",
    "checkpoint_class_names",
    "completion_percentage",
    "legal_order",
    "is_legal_transition",
    "satisfies_precedence",
    "checkpoint_successors",
    "infer_timeline",
    "infer_timelines",
]


class Part(IntEnum):
    P1 = 1
    P2 = 2
    P3 = 3
    P4 = 4
    P5 = 5
    P6 = 6

    @property
    def description(self) -> str:
        return _PART_DESCRIPTIONS[self]


_PART_DESCRIPTIONS = {
    Part.P1: "secure pre-assembled window frame in the wall opening",
    Part.P2: "attach hinges, install sashes, test tightness",
    Part.P3: "gap filling, waterproofing, sound and heat insulation, sealing strips",
    Part.P4: "install inner sashes (double-layer windows)",
    Part.P5: "painting",
    Part.P6: "remove plastic membrane from glass, final tasks",
}


class Status(IntEnum):
    NOT_STARTED = 0
    IN_PROGRESS = 1
    DONE = 2


class WindowType(str, Enum):
    SINGLE_LAYER = "single_layer"
    DOUBLE_LAYER = "double_layer"


# (earlier, later): ``later`` may start only once ``earlier`` is done.
PRECEDENCE: tuple[tuple[Part, Part], ...] = (
    (Part.P1, Part.P2),
    (Part.P2, Part.P3),
    (Part.P2, Part.P4),
    (Part.P4, Part.P5),
    (Part.P3, Part.P6),
    (Part.P4, Part.P6),
    (Part.P5, Part.P6),
)

CHECKPOINT_PERCENTAGES = (20, 40, 60, 65, 70, 85, 95, 100)


class PrecedenceError(DomainError):
    pass


class UnknownCheckpointError(DomainError):
    pass


@dataclass(frozen=True)
class PartStateVector:
    statuses: tuple[Status, Status, Status, Status, Status, Status]
    window_type: WindowType = WindowType.DOUBLE_LAYER

    def __post_init__(self) -> None:
        if len(self.statuses) != 6:
            raise DomainError(f"need six part statuses, got {len(self.statuses)}")
        object.__setattr__(self, "statuses", tuple(Status(s) for s in self.statuses))
        object.__setattr__(self, "window_type", WindowType(self.window_type))

    @classmethod
    def from_parts(
        cls,
        done: Iterable[Part | int] = (),
        in_progress: Iterable[Part | int] = (),
        window_type: WindowType | str = WindowType.DOUBLE_LAYER,
    ) -> PartStateVector:
        statuses = [Status.NOT_STARTED] * 6
        for p in in_progress:
            statuses[int(p) - 1] = Status.IN_PROGRESS
        for p in done:
            statuses[int(p) - 1] = Status.DONE
        return cls(tuple(statuses), WindowType(window_type))

    def status(self, part: Part | int) -> Status:
        return self.statuses[int(part) - 1]

    def effective(self, part: Part | int) -> Status:
        """Status with the inner-sash part counted as done on single-layer windows."""
        if self.window_type is WindowType.SINGLE_LAYER and int(part) == Part.P4:
            return Status.DONE
        return self.statuses[int(part) - 1]

    def __le__(self, other: PartStateVector) -> bool:
        return self.window_type == other.window_type and all(
            self.effective(p) <= other.effective(p) for p in Part
        )


@dataclass(frozen=True)
class Checkpoint:
    """One completion checkpoint: the minimum status each listed part needs."""

    ordinal: int
    percentage: int
    requirements: tuple[tuple[Part, Status], ...]
    double_layer_only: bool
    description: str

    def satisfied_by(self, state: PartStateVector) -> bool:
        if self.double_layer_only and state.window_type is WindowType.SINGLE_LAYER:
            return False
        return all(state.effective(p) >= s for p, s in self.requirements)

    @property
    def parts(self) -> frozenset[Part]:
        return frozenset(p for p, _ in self.requirements)


def _req(*parts: Part, partial: Part | None = None) -> tuple[tuple[Part, Status], ...]:
    out = [(p, Status.DONE) for p in parts]
    if partial is not None:
        out.append((partial, Status.IN_PROGRESS))
    return tuple(out)


_TABLE = (
    Checkpoint(1, 20, _req(Part.P1), False, "frame secured in the wall opening"),
    Checkpoint(2, 40, _req(Part.P1, Part.P2), False, "hinges and sashes installed"),
    Checkpoint(3, 60, _req(Part.P1, Part.P2, Part.P4), True, "inner sashes installed"),
    Checkpoint(4, 65, _req(Part.P1, Part.P2, partial=Part.P3), False, "sealing and insulation under way"),
    Checkpoint(5, 70, _req(Part.P1, Part.P2, Part.P3), False, "sealing and insulation complete"),
    Checkpoint(6, 85, _req(Part.P1, Part.P2, Part.P3, Part.P4), True, "sealed, inner sashes installed"),
    Checkpoint(7, 95, _req(Part.P1, Part.P2, Part.P3, Part.P4, Part.P5), False, "painting complete"),
    Checkpoint(8, 100, _req(*Part), False, "membrane removed, installation complete"),
)


def checkpoint_table() -> list[Checkpoint]:
    return list(_TABLE)


def checkpoint_class_names() -> list[str]:
    """Default detector class names, one per checkpoint, indexed by class id."""
    return [f"window_{cp.percentage}" for cp in _TABLE]


def _predecessors(window_type: WindowType) -> dict[Part, set[Part]]:
    preds: dict[Part, set[Part]] = {p: set() for p in Part}
    for a, b in PRECEDENCE:
        preds[b].add(a)
    if window_type is WindowType.SINGLE_LAYER:
        # inner sashes do not exist: P5 inherits P4's predecessor
        preds[Part.P5] = (preds[Part.P5] - {Part.P4}) | preds[Part.P4]
        preds[Part.P6].discard(Part.P4)
        preds[Part.P4] = set()
    return preds


def legal_order(window_type: WindowType | str = WindowType.DOUBLE_LAYER) -> dict[Part, frozenset[Part]]:
    """Direct predecessors of every part for the given window type."""
    return {p: frozenset(s) for p, s in _predecessors(WindowType(window_type)).items()}


def satisfies_precedence(state: PartStateVector) -> bool:
    preds = _predecessors(state.window_type)
    for part in Part:
        if state.window_type is WindowType.SINGLE_LAYER and part is Part.P4:
            continue
        if state.status(part) > Status.NOT_STARTED:
            if any(state.effective(q) != Status.DONE for q in preds[part]):
                return False
    return True


def completion_percentage(state: PartStateVector) -> int:
    """Highest checkpoint percentage whose requirements the state meets (0 if none)."""
    if not satisfies_precedence(state):
        raise PrecedenceError(f"part states violate installation order: {_fmt_state(state)}")
    best = 0
    for cp in _TABLE:
        if cp.satisfied_by(state):
            best = max(best, cp.percentage)
    return best


def is_legal_transition(src: PartStateVector, dst: PartStateVector) -> bool:
    """Statuses only advance and both states respect the installation order."""
    if src.window_type != dst.window_type:
        return False
    if not (satisfies_precedence(src) and satisfies_precedence(dst)):
        return False
    return all(a <= b for a, b in zip(src.statuses, dst.statuses))


def _fmt_state(state: PartStateVector) -> str:
    return ", ".join(f"P{i}={s.name.lower()}" for i, s in enumerate(state.statuses, 1))


def _all_states(window_type: WindowType) -> Iterator[PartStateVector]:
    for combo in itertools.product(Status, repeat=6):
        if window_type is WindowType.SINGLE_LAYER and combo[3] != Status.NOT_STARTED:
            continue
        state = PartStateVector(combo, window_type)
        if satisfies_precedence(state):
            yield state


@lru_cache(maxsize=None)
def _successor_map(window_type: WindowType) -> dict[int, frozenset[int]]:
    # An observation step may advance a single part (by one or two status
    # levels). The percentages reachable that way form the checkpoint graph.
    states = list(_all_states(window_type))
    pct = {s: completion_percentage(s) for s in states}
    succ: dict[int, set[int]] = {}
    for s in states:
        for i in range(6):
            for new in Status:
                if new <= s.statuses[i]:
                    continue
                t = PartStateVector(s.statuses[:i] + (new,) + s.statuses[i + 1 :], window_type)
                if t in pct:
                    succ.setdefault(pct[s], set()).add(pct[t])
    return {k: frozenset(v) for k, v in succ.items()}


def checkpoint_successors(
    percentage: int, window_type: WindowType | str = WindowType.DOUBLE_LAYER
) -> frozenset[int]:
    """Percentages reachable from ``percentage`` when one part advances."""
    return _successor_map(WindowType(window_type)).get(percentage, frozenset())


@dataclass(frozen=True)
class ObservationEvent:
    window_id: str
    timestamp: float
    checkpoint_class: int
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Anomaly:
    kind: str  # regression | illegal_jump | low_confidence_gap
    timestamp: float
    from_percentage: int
    to_percentage: int
    confidence: float

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "timestamp": self.timestamp,
            "from": self.from_percentage,
            "to": self.to_percentage,
            "confidence": self.confidence,
        }


@dataclass
class WindowTimeline:
    window_id: str
    window_type: WindowType = WindowType.DOUBLE_LAYER
    history: list[tuple[float, int]] = field(default_factory=list)
    anomalies: list[Anomaly] = field(default_factory=list)

    @property
    def current_percentage(self) -> int:
        return self.history[-1][1] if self.history else 0

    def to_json(self) -> dict:
        return {
            "window_id": self.window_id,
            "window_type": self.window_type.value,
            "current_percentage": self.current_percentage,
            "history": [{"timestamp": t, "percentage": p} for t, p in self.history],
            "anomalies": [a.to_json() for a in self.anomalies],
        }


def _class_percentage(checkpoint_class: int, class_percentages: Sequence[int]) -> int:
    if not 0 <= checkpoint_class < len(class_percentages):
        raise UnknownCheckpointError(f"unknown checkpoint class {checkpoint_class}")
    return class_percentages[checkpoint_class]


def infer_timeline(
    events: Sequence[ObservationEvent],
    min_confidence: float = 0.5,
    window_type: WindowType | str = WindowType.DOUBLE_LAYER,
    class_percentages: Sequence[int] = CHECKPOINT_PERCENTAGES,
) -> WindowTimeline:
    """Fold one window's detector observations into an accepted progress history.

    The first confident observation anchors the timeline. After that a lower
    checkpoint is a ``regression`` (kept as anomaly, state unchanged) and a
    higher checkpoint that needs more than one part to advance is an
    ``illegal_jump`` (flagged, but accepted). Observations below
    ``min_confidence`` that would have advanced the state become
    ``low_confidence_gap`` anomalies.
    """
    window_type = WindowType(window_type)
    ids = {e.window_id for e in events}
    if len(ids) > 1:
        raise DomainError(f"events for several windows: {sorted(ids)}")
    timeline = WindowTimeline(next(iter(ids)) if ids else "", window_type)
    for ev in sorted(events, key=lambda e: e.timestamp):
        pct = _class_percentage(ev.checkpoint_class, class_percentages)
        cur = timeline.current_percentage
        anchored = bool(timeline.history)
        if ev.confidence < min_confidence:
            if pct > cur:
                timeline.anomalies.append(Anomaly("low_confidence_gap", ev.timestamp, cur, pct, ev.confidence))
            continue
        if window_type is WindowType.SINGLE_LAYER and pct not in _single_layer_percentages():
            timeline.anomalies.append(Anomaly("illegal_jump", ev.timestamp, cur, pct, ev.confidence))
            continue
        if not anchored:
            timeline.history.append((ev.timestamp, pct))
        elif pct < cur:
            timeline.anomalies.append(Anomaly("regression", ev.timestamp, cur, pct, ev.confidence))
        elif pct > cur:
            if pct not in checkpoint_successors(cur, window_type):
                timeline.anomalies.append(Anomaly("illegal_jump", ev.timestamp, cur, pct, ev.confidence))
            timeline.history.append((ev.timestamp, pct))
    return timeline


@lru_cache(maxsize=None)
def _single_layer_percentages() -> frozenset[int]:
    return frozenset(cp.percentage for cp in _TABLE if not cp.double_layer_only)


def infer_timelines(
    events: Iterable[ObservationEvent],
    min_confidence: float = 0.5,
    window_types: Mapping[str, WindowType | str] | None = None,
    class_percentages: Sequence[int] = CHECKPOINT_PERCENTAGES,
) -> list[WindowTimeline]:
    """Per-window timelines, ordered by window id."""
    by_window: dict[str, list[ObservationEvent]] = {}
    for ev in events:
        by_window.setdefault(ev.window_id, []).append(ev)
    window_types = window_types or {}
    return [
        infer_timeline(
            by_window[wid],
            min_confidence,
            window_types.get(wid, WindowType.DOUBLE_LAYER),
            class_percentages,
        )
        for wid in sorted(by_window)
    ]
