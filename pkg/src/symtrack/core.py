"""Domain types shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence as Seq

import numpy as np


class SequenceError(ValueError):
    """Raised when a detection sequence violates its invariants.

    ``problems`` holds one ``(kind, record)`` entry per violation found.
    """

    def __init__(self, problems: list[tuple[str, object]]):
        self.problems = problems
        lines = [f"{kind}: {record!r}" for kind, record in problems]
        super().__init__("; ".join(lines))


@dataclass(frozen=True)
class Detection:
    id: int
    frame: int
    bbox: tuple[float, float, float, float]
    score: float
    feature: np.ndarray
    context_feature: np.ndarray | None = None

    @property
    def center(self) -> np.ndarray:
        x, y, w, h = self.bbox
        return np.array([x + 0.5 * w, y + 0.5 * h])

    @property
    def area(self) -> float:
        return float(self.bbox[2] * self.bbox[3])


@dataclass(frozen=True)
class Shot:
    shot_id: int
    start: int
    end: int

    def contains(self, frame: int) -> bool:
        return self.start <= frame <= self.end


@dataclass(frozen=True)
class Tracklet:
    tracklet_id: int
    shot_id: int
    detections: tuple[int, ...]
    frames: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.detections)

    @property
    def start(self) -> int:
        return self.frames[0]

    @property
    def end(self) -> int:
        return self.frames[-1]

    def overlaps(self, other: "Tracklet") -> bool:
        if self.end < other.start or other.end < self.start:
            return False
        return not set(self.frames).isdisjoint(other.frames)


@dataclass(frozen=True)
class Trajectory:
    identity: int
    tracklet_ids: tuple[int, ...]


def embed_distance(a, b) -> float:
    """Squared Euclidean distance between two embedding vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.dot(d.ravel(), d.ravel()))


def pairwise_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """All squared Euclidean distances between rows of A and rows of B."""
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass
class DetectionSequence:
    """A validated sequence with per-shot and per-frame lookups."""

    detections: tuple[Detection, ...]
    shots: tuple[Shot, ...]
    feature_dim: int
    context_dim: int
    by_id: dict[int, Detection] = field(repr=False)
    shot_of: dict[int, int] = field(repr=False)
    by_shot: dict[int, list[Detection]] = field(repr=False)
    by_frame: dict[int, list[Detection]] = field(repr=False)

    def __len__(self) -> int:
        return len(self.detections)

    def frames_of_shot(self, shot_id: int) -> list[int]:
        return sorted({d.frame for d in self.by_shot[shot_id]})

    def has_context(self) -> bool:
        return self.context_dim > 0 and all(
            d.context_feature is not None for d in self.detections
        )


def validate_sequence(
    detections: Iterable[Detection], shots: Seq[Shot]
) -> DetectionSequence:
    detections = tuple(sorted(detections, key=lambda d: (d.frame, d.id)))
    shots = tuple(sorted(shots, key=lambda s: s.start))
    problems: list[tuple[str, object]] = []

    for prev, cur in zip(shots, shots[1:]):
        if cur.start <= prev.end:
            problems.append(("overlapping shots", (prev, cur)))
    for s in shots:
        if s.end < s.start:
            problems.append(("empty shot range", s))
    if len({s.shot_id for s in shots}) != len(shots):
        problems.append(("duplicate shot id", [s.shot_id for s in shots]))

    feature_dim = detections[0].feature.shape[0] if detections else 0
    ctx0 = detections[0].context_feature if detections else None
    context_dim = 0 if ctx0 is None else ctx0.shape[0]

    by_id: dict[int, Detection] = {}
    shot_of: dict[int, int] = {}
    by_shot: dict[int, list[Detection]] = {s.shot_id: [] for s in shots}
    by_frame: dict[int, list[Detection]] = {}
    starts = [s.start for s in shots]
    for d in detections:
        if d.id in by_id:
            problems.append(("duplicate id", d.id))
            continue
        by_id[d.id] = d
        if not (d.bbox[2] > 0 and d.bbox[3] > 0):
            problems.append(("non-positive box size", d.id))
        if d.feature.ndim != 1 or d.feature.shape[0] != feature_dim:
            problems.append(("inconsistent feature dimension", d.id))
        ctx_dim = 0 if d.context_feature is None else d.context_feature.shape[0]
        if ctx_dim != context_dim:
            problems.append(("inconsistent context dimension", d.id))
        k = int(np.searchsorted(starts, d.frame, side="right")) - 1
        if k < 0 or not shots[k].contains(d.frame):
            problems.append(("out-of-shot", (d.id, d.frame)))
            continue
        sid = shots[k].shot_id
        shot_of[d.id] = sid
        by_shot[sid].append(d)
        by_frame.setdefault(d.frame, []).append(d)

    if problems:
        raise SequenceError(problems)
    return DetectionSequence(
        detections=detections,
        shots=shots,
        feature_dim=feature_dim,
        context_dim=context_dim,
        by_id=by_id,
        shot_of=shot_of,
        by_shot=by_shot,
        by_frame=by_frame,
    )
