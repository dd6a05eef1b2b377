"""Plain-text file formats.

Every format is line-delimited with fields separated by single spaces.
Lines holding a comma or a tab are rejected rather than guessed at; blank
lines and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .core import Detection, DetectionSequence, Shot, Trajectory, Tracklet
from .synth import BACKGROUND, GroundTruth


class FormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def _records(path) -> Iterator[tuple[int, list[str]]]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if "," in line or "\t" in line:
                raise FormatError(f"{path}:{lineno}: mixed delimiters; fields are space-separated")
            yield lineno, line.split()


def write_detections(detections: Iterable[Detection], path) -> None:
    with open(path, "w") as fh:
        for d in detections:
            ctx = [] if d.context_feature is None else list(d.context_feature)
            fields = [str(d.id), str(d.frame), *map(_fmt, d.bbox), _fmt(d.score)]
            fields += [str(len(d.feature)), *map(_fmt, d.feature), str(len(ctx)), *map(_fmt, ctx)]
            fh.write(" ".join(fields) + "\n")


def read_detections(path) -> list[Detection]:
    out = []
    for lineno, tok in _records(path):
        try:
            det_id, frame = int(tok[0]), int(tok[1])
            bbox = tuple(float(v) for v in tok[2:6])
            score = float(tok[6])
            F = int(tok[7])
            feature = np.array([float(v) for v in tok[8:8 + F]])
            C = int(tok[8 + F])
            ctx = np.array([float(v) for v in tok[9 + F:9 + F + C]])
            if len(feature) != F or len(ctx) != C or len(tok) != 9 + F + C:
                raise FormatError("field count does not match declared dimensions")
        except (IndexError, ValueError) as e:
            raise FormatError(f"{path}:{lineno}: bad detection record ({e})") from None
        out.append(Detection(det_id, frame, bbox, score, feature, ctx if C else None))
    return out


def write_shots(shots: Iterable[Shot], path) -> None:
    with open(path, "w") as fh:
        for s in shots:
            fh.write(f"{s.shot_id} {s.start} {s.end}\n")


def read_shots(path) -> list[Shot]:
    out = []
    for lineno, tok in _records(path):
        if len(tok) != 3:
            raise FormatError(f"{path}:{lineno}: shot records have 3 fields")
        out.append(Shot(*(int(t) for t in tok)))
    return out


def write_groundtruth(gt: GroundTruth, path) -> None:
    """``detection_id identity frame x y w h``; undetected boxes use detection id -1.

    False-positive detections appear with identity 0 and their own box.
    """
    rows = []
    for frame, boxes in gt.boxes.items():
        for ident, bbox in boxes:
            det = gt.detected.get((frame, ident), -1)
            rows.append((frame, ident, det, bbox))
    by_det = {det for _, _, det, _ in rows}
    fp = [d for d, lab in gt.labels.items() if lab == BACKGROUND and d not in by_det]
    with open(path, "w") as fh:
        for frame, ident, det, bbox in sorted(rows, key=lambda r: (r[0], r[1])):
            fh.write(f"{det} {ident} {frame} " + " ".join(map(_fmt, bbox)) + "\n")
        for d in sorted(fp):
            fh.write(f"{d} {BACKGROUND} -1 0.0 0.0 0.0 0.0\n")


def read_groundtruth(path) -> GroundTruth:
    boxes: dict[int, list] = {}
    labels: dict[int, int] = {}
    detected: dict[tuple[int, int], int] = {}
    for lineno, tok in _records(path):
        if len(tok) != 7:
            raise FormatError(f"{path}:{lineno}: ground-truth records have 7 fields")
        det, ident, frame = int(tok[0]), int(tok[1]), int(tok[2])
        if det >= 0:
            labels[det] = ident
        if ident == BACKGROUND:
            continue
        bbox = tuple(float(v) for v in tok[3:7])
        boxes.setdefault(frame, []).append((ident, bbox))
        if det >= 0:
            detected[frame, ident] = det
    return GroundTruth(boxes=boxes, labels=labels, detected=detected)


def write_tracklets(tracklets: Iterable[Tracklet], path) -> None:
    with open(path, "w") as fh:
        for t in tracklets:
            fh.write(f"{t.tracklet_id} {t.shot_id} {t.n} " + " ".join(map(str, t.detections)) + "\n")


def read_tracklets(path, seq: DetectionSequence) -> list[Tracklet]:
    out = []
    for lineno, tok in _records(path):
        tid, sid, n = int(tok[0]), int(tok[1]), int(tok[2])
        dets = tuple(int(v) for v in tok[3:])
        if len(dets) != n:
            raise FormatError(f"{path}:{lineno}: tracklet length {n} but {len(dets)} ids")
        try:
            frames = tuple(seq.by_id[d].frame for d in dets)
        except KeyError as e:
            raise FormatError(f"{path}:{lineno}: unknown detection {e.args[0]}") from None
        out.append(Tracklet(tid, sid, dets, frames))
    return out


def write_trajectories(trajectories: Iterable[Trajectory], path) -> None:
    with open(path, "w") as fh:
        for tr in trajectories:
            fh.write(f"{tr.identity} " + " ".join(map(str, tr.tracklet_ids)) + "\n")


def read_trajectories(path) -> list[Trajectory]:
    return [
        Trajectory(int(tok[0]), tuple(int(v) for v in tok[1:])) for _, tok in _records(path)
    ]


def write_assignments(assign: Mapping[int, int], path) -> None:
    with open(path, "w") as fh:
        for det, ident in sorted(assign.items()):
            fh.write(f"{det} {ident}\n")


def read_assignments(path) -> dict[int, int]:
    return {int(tok[0]): int(tok[1]) for _, tok in _records(path)}


def write_embeddings(embeddings: Mapping[int, np.ndarray], path) -> None:
    with open(path, "w") as fh:
        for det in sorted(embeddings):
            fh.write(f"{det} " + " ".join(map(_fmt, embeddings[det])) + "\n")


def read_embeddings(path) -> dict[int, np.ndarray]:
    return {int(tok[0]): np.array([float(v) for v in tok[1:]]) for _, tok in _records(path)}


def write_constraints(cs, path) -> None:
    with open(path, "w") as fh:
        fh.write("POS\n")
        for a, b in sorted(cs.positives):
            fh.write(f"{a} {b}\n")
        fh.write("NEG\n")
        for a, b in sorted(cs.negatives):
            fh.write(f"{a} {b}\n")
        fh.write("TRIPLET\n")
        for k, l, m in cs.triplets:
            fh.write(f"{k} {l} {m}\n")


def read_constraints(path) -> dict[str, list[tuple[int, ...]]]:
    sections: dict[str, list[tuple[int, ...]]] = {"POS": [], "NEG": [], "TRIPLET": []}
    current = None
    for lineno, tok in _records(path):
        if len(tok) == 1 and tok[0] in sections:
            current = tok[0]
            continue
        if current is None:
            raise FormatError(f"{path}:{lineno}: record before any section header")
        sections[current].append(tuple(int(v) for v in tok))
    return sections


def write_purity_curve(rows: Iterable[tuple[int, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("num_clusters,weighted_purity\n")
        for k, p in rows:
            fh.write(f"{k},{p!r}\n")


def read_purity_curve(path) -> list[tuple[int, float]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "num_clusters,weighted_purity":
        raise FormatError(f"{path}: not a purity curve")
    return [(int(a), float(b)) for a, b in (ln.split(",") for ln in lines[1:] if ln)]
