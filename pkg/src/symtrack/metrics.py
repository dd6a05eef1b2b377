"""Clustering purity, CLEAR-MOT counts and identity (IDF1) scores."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .assignment import hungarian

Box = tuple[float, float, float, float]
# frame -> list of (identity, box)
FrameBoxes = Mapping[int, Sequence[tuple[int, Box]]]


def weighted_purity(clusters: Iterable[Sequence[Hashable]], labels: Mapping[Hashable, Hashable]) -> float:
    """Size-weighted mean over clusters of the dominant-label fraction."""
    total = 0
    hits = 0
    for members in clusters:
        if not members:
            continue
        counts = Counter(labels[m] for m in members)
        hits += max(counts.values())
        total += len(members)
    if total == 0:
        raise ValueError("empty clustering")
    return hits / total


def iou(a: Box, b: Box) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


@dataclass
class MotReport:
    recall: float
    precision: float
    f1: float
    faf: float
    ids: int
    frag: int
    mota: float
    motp: float
    idp: float
    idr: float
    idf1: float
    num_gt: int = 0
    num_fp: int = 0
    num_fn: int = 0
    num_frames: int = 0

    def as_table(self) -> str:
        rows = [(k, v) for k, v in asdict(self).items()]
        width = max(len(k) for k, _ in rows)
        return "\n".join(
            f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}"
            for k, v in rows
        )

    def as_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        d = asdict(self)
        writer.writerow(d.keys())
        writer.writerow(d.values())
        return buf.getvalue()


def _check_frames(hyp: FrameBoxes, gt: FrameBoxes) -> list[int]:
    if not gt:
        raise ValueError("ground truth has no frames")
    lo, hi = min(gt), max(gt)
    stray = [f for f in hyp if not lo <= f <= hi]
    if stray:
        raise ValueError(f"hypothesis frames outside ground-truth range [{lo}, {hi}]: {stray[:5]}")
    return sorted(set(gt) | set(hyp))


def _match_frames(hyp: FrameBoxes, gt: FrameBoxes, thr: float):
    """Per-frame CLEAR-MOT correspondence with continuity.

    Yields ``(frame, matches, n_gt, n_hyp)`` with ``matches`` a list of
    ``(gt_id, hyp_id, iou)``.
    """
    frames = _check_frames(hyp, gt)
    prev: dict[int, int] = {}
    for f in frames:
        g = list(gt.get(f, ()))
        h = list(hyp.get(f, ()))
        gpos = {gid: i for i, (gid, _) in enumerate(g)}
        hpos = {hid: j for j, (hid, _) in enumerate(h)}
        matches = []
        used_g, used_h = set(), set()
        for gid, hid in sorted(prev.items()):
            if gid in gpos and hid in hpos:
                o = iou(g[gpos[gid]][1], h[hpos[hid]][1])
                if o >= thr:
                    matches.append((gid, hid, o))
                    used_g.add(gid)
                    used_h.add(hid)
        rg = [i for i, (gid, _) in enumerate(g) if gid not in used_g]
        rh = [j for j, (hid, _) in enumerate(h) if hid not in used_h]
        if rg and rh:
            C = np.full((len(rg), len(rh)), np.inf)
            for a, i in enumerate(rg):
                for b, j in enumerate(rh):
                    o = iou(g[i][1], h[j][1])
                    if o >= thr:
                        C[a, b] = 1.0 - o
            for a, b in hungarian(C):
                i, j = rg[a], rh[b]
                matches.append((g[i][0], h[j][0], 1.0 - C[a, b]))
        for gid, hid, _ in matches:
            prev[gid] = hid
        yield f, matches, len(g), len(h)


def clear_mot(hyp: FrameBoxes, gt: FrameBoxes, iou_threshold: float = 0.5) -> dict:
    """CLEAR-MOT counts.

    IDS counts a ground-truth target matched to a different hypothesis than
    at its last match. Frag counts interruptions: a target present and
    unmatched in a frame right after a frame where it was present and matched.
    """
    tp = fp = fn = ids = frag = 0
    n_gt = 0
    overlap_sum = 0.0
    last_hyp: dict[int, int] = {}
    tracked_prev: dict[int, bool] = {}
    n_frames = 0
    for f, matches, ng, nh in _match_frames(hyp, gt, iou_threshold):
        n_frames += 1
        n_gt += ng
        tp += len(matches)
        fp += nh - len(matches)
        fn += ng - len(matches)
        matched = {gid: hid for gid, hid, _ in matches}
        for gid, hid, o in matches:
            overlap_sum += o
            if gid in last_hyp and last_hyp[gid] != hid:
                ids += 1
            last_hyp[gid] = hid
        for gid, _ in gt.get(f, ()):
            now = gid in matched
            if tracked_prev.get(gid, False) and not now:
                frag += 1
            tracked_prev[gid] = now
    recall = tp / n_gt if n_gt else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision else 0.0
    mota = 1.0 - (fn + fp + ids) / n_gt if n_gt else 0.0
    motp = overlap_sum / tp if tp else 0.0
    return dict(
        recall=recall,
        precision=precision,
        f1=f1,
        faf=fp / n_frames if n_frames else 0.0,
        ids=ids,
        frag=frag,
        mota=mota,
        motp=motp,
        num_gt=n_gt,
        num_fp=fp,
        num_fn=fn,
        num_frames=n_frames,
    )


def identity_overlap_counts(hyp: FrameBoxes, gt: FrameBoxes, iou_threshold: float = 0.5):
    """Frames where each (gt identity, hyp identity) pair overlaps above threshold."""
    _check_frames(hyp, gt)
    counts: Counter = Counter()
    gt_total: Counter = Counter()
    hyp_total: Counter = Counter()
    for f in sorted(set(gt) | set(hyp)):
        for gid, gb in gt.get(f, ()):
            gt_total[gid] += 1
            for hid, hb in hyp.get(f, ()):
                if iou(gb, hb) >= iou_threshold:
                    counts[gid, hid] += 1
        for hid, _ in hyp.get(f, ()):
            hyp_total[hid] += 1
    return counts, gt_total, hyp_total


def identity_metrics(hyp: FrameBoxes, gt: FrameBoxes, iou_threshold: float = 0.5):
    """IDP, IDR and IDF1 under the best one-to-one identity assignment."""
    counts, gt_total, hyp_total = identity_overlap_counts(hyp, gt, iou_threshold)
    gids = sorted(gt_total)
    hids = sorted(hyp_total)
    idtp = 0
    if gids and hids:
        # maximizing matched detections == minimizing mismatched (IDFN + IDFP)
        C = np.array([[-counts[g, h] for h in hids] for g in gids], dtype=float)
        idtp = int(-sum(C[r, c] for r, c in hungarian(C)))
    n_gt = sum(gt_total.values())
    n_hyp = sum(hyp_total.values())
    idp = idtp / n_hyp if n_hyp else 0.0
    idr = idtp / n_gt if n_gt else 0.0
    idf1 = 2 * idtp / (n_gt + n_hyp) if n_gt + n_hyp else 0.0
    return idp, idr, idf1


def mot_report(hyp: FrameBoxes, gt: FrameBoxes, iou_threshold: float = 0.5) -> MotReport:
    base = clear_mot(hyp, gt, iou_threshold)
    idp, idr, idf1 = identity_metrics(hyp, gt, iou_threshold)
    return MotReport(idp=idp, idr=idr, idf1=idf1, **base)
