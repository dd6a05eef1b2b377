"""Per-shot tracklet generation with a two-threshold linking rule."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Detection, DetectionSequence, Tracklet

MIN_TRACKLET_LENGTH = 5


@dataclass(frozen=True)
class LinkAffinityConfig:
    w_app: float = 0.5
    w_pos: float = 0.3
    w_scale: float = 0.2
    theta_high: float = 0.6
    theta_low: float = 0.3
    max_gap: int = 1

    def __post_init__(self):
        ws = (self.w_app, self.w_pos, self.w_scale)
        if min(ws) < 0 or not math.isclose(sum(ws), 1.0, abs_tol=1e-9):
            raise ValueError(f"affinity weights must be non-negative and sum to 1: {ws}")
        if not 0 <= self.theta_low < self.theta_high <= 1:
            raise ValueError("need 0 <= theta_low < theta_high <= 1")
        if self.max_gap < 1:
            raise ValueError("max_gap must be >= 1")


def pair_affinity(d1: Detection, d2: Detection, cfg: LinkAffinityConfig) -> float:
    if not d1.frame < d2.frame:
        raise ValueError(f"detection {d1.id} must precede {d2.id}")
    if d2.frame - d1.frame > cfg.max_gap:
        raise ValueError(f"gap {d2.frame - d1.frame} exceeds max_gap {cfg.max_gap}")
    return _affinity(d1, d2, cfg)


def _affinity(d1: Detection, d2: Detection, cfg: LinkAffinityConfig) -> float:
    df = d1.feature - d2.feature
    s_app = math.exp(-float(df @ df) / d1.feature.shape[0])
    dc = d1.center - d2.center
    s_pos = math.exp(-float(dc @ dc) / d1.area)
    a1, a2 = d1.area, d2.area
    s_scale = min(a1, a2) / max(a1, a2)
    return cfg.w_app * s_app + cfg.w_pos * s_pos + cfg.w_scale * s_scale


def _link_shot(dets: list[Detection], cfg: LinkAffinityConfig) -> list[list[Detection]]:
    frames: dict[int, list[Detection]] = {}
    for d in dets:
        frames.setdefault(d.frame, []).append(d)
    margin = cfg.theta_high - cfg.theta_low
    chains: list[list[Detection]] = []
    for frame in sorted(frames):
        current = sorted(frames[frame], key=lambda d: d.id)
        open_idx = [
            i for i, c in enumerate(chains) if 0 < frame - c[-1].frame <= cfg.max_gap
        ]
        accepted: dict[int, int] = {}
        if open_idx and current:
            A = np.array(
                [[_affinity(chains[i][-1], d, cfg) for d in current] for i in open_idx]
            )
            for r in range(A.shape[0]):
                for c in range(A.shape[1]):
                    a = A[r, c]
                    if a <= cfg.theta_high:
                        continue
                    rivals = np.concatenate([np.delete(A[r], c), np.delete(A[:, c], r)])
                    second = rivals.max() if rivals.size else 0.0
                    if a - second >= margin:
                        accepted[c] = open_idx[r]
        for c, d in enumerate(current):
            if c in accepted:
                chains[accepted[c]].append(d)
            else:
                chains.append([d])
    return chains


def build_tracklets(
    seq: DetectionSequence, cfg: LinkAffinityConfig, threads: int = 1
) -> list[Tracklet]:
    """Link detections frame by frame inside each shot.

    A detection extends an open chain only when their affinity exceeds
    ``theta_high`` and beats every competing affinity in the same row and
    column by at least ``theta_high - theta_low``. Chains shorter than five
    detections are dropped.
    """
    shot_ids = [s.shot_id for s in seq.shots]
    jobs = [seq.by_shot[sid] for sid in shot_ids]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_shot = list(pool.map(lambda ds: _link_shot(ds, cfg), jobs))
    else:
        per_shot = [_link_shot(ds, cfg) for ds in jobs]

    out: list[Tracklet] = []
    for sid, chains in zip(shot_ids, per_shot):
        chains = [c for c in chains if len(c) >= MIN_TRACKLET_LENGTH]
        chains.sort(key=lambda c: (c[0].frame, c[0].id))
        for c in chains:
            out.append(
                Tracklet(
                    tracklet_id=len(out),
                    shot_id=sid,
                    detections=tuple(d.id for d in c),
                    frames=tuple(d.frame for d in c),
                )
            )
    return out
