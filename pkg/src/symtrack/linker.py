"""Tracklet association: assignment inside shots, agglomerative clustering across them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .assignment import hungarian
from .core import DetectionSequence, Trajectory, Tracklet, pairwise_sq_dists

LINKAGES = ("average", "single", "complete")


@dataclass(frozen=True)
class LinkerConfig:
    theta: float = 5.0
    min_cluster_tracklets: int = 4
    min_cluster_frames: int = 50
    within_shot_gate: float = 5.0
    w_app: float = 0.6
    w_kin: float = 0.2
    w_time: float = 0.2
    gap_scale: float = 10.0
    linkage: str = "average"

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.within_shot_gate <= 0 or self.gap_scale <= 0:
            raise ValueError("gates must be positive")
        if self.min_cluster_tracklets < 0 or self.min_cluster_frames < 0:
            raise ValueError("cluster filter minimums must be non-negative")
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}")


@dataclass
class MergeStep:
    a: int
    b: int
    distance: float


@dataclass
class Clustering:
    clusters: list[list[int]]
    merges: list[MergeStep] = field(default_factory=list)
    requested_k: int | None = None

    @property
    def reached(self) -> bool:
        return self.requested_k is None or len(self.clusters) == self.requested_k


def _embedding_matrix(t: Tracklet, embeddings: Mapping[int, np.ndarray]) -> np.ndarray:
    try:
        return np.stack([np.asarray(embeddings[d], dtype=float) for d in t.detections])
    except KeyError as e:
        raise KeyError(f"missing embedding for detection {e.args[0]}") from None


def tracklet_mean_distance(
    ti: Tracklet, tj: Tracklet, embeddings: Mapping[int, np.ndarray]
) -> float:
    """Mean squared distance over all cross pairs; ``inf`` if the tracklets share a frame."""
    Ei = _embedding_matrix(ti, embeddings)
    Ej = _embedding_matrix(tj, embeddings)
    if ti.overlaps(tj):
        return math.inf
    return float(pairwise_sq_dists(Ei, Ej).mean())


def overlap_matrix(tracklets: list[Tracklet]) -> np.ndarray:
    n = len(tracklets)
    ov = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            ov[i, j] = ov[j, i] = tracklets[i].overlaps(tracklets[j])
    return ov


def mean_distance_matrix(
    tracklets: list[Tracklet], embeddings: Mapping[int, np.ndarray]
) -> np.ndarray:
    """All-pairs mean distances (diagonal 0, overlapping pairs inf)."""
    n = len(tracklets)
    if n == 0:
        return np.zeros((0, 0))
    mats = [_embedding_matrix(t, embeddings) for t in tracklets]
    mu = np.stack([m.mean(axis=0) for m in mats])
    sq = np.array([np.einsum("ij,ij->i", m, m).mean() for m in mats])
    D = sq[:, None] + sq[None, :] - 2.0 * mu @ mu.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    D[overlap_matrix(tracklets)] = math.inf
    return D


def agglomerate(
    dist: np.ndarray,
    *,
    theta: float | None = None,
    k: int | None = None,
    linkage: str = "average",
) -> Clustering:
    """Bottom-up clustering on a symmetric tracklet distance matrix.

    Infinite entries are cannot-link constraints: any cluster pair holding an
    infinite member pair is never merged. With ``theta`` merging continues
    while the closest pair is at distance <= theta; with ``k`` it continues
    until ``k`` clusters remain or only infinite distances are left. A merged
    cluster keeps the smaller of the two ids; ties go to the smallest
    ``(id, id)`` pair.
    """
    if (theta is None) == (k is None):
        raise ValueError("give exactly one of theta or k")
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    D0 = np.array(dist, dtype=float)
    n = D0.shape[0]
    if k is not None and not 1 <= k <= max(n, 1):
        raise ValueError(f"k must lie in [1, {n}]")

    blocked = ~np.isfinite(D0)
    finite = np.where(blocked, 0.0, D0)
    acc = finite.copy()  # sum for average, min/max otherwise
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    merges: list[MergeStep] = []
    iu = np.triu(np.ones((n, n), dtype=bool), 1)

    while active.sum() > 1:
        if k is not None and active.sum() <= k:
            break
        if linkage == "average":
            cur = acc / np.outer(size, size)
        else:
            cur = acc.copy()
        valid = iu & active[:, None] & active[None, :] & ~blocked
        cur[~valid] = math.inf
        flat = int(np.argmin(cur))
        a, b = divmod(flat, n)
        d = cur[a, b]
        if not math.isfinite(d):
            break
        if theta is not None and d > theta:
            break
        merges.append(MergeStep(a, b, float(d)))
        if linkage == "average":
            acc[a, :] += acc[b, :]
        elif linkage == "single":
            acc[a, :] = np.minimum(acc[a, :], acc[b, :])
        else:
            acc[a, :] = np.maximum(acc[a, :], acc[b, :])
        acc[:, a] = acc[a, :]
        acc[a, a] = 0.0
        blocked[a, :] |= blocked[b, :]
        blocked[:, a] = blocked[a, :]
        size[a] += size[b]
        active[b] = False
        members[a].extend(members.pop(b))

    clusters = [sorted(members[i]) for i in sorted(members)]
    return Clustering(clusters=clusters, merges=merges, requested_k=k)


def cluster_to_k(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    k: int,
    linkage: str = "average",
) -> Clustering:
    """Merge tracklets until exactly ``k`` clusters remain (or no finite pair is left).

    Cluster members are tracklet positions in ``tracklets``; check
    ``Clustering.reached`` for early stops.
    """
    D = mean_distance_matrix(tracklets, embeddings)
    return agglomerate(D, k=k, linkage=linkage)


def _keep_cluster(ts: list[Tracklet], cfg: LinkerConfig) -> bool:
    frames = sum(t.n for t in ts)
    return not (len(ts) < cfg.min_cluster_tracklets and frames < cfg.min_cluster_frames)


def link_across_shots(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    cfg: LinkerConfig,
) -> list[Trajectory]:
    D = mean_distance_matrix(tracklets, embeddings)
    result = agglomerate(D, theta=cfg.theta, linkage=cfg.linkage)
    groups = [[tracklets[i] for i in c] for c in result.clusters]
    groups = [g for g in groups if _keep_cluster(g, cfg)]
    groups.sort(key=lambda g: min((t.start, t.tracklet_id) for t in g))
    out = []
    for label, g in enumerate(groups, start=1):
        ids = tuple(sorted(t.tracklet_id for t in g))
        out.append(Trajectory(identity=label, tracklet_ids=ids))
    return out


def _velocity(t: Tracklet, seq: DetectionSequence, window: int = 5) -> np.ndarray:
    if t.n < 2:
        return np.zeros(2)
    tail = t.detections[-window:]
    first, last = seq.by_id[tail[0]], seq.by_id[tail[-1]]
    return (last.center - first.center) / (last.frame - first.frame)


def within_shot_costs(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    seq: DetectionSequence,
    cfg: LinkerConfig,
) -> np.ndarray:
    """Predecessor x successor cost matrix; forbidden pairs are ``inf``."""
    n = len(tracklets)
    C = np.full((n, n), math.inf)
    D = mean_distance_matrix(tracklets, embeddings)
    for i, ti in enumerate(tracklets):
        last = seq.by_id[ti.detections[-1]]
        vel = _velocity(ti, seq)
        for j, tj in enumerate(tracklets):
            if i == j or ti.end >= tj.start:
                continue
            first = seq.by_id[tj.detections[0]]
            gap = tj.start - ti.end
            predicted = last.center + vel * gap
            kin = float(np.linalg.norm(predicted - first.center)) / math.sqrt(last.area)
            cost = cfg.w_app * D[i, j] + cfg.w_kin * kin + cfg.w_time * gap / cfg.gap_scale
            if cost <= cfg.within_shot_gate:
                C[i, j] = cost
    return C


def link_within_shot(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    seq: DetectionSequence,
    cfg: LinkerConfig,
    first_id: int = 0,
) -> list[Tracklet]:
    """Chain tracklets of one shot through a one-to-one successor assignment."""
    if len({t.shot_id for t in tracklets}) > 1:
        raise ValueError("tracklets must come from a single shot")
    ordered = sorted(tracklets, key=lambda t: (t.start, t.tracklet_id))
    n = len(ordered)
    succ: dict[int, int] = {}
    if n > 1:
        C = within_shot_costs(ordered, embeddings, seq, cfg)
        succ = dict(hungarian(C))
    has_pred = set(succ.values())
    out: list[Tracklet] = []
    for i in range(n):
        if i in has_pred:
            continue
        chain = [ordered[i]]
        while i in succ:
            i = succ[i]
            chain.append(ordered[i])
        out.append(
            Tracklet(
                tracklet_id=first_id + len(out),
                shot_id=chain[0].shot_id,
                detections=tuple(d for t in chain for d in t.detections),
                frames=tuple(f for t in chain for f in t.frames),
            )
        )
    return out


def link_all_shots(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    seq: DetectionSequence,
    cfg: LinkerConfig,
) -> list[Tracklet]:
    by_shot: dict[int, list[Tracklet]] = {}
    for t in tracklets:
        by_shot.setdefault(t.shot_id, []).append(t)
    out: list[Tracklet] = []
    for sid in sorted(by_shot):
        out.extend(link_within_shot(by_shot[sid], embeddings, seq, cfg, first_id=len(out)))
    return out
