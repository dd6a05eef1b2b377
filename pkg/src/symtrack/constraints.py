"""Mining same/different-identity constraints from tracklet structure and context."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import DetectionSequence, Tracklet
from .linker import agglomerate, overlap_matrix

log = logging.getLogger(__name__)

Pair = tuple[int, int]


def _pair(a: int, b: int) -> Pair:
    return (a, b) if a <= b else (b, a)


class ConstraintContradiction(ValueError):
    def __init__(self, pairs: list[Pair]):
        self.pairs = pairs
        super().__init__(f"tracklet pairs both positive and negative: {pairs}")


@dataclass(frozen=True)
class ContextConfig:
    merge_threshold: float = 40.0
    min_confidence_margin: float | None = None

    def __post_init__(self):
        if self.merge_threshold <= 0:
            raise ValueError("merge_threshold must be positive")
        if self.min_confidence_margin is None:
            object.__setattr__(self, "min_confidence_margin", 0.2 * self.merge_threshold)
        if self.min_confidence_margin < 0:
            raise ValueError("min_confidence_margin must be non-negative")


@dataclass
class ConstraintSet:
    positives: set[Pair] = field(default_factory=set)
    negatives: set[Pair] = field(default_factory=set)
    triplets: list[tuple[int, int, int]] = field(default_factory=list)
    tracklet_pos: set[Pair] = field(default_factory=set)
    tracklet_neg: set[Pair] = field(default_factory=set)
    report: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "ConstraintSet":
        return ConstraintSet(
            positives=set(self.positives),
            negatives=set(self.negatives),
            triplets=list(self.triplets),
            tracklet_pos=set(self.tracklet_pos),
            tracklet_neg=set(self.tracklet_neg),
            report=dict(self.report),
        )


def _cross_pairs(a: Tracklet, b: Tracklet) -> set[Pair]:
    return {_pair(x, y) for x in a.detections for y in b.detections}


def _within_pairs(t: Tracklet) -> set[Pair]:
    return {_pair(x, y) for x, y in itertools.combinations(t.detections, 2)}


def mine_spatiotemporal(tracklets: list[Tracklet]) -> ConstraintSet:
    cs = ConstraintSet()
    for t in tracklets:
        cs.positives |= _within_pairs(t)
    for a, b in itertools.combinations(tracklets, 2):
        if a.overlaps(b):
            cs.tracklet_neg.add(_pair(a.tracklet_id, b.tracklet_id))
            cs.negatives |= _cross_pairs(a, b)
    return cs


def tracklet_descriptors(tracklets: list[Tracklet], seq: DetectionSequence) -> np.ndarray:
    """Per-tracklet mean of the appearance feature concatenated with the context feature."""
    rows = []
    for t in tracklets:
        dets = [seq.by_id[d] for d in t.detections]
        if any(d.context_feature is None for d in dets):
            raise ValueError(f"tracklet {t.tracklet_id} lacks context features")
        rows.append(np.mean([np.concatenate([d.feature, d.context_feature]) for d in dets], axis=0))
    return np.array(rows)


def mine_contextual(
    tracklets: list[Tracklet],
    seq: DetectionSequence,
    ctx_cfg: ContextConfig,
    cs: ConstraintSet,
) -> ConstraintSet:
    """Add confident cross-shot positive tracklet pairs from context grouping.

    Tracklet descriptors are grouped with the cannot-link clustering used
    across shots. A group whose largest internal distance is below
    ``merge_threshold - min_confidence_margin`` contributes all of its
    tracklet pairs, except pairs already known to be negative.
    """
    out = cs.copy()
    out.report.setdefault("contextual_conflicts", 0)
    out.report.setdefault("contextual_groups", 0)
    if len(tracklets) < 2:
        return out
    try:
        desc = tracklet_descriptors(tracklets, seq)
    except ValueError as e:
        log.warning("skipping contextual mining: %s", e)
        out.report["contextual_skipped"] = 1
        return out

    diff = desc[:, None, :] - desc[None, :, :]
    D = np.einsum("ijk,ijk->ij", diff, diff)
    D[overlap_matrix(tracklets)] = np.inf
    result = agglomerate(D, theta=ctx_cfg.merge_threshold)
    bar = ctx_cfg.merge_threshold - ctx_cfg.min_confidence_margin
    for group in result.clusters:
        if len(group) < 2:
            continue
        sub = D[np.ix_(group, group)]
        if sub.max() >= bar:
            continue
        out.report["contextual_groups"] += 1
        for i, j in itertools.combinations(group, 2):
            p = _pair(tracklets[i].tracklet_id, tracklets[j].tracklet_id)
            if p in out.tracklet_neg:
                out.report["contextual_conflicts"] += 1
                continue
            out.tracklet_pos.add(p)
    return out


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


def propagate_transitive(cs: ConstraintSet, tracklets: list[Tracklet]) -> ConstraintSet:
    """Close the tracklet relations under same-identity transitivity.

    Positives merge tracklets into components; a negative between two
    tracklets becomes a negative between every member of their components.
    Detection-level pairs are regenerated from the closed relations.
    """
    by_id = {t.tracklet_id: t for t in tracklets}
    uf = _UnionFind(by_id)
    for a, b in sorted(cs.tracklet_pos):
        uf.union(a, b)
    comps: dict[int, list[int]] = {}
    for tid in sorted(by_id):
        comps.setdefault(uf.find(tid), []).append(tid)

    pos_closed = {
        _pair(a, b) for members in comps.values() for a, b in itertools.combinations(members, 2)
    }
    neg_closed: set[Pair] = set()
    for a, b in cs.tracklet_neg:
        for x in comps[uf.find(a)]:
            for y in comps[uf.find(b)]:
                neg_closed.add(_pair(x, y))
    bad = sorted(pos_closed & neg_closed)
    if bad:
        raise ConstraintContradiction(bad)

    out = cs.copy()
    out.tracklet_pos = pos_closed
    out.tracklet_neg = neg_closed
    positives = set(cs.positives)
    for a, b in pos_closed:
        positives |= _cross_pairs(by_id[a], by_id[b])
    negatives = set()
    for a, b in neg_closed:
        negatives |= _cross_pairs(by_id[a], by_id[b])
    out.positives = positives
    out.negatives = negatives
    return out


def _components(tracklet_pos: set[Pair], ids) -> dict[int, tuple[int, ...]]:
    uf = _UnionFind(ids)
    for a, b in sorted(tracklet_pos):
        uf.union(a, b)
    groups: dict[int, list[int]] = {}
    for tid in sorted(ids):
        groups.setdefault(uf.find(tid), []).append(tid)
    return {tid: tuple(groups[uf.find(tid)]) for tid in ids}


def generate_triplets(
    cs: ConstraintSet,
    tracklets: list[Tracklet],
    max_per_negpair: int | None = None,
    seed: int = 0,
) -> list[tuple[int, int, int]]:
    """Emit (anchor, positive, negative) detection triples for every negative tracklet pair.

    For a negative pair (i, j) the anchor comes from tracklet i, the negative
    from tracklet j, and the positive from any other detection known to share
    the anchor's identity: tracklet i itself plus every tracklet joined to it
    through ``tracklet_pos``. Both orientations are used. When the full
    product for one pair exceeds ``max_per_negpair`` a seeded uniform
    subsample is taken.
    """
    by_id = {t.tracklet_id: t for t in tracklets}
    comp = _components(cs.tracklet_pos, by_id)
    pools = {
        tid: tuple(d for member in comp[tid] for d in by_id[member].detections) for tid in by_id
    }
    rng = np.random.default_rng(seed)
    out: list[tuple[int, int, int]] = []
    for a, b in sorted(cs.tracklet_neg):
        sides = [(by_id[a], pools[a], by_id[b]), (by_id[b], pools[b], by_id[a])]
        counts = [ti.n * (len(pool) - 1) * tj.n for ti, pool, tj in sides]
        total = sum(counts)
        if max_per_negpair is not None and total > max_per_negpair:
            picks = np.sort(rng.choice(total, size=max_per_negpair, replace=False))
        else:
            picks = np.arange(total)
        for idx in picks.tolist():
            side = 0 if idx < counts[0] else 1
            ti, pool, tj = sides[side]
            idx -= side * counts[0]
            k, rem = divmod(idx, (len(pool) - 1) * tj.n)
            l, m = divmod(rem, tj.n)
            anchor = ti.detections[k]
            # skip the anchor's own slot in the pool
            pos_idx = pool.index(anchor)
            positive = pool[l + (l >= pos_idx)]
            out.append((anchor, positive, tj.detections[m]))
    return out
