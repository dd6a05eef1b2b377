"""End-to-end tracking run shared by the CLI and the benchmark checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .constraints import (
    ConstraintSet,
    ContextConfig,
    generate_triplets,
    mine_contextual,
    mine_spatiotemporal,
    propagate_transitive,
)
from .core import DetectionSequence, Trajectory, Tracklet
from .embedder import EmbeddingModel, LossConfig, TrainConfig, train
from .linker import LinkerConfig, cluster_to_k, link_across_shots, link_all_shots
from .metrics import weighted_purity
from .tracklets import LinkAffinityConfig, build_tracklets

log = logging.getLogger(__name__)

STAGES = (
    "build_tracklets",
    "mine_spatiotemporal",
    "mine_contextual",
    "propagate_transitive",
    "generate_triplets",
    "train",
    "embed",
    "link_within_shot",
    "link_across_shots",
)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass(frozen=True)
class MiningConfig:
    use_context: bool = True
    max_triplets_per_negpair: int = 200
    max_pairs: int = 20000


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (64,)
    embedding_dim: int = 64


@dataclass
class TrackResult:
    tracklets: list[Tracklet]
    constraints: ConstraintSet
    model: EmbeddingModel | None
    loss_trace: list[float]
    embeddings: dict[int, np.ndarray]
    shot_tracklets: list[Tracklet]
    trajectories: list[Trajectory]
    stages_completed: list[str] = field(default_factory=list)

    def assignments(self) -> dict[int, int]:
        """Detection id -> trajectory identity, for detections kept in a trajectory."""
        by_id = {t.tracklet_id: t for t in self.shot_tracklets}
        out = {}
        for traj in self.trajectories:
            for tid in traj.tracklet_ids:
                for d in by_id[tid].detections:
                    out[d] = traj.identity
        return dict(sorted(out.items()))


def training_samples(
    cs: ConstraintSet,
    triplets: list[tuple[int, int, int]],
    index: Mapping[int, int],
    loss: LossConfig,
    mining: MiningConfig,
    seed: int,
) -> np.ndarray:
    """Rows of detection-matrix indices in the layout ``embedder.train`` expects."""
    if loss.kind != "contrastive":
        return np.array([[index[a], index[b], index[c]] for a, b, c in triplets], dtype=np.int64).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    half = mining.max_pairs // 2
    rows = []
    for pairs, label in ((cs.positives, 1), (cs.negatives, 0)):
        ordered = sorted(pairs)
        if len(ordered) > half:
            ordered = [ordered[i] for i in np.sort(rng.choice(len(ordered), half, replace=False))]
        rows.extend((index[a], index[b], label) for a, b in ordered)
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def run(
    seq: DetectionSequence,
    *,
    affinity: LinkAffinityConfig,
    context: ContextConfig,
    mining: MiningConfig,
    model_cfg: ModelConfig,
    loss: LossConfig,
    train_cfg: TrainConfig,
    linker: LinkerConfig,
    seed: int = 0,
    threads: int = 1,
    on_stage: Callable[[str], None] | None = None,
) -> TrackResult:
    done: list[str] = []

    def stage(name, fn, *args, **kwargs):
        try:
            out = fn(*args, **kwargs)
        except Exception as e:  # surfaced with the stage name
            raise StageError(name, e) from e
        done.append(name)
        if on_stage:
            on_stage(name)
        log.info("stage %s done", name)
        return out

    tracklets = stage("build_tracklets", build_tracklets, seq, affinity, threads=threads)
    cs = stage("mine_spatiotemporal", mine_spatiotemporal, tracklets)
    if mining.use_context:
        cs = stage("mine_contextual", mine_contextual, tracklets, seq, context, cs)
    else:
        cs = stage("mine_contextual", lambda c: c, cs)
    cs = stage("propagate_transitive", propagate_transitive, cs, tracklets)
    triplets = stage(
        "generate_triplets", generate_triplets, cs, tracklets, mining.max_triplets_per_negpair, seed
    )
    cs.triplets = triplets

    index = {d.id: i for i, d in enumerate(seq.detections)}
    X = np.stack([d.feature for d in seq.detections]) if seq.detections else np.zeros((0, seq.feature_dim))
    samples = training_samples(cs, triplets, index, loss, mining, seed)
    sizes = [seq.feature_dim, *model_cfg.hidden, model_cfg.embedding_dim]

    def _train():
        if len(samples) == 0:
            log.warning("no training samples; keeping the initial embedding")
            return EmbeddingModel.init(sizes, seed=seed), []
        res = train(EmbeddingModel.init(sizes, seed=seed), X, samples, loss, train_cfg)
        return res.model, res.loss_trace

    model, trace = stage("train", _train)

    def _embed():
        if len(X) == 0:
            return {}
        E = model.embed(X)
        return {d.id: E[i] for i, d in enumerate(seq.detections)}

    embeddings = stage("embed", _embed)
    shot_tracklets = stage("link_within_shot", link_all_shots, tracklets, embeddings, seq, linker)
    trajectories = stage("link_across_shots", link_across_shots, shot_tracklets, embeddings, linker)
    return TrackResult(
        tracklets=tracklets,
        constraints=cs,
        model=model,
        loss_trace=trace,
        embeddings=embeddings,
        shot_tracklets=shot_tracklets,
        trajectories=trajectories,
        stages_completed=done,
    )


def purity_at_k(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    labels: Mapping[int, int],
    k: int,
) -> float:
    """Weighted purity over detections after clustering tracklets down to ``k`` groups."""
    result = cluster_to_k(tracklets, embeddings, k)
    clusters = [[d for i in c for d in tracklets[i].detections] for c in result.clusters]
    return weighted_purity(clusters, labels)


def purity_curve(
    tracklets: list[Tracklet],
    embeddings: Mapping[int, np.ndarray],
    labels: Mapping[int, int],
) -> list[tuple[int, float]]:
    """Purity for every cluster count from 1 to the number of tracklets.

    Counts unreachable because of cannot-link constraints report the purity
    of the coarsest reachable clustering.
    """
    from .linker import agglomerate, mean_distance_matrix

    n = len(tracklets)
    if n == 0:
        return []
    D = mean_distance_matrix(tracklets, embeddings)
    full = agglomerate(D, k=1)
    # replay merges to get every intermediate partition
    members = {i: [i] for i in range(n)}
    partitions = {n: [list(v) for v in members.values()]}
    for step in full.merges:
        members[step.a].extend(members.pop(step.b))
        partitions[len(members)] = [list(v) for v in members.values()]
    coarsest = min(partitions)
    rows = []
    for k in range(1, n + 1):
        part = partitions[max(k, coarsest)]
        clusters = [[d for i in c for d in tracklets[i].detections] for c in part]
        rows.append((k, weighted_purity(clusters, labels)))
    return rows
