"""Seeded synthetic scenes with known identities, for desk-scale evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Detection, DetectionSequence, Shot

BACKGROUND = 0


@dataclass(frozen=True)
class ScenarioConfig:
    n_identities: int = 6
    n_shots: int = 4
    frames_per_shot: int = 20
    detections_per_identity_per_shot: int = 20
    feature_dim: int = 32
    identity_separation: float = 1.0
    shot_shift_scale: float = 3.0
    noise_sigma: float = 0.05
    context_dim: int = 8
    context_separation: float = 6.0
    context_fidelity: float = 1.0
    occlusion_rate: float = 0.0
    fp_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_identities", "n_shots", "frames_per_shot", "detections_per_identity_per_shot", "feature_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.detections_per_identity_per_shot > self.frames_per_shot:
            raise ValueError("detections_per_identity_per_shot exceeds frames_per_shot")
        if self.feature_dim < self.n_identities:
            raise ValueError("feature_dim must be at least n_identities")
        if self.context_dim and self.context_dim < self.n_identities:
            raise ValueError("context_dim must be 0 or at least n_identities")
        for name in ("identity_separation", "shot_shift_scale", "noise_sigma", "context_separation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("context_fidelity", "occlusion_rate", "fp_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class GroundTruth:
    boxes: dict[int, list[tuple[int, tuple[float, float, float, float]]]]
    labels: dict[int, int]
    # (frame, identity) -> detection id, for boxes that produced a detection
    detected: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def identities(self) -> list[int]:
        return sorted({i for rows in self.boxes.values() for i, _ in rows})


def simplex(n: int, dim: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` points in ``dim`` dimensions with all pairwise distances equal to ``scale``."""
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    base = np.eye(n, dim) * (scale / np.sqrt(2.0))
    base -= base.mean(axis=0)
    return base @ Q.T


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def generate(cfg: ScenarioConfig) -> tuple[list[Detection], list[Shot], GroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    F, N = cfg.feature_dim, cfg.n_identities
    centers = simplex(N, F, cfg.identity_separation, rng)
    ctx_centers = simplex(N, cfg.context_dim, cfg.context_separation, rng) if cfg.context_dim else None
    far = 5.0 * (cfg.identity_separation + cfg.shot_shift_scale + 1.0)

    shots = [
        Shot(s, s * cfg.frames_per_shot, (s + 1) * cfg.frames_per_shot - 1)
        for s in range(cfg.n_shots)
    ]
    rows = []  # (frame, identity, bbox, feature, context)
    gt_boxes: dict[int, list] = {f: [] for s in shots for f in range(s.start, s.end + 1)}
    for shot in shots:
        for ident in range(N):
            drift = cfg.shot_shift_scale * _unit(rng, F)
            base = centers[ident] + drift
            if ctx_centers is not None:
                if rng.random() < cfg.context_fidelity:
                    ctx = ctx_centers[ident]
                else:
                    ctx = cfg.context_separation * _unit(rng, cfg.context_dim)
            else:
                ctx = None
            length = cfg.detections_per_identity_per_shot
            offset = int(rng.integers(0, cfg.frames_per_shot - length + 1))
            w = float(rng.uniform(40, 60))
            h = 1.2 * w
            x0 = 50.0 + 150.0 * ident
            y0 = float(rng.uniform(100, 300))
            vx, vy = rng.uniform(-1.0, 1.0, size=2)
            for t in range(length):
                frame = shot.start + offset + t
                bbox = (x0 + vx * t, y0 + vy * t, w, h)
                gt_boxes[frame].append((ident + 1, bbox))
                feat = base + cfg.noise_sigma * rng.normal(size=F)
                c = None if ctx is None else ctx + cfg.noise_sigma * rng.normal(size=cfg.context_dim)
                occluded = rng.random() < cfg.occlusion_rate
                if not occluded:
                    rows.append((frame, ident + 1, bbox, feat, c))
        for frame in range(shot.start, shot.end + 1):
            if rng.random() < cfg.fp_rate:
                bbox = (float(rng.uniform(0, 50 + 150 * N)), float(rng.uniform(0, 400)), 30.0, 36.0)
                feat = far * _unit(rng, F)
                c = None if ctx_centers is None else cfg.context_separation * _unit(rng, cfg.context_dim)
                rows.append((frame, BACKGROUND, bbox, feat, c))

    rows.sort(key=lambda r: (r[0], r[1] == BACKGROUND, r[1]))
    detections = []
    labels: dict[int, int] = {}
    detected: dict[tuple[int, int], int] = {}
    for det_id, (frame, ident, bbox, feat, ctx) in enumerate(rows):
        score = 0.5 if ident == BACKGROUND else 0.9
        detections.append(Detection(det_id, frame, bbox, score, feat, ctx))
        labels[det_id] = ident
        if ident != BACKGROUND:
            detected[frame, ident] = det_id
    gt = GroundTruth(boxes={f: b for f, b in gt_boxes.items() if b}, labels=labels, detected=detected)
    return detections, shots, gt


def oracle_labels(seq: DetectionSequence, gt: GroundTruth) -> dict[int, int]:
    """Identity of every detection in ``seq``; false positives map to ``BACKGROUND``."""
    missing = [d.id for d in seq.detections if d.id not in gt.labels]
    if missing:
        raise KeyError(f"no ground-truth label for detections {missing[:5]}")
    return {d.id: gt.labels[d.id] for d in seq.detections}
