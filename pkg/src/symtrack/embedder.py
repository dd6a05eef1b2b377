"""Fully connected embedding network, hinge-family losses and momentum SGD."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

LOSS_KINDS = ("contrastive", "triplet", "symtriplet")
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossConfig:
    kind: str = "symtriplet"
    tau: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}")
        if self.tau <= 0 or self.alpha <= 0:
            raise ValueError("margins must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


@dataclass
class EmbeddingModel:
    """ReLU hidden layers, linear output. ``weights[i]`` has shape (out, in)."""

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None
    activation: str = field(default="relu")

    @classmethod
    def init(cls, sizes: Sequence[int], seed: int = 0) -> "EmbeddingModel":
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(list(sizes), weights, biases, seed=seed)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "EmbeddingModel":
        weights = [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(o) for o in sizes[1:]]
        return cls(list(sizes), weights, biases)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            list(self.sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            seed=self.seed,
            activation=self.activation,
        )

    def forward_batch(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns outputs and the cached layer inputs/pre-activations for backprop."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected inputs of dimension {self.sizes[0]}, got {X.shape}")
        cache = []
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            cache.append((h, z))
            h = z if i == last else np.maximum(z, 0.0)
        return h, cache

    def backward_batch(self, cache, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients summed over the batch, in ``params`` order."""
        grads: list[np.ndarray] = []
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            h, z = cache[i]
            if i != len(self.weights) - 1:
                g = g * (z > 0)
            grads.append(g.sum(axis=0))
            grads.append(g.T @ h)
            g = g @ self.weights[i]
        grads.reverse()
        return grads

    def embed(self, X: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.atleast_2d(X))[0]


def forward(model: EmbeddingModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("forward expects a single feature vector")
    return model.forward_batch(x[None, :])[0][0]


# Losses. Each batch form returns per-sample losses and per-input gradients.

def contrastive_batch(E1, E2, is_positive, cfg: LossConfig):
    diff = E1 - E2
    D = np.einsum("ij,ij->i", diff, diff)
    pos = np.asarray(is_positive, dtype=bool)
    active_neg = ~pos & (D < cfg.tau)
    loss = np.where(pos, 0.5 * D, np.where(active_neg, 0.5 * (cfg.tau - D), 0.0))
    coef = np.where(pos, 1.0, np.where(active_neg, -1.0, 0.0))[:, None]
    g1 = coef * diff
    return loss, g1, -g1


def triplet_batch(Ek, El, Em, cfg: LossConfig):
    d_lk = El - Ek
    d_mk = Em - Ek
    raw = np.einsum("ij,ij->i", d_lk, d_lk) - np.einsum("ij,ij->i", d_mk, d_mk) + cfg.alpha
    active = (raw > 0)[:, None]
    loss = 0.5 * np.maximum(raw, 0.0)
    gk = np.where(active, -(d_lk - d_mk), 0.0)
    gl = np.where(active, d_lk, 0.0)
    gm = np.where(active, -d_mk, 0.0)
    return loss, gk, gl, gm


def symtriplet_batch(Ek, El, Em, cfg: LossConfig):
    d_lk = El - Ek
    d_mk = Em - Ek
    d_ml = Em - El
    sq = lambda v: np.einsum("ij,ij->i", v, v)
    raw = sq(d_lk) - 0.5 * (sq(d_mk) + sq(d_ml)) + cfg.alpha
    active = (raw > 0)[:, None]
    loss = np.maximum(raw, 0.0)
    gk = np.where(active, -(2 * d_lk - d_mk), 0.0)
    gl = np.where(active, 2 * d_lk + d_ml, 0.0)
    gm = np.where(active, -(d_mk + d_ml), 0.0)
    return loss, gk, gl, gm


def contrastive_loss(e1, e2, is_positive: bool, cfg: LossConfig):
    e1, e2 = _same_dims(e1, e2)
    loss, g1, g2 = contrastive_batch(e1[None], e2[None], [is_positive], cfg)
    return float(loss[0]), g1[0], g2[0]


def triplet_loss(ek, el, em, cfg: LossConfig):
    ek, el, em = _same_dims(ek, el, em)
    loss, gk, gl, gm = triplet_batch(ek[None], el[None], em[None], cfg)
    return float(loss[0]), gk[0], gl[0], gm[0]


def symtriplet_loss(ek, el, em, cfg: LossConfig):
    ek, el, em = _same_dims(ek, el, em)
    loss, gk, gl, gm = symtriplet_batch(ek[None], el[None], em[None], cfg)
    return float(loss[0]), gk[0], gl[0], gm[0]


def _same_dims(*vs):
    arrs = [np.asarray(v, dtype=float).ravel() for v in vs]
    if len({a.shape for a in arrs}) != 1:
        raise ValueError("embedding dimensions differ")
    return arrs


def batch_loss_and_grads(model: EmbeddingModel, X: np.ndarray, batch: np.ndarray, cfg: LossConfig):
    """Summed loss and parameter gradients for one batch.

    ``batch`` rows index into ``X``: ``(i, j, label)`` for contrastive,
    ``(k, l, m)`` for the triplet losses.
    """
    if cfg.kind == "contrastive":
        n = len(batch)
        out, cache = model.forward_batch(np.concatenate([X[batch[:, 0]], X[batch[:, 1]]]))
        loss, g1, g2 = contrastive_batch(out[:n], out[n:], batch[:, 2] == 1, cfg)
        grad_out = np.concatenate([g1, g2])
    else:
        n = len(batch)
        rows = np.concatenate([X[batch[:, 0]], X[batch[:, 1]], X[batch[:, 2]]])
        out, cache = model.forward_batch(rows)
        fn = triplet_batch if cfg.kind == "triplet" else symtriplet_batch
        loss, gk, gl, gm = fn(out[:n], out[n:2 * n], out[2 * n:], cfg)
        grad_out = np.concatenate([gk, gl, gm])
    return loss, model.backward_batch(cache, grad_out)


@dataclass
class TrainResult:
    model: EmbeddingModel
    loss_trace: list[float]


def train(
    model: EmbeddingModel,
    X: np.ndarray,
    samples: np.ndarray,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
) -> TrainResult:
    """Minibatch SGD with momentum on ``samples`` (see ``batch_loss_and_grads``).

    Gradients are summed over each batch; the update is
    ``v = momentum * v - lr * (g + weight_decay * w)``, ``w += v``.
    Returns a new model; ``model`` is left untouched.
    """
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2 or len(samples) == 0:
        raise ValueError("training set is empty")
    expected = 3
    if samples.shape[1] != expected:
        raise ValueError(f"samples must have {expected} columns")
    model = model.copy()
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(train_cfg.seed)
    velocity = [np.zeros_like(p) for p in model.params]
    trace: list[float] = []
    lr, mu, wd = train_cfg.learning_rate, train_cfg.momentum, train_cfg.weight_decay
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for bi, start in enumerate(range(0, len(order), train_cfg.batch_size)):
            batch = samples[order[start:start + train_cfg.batch_size]]
            loss, grads = batch_loss_and_grads(model, X, batch, loss_cfg)
            batch_loss = float(loss.sum())
            if not np.isfinite(batch_loss) or not all(np.isfinite(g).all() for g in grads):
                raise TrainingError(f"non-finite loss or gradient at epoch {epoch}, batch {bi}")
            total += batch_loss
            for p, v, g in zip(model.params, velocity, grads):
                v *= mu
                v -= lr * (g + wd * p)
                p += v
        trace.append(total / len(samples))
        if epoch % 50 == 0:
            log.debug("epoch %d mean loss %.6f", epoch, trace[-1])
    return TrainResult(model, trace)


# Gradient checking

@dataclass
class GradCheckReport:
    loss: float
    max_rel_error: float
    max_abs_error: float
    passed: bool
    rejected: bool = False


def sample_loss(model: EmbeddingModel, inputs: Sequence[np.ndarray], cfg: LossConfig, positive: bool = True) -> float:
    X = np.stack([np.asarray(x, dtype=float) for x in inputs])
    E = model.forward_batch(X)[0]
    if cfg.kind == "contrastive":
        return contrastive_loss(E[0], E[1], positive, cfg)[0]
    if cfg.kind == "triplet":
        return triplet_loss(E[0], E[1], E[2], cfg)[0]
    return symtriplet_loss(E[0], E[1], E[2], cfg)[0]


def _sample_analytic(model, inputs, cfg, positive):
    X = np.stack([np.asarray(x, dtype=float) for x in inputs])
    if cfg.kind == "contrastive":
        batch = np.array([[0, 1, int(positive)]])
    else:
        batch = np.array([[0, 1, 2]])
    loss, grads = batch_loss_and_grads(model, X, batch, cfg)
    return float(loss[0]), grads


def _kink_distance(model: EmbeddingModel, inputs) -> float:
    X = np.stack([np.asarray(x, dtype=float) for x in inputs])
    _, cache = model.forward_batch(X)
    hidden = [np.abs(z).min() for _, z in cache[:-1]]
    return min(hidden) if hidden else np.inf


def grad_check(
    model: EmbeddingModel,
    inputs: Sequence[np.ndarray],
    cfg: LossConfig,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    positive: bool = True,
) -> GradCheckReport:
    """Compare analytic parameter gradients with central differences.

    The relative error is ``|a - n| / max(|a|, |n|)`` over the concatenated
    gradient vector (norm-wise). Samples within ``epsilon`` of the hinge or of
    a ReLU kink are flagged ``rejected``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    loss, analytic = _sample_analytic(model, inputs, cfg, positive)
    hinge = cfg.kind != "contrastive" or not positive
    if (hinge and abs(_hinge_margin(model, inputs, cfg, positive)) < 10 * epsilon) or (
        _kink_distance(model, inputs) < 10 * epsilon
    ):
        return GradCheckReport(loss, np.nan, np.nan, passed=False, rejected=True)

    probe = model.copy()
    numeric = []
    for p in probe.params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + epsilon
            up = sample_loss(probe, inputs, cfg, positive)
            flat[idx] = old - epsilon
            down = sample_loss(probe, inputs, cfg, positive)
            flat[idx] = old
            gflat[idx] = (up - down) / (2 * epsilon)
        numeric.append(g)
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    abs_err = float(np.abs(a - n).max()) if a.size else 0.0
    rel = float(np.linalg.norm(a - n) / scale) if scale > 0 else 0.0
    return GradCheckReport(loss, rel, abs_err, passed=rel <= tolerance)


def _hinge_margin(model, inputs, cfg, positive) -> float:
    """Signed argument of the hinge (positive means active)."""
    X = np.stack([np.asarray(x, dtype=float) for x in inputs])
    E = model.forward_batch(X)[0]
    sq = lambda v: float(v @ v)
    if cfg.kind == "contrastive":
        return cfg.tau - sq(E[0] - E[1])
    if cfg.kind == "triplet":
        return sq(E[1] - E[0]) - sq(E[2] - E[0]) + cfg.alpha
    return sq(E[1] - E[0]) - 0.5 * (sq(E[2] - E[0]) + sq(E[2] - E[1])) + cfg.alpha


def random_active_sample(
    model: EmbeddingModel,
    cfg: LossConfig,
    rng: np.random.Generator,
    epsilon: float = 1e-5,
    positive: bool = True,
    max_tries: int = 1000,
) -> list[np.ndarray]:
    """Draw inputs whose loss is active and that sit away from hinges and kinks."""
    count = 2 if cfg.kind == "contrastive" else 3
    hinge = cfg.kind != "contrastive" or not positive
    for _ in range(max_tries):
        inputs = [rng.normal(size=model.sizes[0]) for _ in range(count)]
        if hinge and _hinge_margin(model, inputs, cfg, positive) <= 1e3 * epsilon:
            continue
        if _kink_distance(model, inputs) <= 1e3 * epsilon:
            continue
        return inputs
    raise RuntimeError("could not draw an active sample")


# Checkpoint and loss-trace files

def write_checkpoint(model: EmbeddingModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"symtrack-checkpoint {CHECKPOINT_VERSION}\n")
        fh.write("sizes " + " ".join(str(s) for s in model.sizes) + "\n")
        fh.write(f"activation {model.activation}\n")
        fh.write(f"seed {'none' if model.seed is None else model.seed}\n")
        for W, b in zip(model.weights, model.biases):
            for row in W:
                fh.write(" ".join(f"{v: .17e}" for v in row) + "\n")
            fh.write(" ".join(f"{v: .17e}" for v in b) + "\n")


def read_checkpoint(path) -> EmbeddingModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    tag, version = lines[0].split()
    if tag != "symtrack-checkpoint" or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint header: {lines[0]!r}")
    sizes = [int(s) for s in lines[1].split()[1:]]
    activation = lines[2].split()[1]
    seed_tok = lines[3].split()[1]
    seed = None if seed_tok == "none" else int(seed_tok)
    body = iter(lines[4:])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = np.array([[float(v) for v in next(body).split()] for _ in range(fan_out)])
        b = np.array([float(v) for v in next(body).split()])
        if W.shape != (fan_out, fan_in) or b.shape != (fan_out,):
            raise ValueError("checkpoint parameter shapes do not match header")
        weights.append(W)
        biases.append(b)
    return EmbeddingModel(sizes, weights, biases, seed=seed, activation=activation)


def write_loss_trace(trace: Sequence[float], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},{v!r}\n")
