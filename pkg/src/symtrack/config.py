"""Pipeline configuration: one YAML file, defaults, env and flag overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from .constraints import ContextConfig
from .embedder import LossConfig, TrainConfig
from .linker import LinkerConfig
from .pipeline import MiningConfig, ModelConfig
from .synth import ScenarioConfig
from .tracklets import LinkAffinityConfig

ENV_SEED = "SYMTRACK_SEED"
ENV_THREADS = "SYMTRACK_THREADS"

# HAC stop thresholds per loss family when the linker section leaves theta
# unset; swept on the default synthetic scene (embedding scale differs by loss)
DEFAULT_THETA = {"contrastive": 0.4, "triplet": 8.0, "symtriplet": 15.0}

SECTIONS = {
    "scenario": ScenarioConfig,
    "affinity": LinkAffinityConfig,
    "context": ContextConfig,
    "mining": MiningConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "linker": LinkerConfig,
}

# Desk-scale defaults. The training section departs from TrainConfig's
# fine-tuning defaults because the network here is trained from scratch.
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "scenario": {},
    "affinity": {},
    "context": {},
    "mining": {},
    "model": {"hidden": [64], "embedding_dim": 64},
    "loss": {"kind": "symtriplet"},
    "train": {"learning_rate": 1e-3, "momentum": 0.9, "weight_decay": 1e-4, "batch_size": 128, "epochs": 20},
    "linker": {"theta": None},
}


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    seed: int
    threads: int
    scenario: ScenarioConfig
    affinity: LinkAffinityConfig
    context: ContextConfig
    mining: MiningConfig
    model: ModelConfig
    loss: LossConfig
    train: TrainConfig
    linker: LinkerConfig

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "threads": self.threads}
        for name in SECTIONS:
            d = asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{cls.__name__}: {e}") from None


def load_config(path=None, overrides: dict | None = None, env=None) -> PipelineConfig:
    """Precedence: ``overrides`` (flags) > environment > file > defaults."""
    env = os.environ if env is None else env
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        raw = _merge(raw, data)
    if env.get(ENV_SEED):
        raw["seed"] = int(env[ENV_SEED])
    if env.get(ENV_THREADS):
        raw["threads"] = int(env[ENV_THREADS])
    if overrides:
        raw = _merge(raw, overrides)

    seed = int(raw["seed"])
    threads = int(raw["threads"])
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    # the global seed feeds every seeded section unless set explicitly there
    raw["scenario"].setdefault("seed", seed)
    raw["train"].setdefault("seed", seed)
    linker = dict(raw["linker"])
    if linker.get("theta") is None:
        kind = raw["loss"].get("kind", "symtriplet")
        linker["theta"] = DEFAULT_THETA.get(kind, 5.0)
    raw["linker"] = linker
    built = {name: _build(cls, raw[name]) for name, cls in SECTIONS.items()}
    return PipelineConfig(seed=seed, threads=threads, **built)


def dump_default_config() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
