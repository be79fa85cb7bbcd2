"""Dataclass configs and JSON round-trip for the CLI and experiments."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class TrainConfig:
    """Hyperparameters of the joint embedding training."""

    dim: int = 100
    attn_dim: int | None = None  # hidden width of both attention nets; None -> dim
    lam: float = 0.5             # trade-off between ranking loss and KG loss
    batch_size: int = 256
    lr_rec: float = 0.003        # Adagrad-style rate for user/attention parameters
    lr_kg: float = 0.001         # Adam-style rate for entity/relation parameters
    l2_rec: float = 1e-4
    margin: float = 1.0
    epochs: int = 30
    seed: int = 0
    belief_max_entities: int = 3   # attribute values summed into the training belief
    belief_drop_prob: float = 0.2  # chance of an empty belief (cold-start pairs)
    average_pooling: bool = False  # ablation: uniform relation aggregation

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0,1], got {self.lam}")
        if self.lr_rec <= 0 or self.lr_kg <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def attention_dim(self) -> int:
        return self.dim if self.attn_dim is None else self.attn_dim


@dataclass
class RewardConfig:
    """Per-turn rewards and the discount used by the dialogue policy."""

    ask_hit: float = 0.1      # user supplied at least one value
    ask_miss: float = -0.1    # queried relation gave nothing
    accept: float = 1.0       # recommendation accepted
    reject: float = -0.3      # rejected list, or turn budget exhausted
    damping: float = 0.9
    t_max: int = 0            # 0 -> number of relations + 1, resolved at load

    def __post_init__(self) -> None:
        if not 0.0 < self.damping < 1.0:
            raise ValueError(f"damping must lie in (0,1), got {self.damping}")


@dataclass
class PolicyConfig:
    """DQN training settings for the two-action policy."""

    hidden: int = 64
    batch_size: int = 128
    buffer_capacity: int = 100_000
    lr: float = 1e-3
    sync_every: int = 200
    episodes: int = 2000
    eps_start: float = 1.0
    eps_end: float = 0.1
    anneal_fraction: float = 0.5  # fraction of episodes over which epsilon decays
    seed: int = 0


@dataclass
class DataConfig:
    """Paths and ingestion settings for one dataset."""

    triples: str = ""
    interactions: str = ""
    blocklist: str = ""           # optional relation-blocklist file
    templates: str = ""           # optional relation->question template file
    aliases: str = ""             # optional surface->entity alias file for live chat
    rating_threshold: int = 4
    min_interactions: int = 10    # k-core threshold for users and items
    domain_noun: str = "item"
    seed: int = 0


@dataclass
class AppConfig:
    """Top-level config consumed by every CLI subcommand."""

    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    top_k: int = 10
    score_threshold: float = 0.25  # M: candidate counts toward c_t below this distance
    out_dir: str = "out"
    session_timeout_s: float = 900.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "AppConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        sections = {}
        for f in dataclasses.fields(cls):
            if f.name not in raw:
                continue
            val = raw[f.name]
            if dataclasses.is_dataclass(f.type) or f.name in ("data", "train", "reward", "policy"):
                sub_cls = {"data": DataConfig, "train": TrainConfig,
                           "reward": RewardConfig, "policy": PolicyConfig}[f.name]
                sub_known = {sf.name for sf in dataclasses.fields(sub_cls)}
                sub_unknown = set(val) - sub_known
                if sub_unknown:
                    raise KeyError(f"unknown keys in '{f.name}': {sorted(sub_unknown)}")
                sections[f.name] = sub_cls(**val)
            else:
                sections[f.name] = val
        return cls(**sections)

    @classmethod
    def load(cls, path: str | Path) -> "AppConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]
