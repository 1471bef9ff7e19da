from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from loggan.config import parse_bool, read_key_values


class Scheme(enum.Enum):
    POLICY_GRADIENT = "pg"  # SeqGAN-style rollout rewards
    IMPORTANCE_WEIGHTED = "iw"  # MaliGAN-style normalized D/(1-D) weights
    COOPERATIVE = "coop"  # CoT-style mediator

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        t = text.strip().lower()
        aliases = {"seqgan": "pg", "maligan": "iw", "cot": "coop", "policy_gradient": "pg",
                   "importance_weighted": "iw", "cooperative": "coop"}
        return cls(aliases.get(t, t))

    @property
    def label(self) -> str:
        return {"pg": "SeqGAN", "iw": "MaliGAN", "coop": "CoT"}[self.value]


@dataclass(frozen=True)
class TrainConfig:
    mle_epochs: int = 50
    adv_epochs: int = 3
    batch_size: int = 64
    g_lr_mle: float = 1e-2
    g_lr_adv: float = 1e-3
    d_lr: float = 1e-2
    rollouts: int = 4
    scheme: Scheme = Scheme.POLICY_GRADIENT
    seed: int = 0
    d_pretrain_epochs: int = 1
    optimizer: str = "adam"
    grad_clip: float = 5.0
    baseline_decay: float = 0.9
    max_len: int = 64
    emb_dim: int = 32
    hidden: int = 64
    probe_samples: int = 200
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mle_epochs < 0 or self.adv_epochs < 0 or self.d_pretrain_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.rollouts < 1:
            raise ValueError("rollout count must be at least 1")
        if min(self.g_lr_mle, self.g_lr_adv, self.d_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if not 0 <= self.baseline_decay < 1:
            raise ValueError("baseline decay must lie in [0, 1)")
        if self.max_len < 2 or self.probe_samples < 1 or self.workers < 1:
            raise ValueError("max_len >= 2, probe_samples >= 1 and workers >= 1 required")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs: dict = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"unknown training key {key!r}")
            ftype = known[key].type
            if key == "scheme":
                kwargs[key] = Scheme.parse(raw)
            elif ftype in ("int", int):
                kwargs[key] = int(raw)
            elif ftype in ("float", float):
                kwargs[key] = float(raw)
            elif ftype in ("bool", bool):
                kwargs[key] = parse_bool(raw)
            else:
                kwargs[key] = raw.strip()
        return cls(**kwargs)

    @classmethod
    def from_config(cls, path: str | Path) -> "TrainConfig":
        return cls.from_mapping(read_key_values(path))

    def to_mapping(self) -> dict[str, str]:
        out = {k: str(v) for k, v in asdict(self).items()}
        out["scheme"] = self.scheme.value
        return out
