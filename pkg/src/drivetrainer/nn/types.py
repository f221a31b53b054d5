"""
Network Types — Enums and the validated network configuration.

• Enums: Mode, NetworkKind, MergeMode, ScoreActivation
• Config: NetworkConfig with desk / full presets
• Output: QOutput returned by every forward pass
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator

from drivetrainer.autodiff import Tensor
from drivetrainer.config import config_hash

# ── Core Enums ───────────────────────────────────────────────────


class Mode(str, Enum):
    """Noisy layers sample noise in TRAIN and use the mean weights in EVAL."""
    TRAIN = "train"
    EVAL = "eval"


class NetworkKind(str, Enum):
    DQGAT = "dqgat"
    GCN_UNIFORM = "gcn_uniform"
    GCN_DISTANCE = "gcn_distance"
    DENSE_BEV = "dense_bev"


class MergeMode(str, Enum):
    CONCAT = "concat"
    AVERAGE = "average"


class ScoreActivation(str, Enum):
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"


NODE_FEATURES = 10
N_ACTIONS = 5

# x, y, d, psi, vx, vy, ax, ay, w, l
DEFAULT_FEATURE_SCALE = (1 / 35, 1 / 35, 1 / 35, 1 / np.pi, 1 / 10, 1 / 10, 1 / 3, 1 / 3, 1 / 2, 1 / 5)


# ── Configuration ────────────────────────────────────────────────

class NetworkConfig(BaseModel):
    """Sizes and switches of the Q-network and its ablations."""

    kind: NetworkKind = NetworkKind.DQGAT
    dtype: Literal["float32", "float64"] = "float32"
    seed: int = 0

    encoder_channels: tuple[int, ...] = (8, 16, 32, 64)
    z_dim: int = Field(64, gt=0)
    e_dim: int = Field(32, gt=0)
    gat_dim: int = Field(64, gt=0)
    heads: int = Field(4, gt=0)
    stream_hidden: int = Field(64, gt=0)
    n_actions: int = Field(N_ACTIONS, gt=0)

    sigma0: float = Field(0.5, ge=0)
    score_activation: ScoreActivation = ScoreActivation.RELU
    leaky_slope: float = 0.2
    feature_scale: tuple[float, ...] = DEFAULT_FEATURE_SCALE

    @field_validator("encoder_channels")
    @classmethod
    def _positive_channels(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v or any(c <= 0 for c in v):
            raise ValueError("encoder_channels must be a non-empty list of positive ints")
        return v

    @field_validator("feature_scale")
    @classmethod
    def _ten_scales(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if len(v) != NODE_FEATURES:
            raise ValueError(f"feature_scale needs {NODE_FEATURES} entries")
        return v

    @property
    def bev_channels(self) -> int:
        return 5 if self.kind == NetworkKind.DENSE_BEV else 3

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def config_hash(self) -> str:
        return config_hash(self)

    @classmethod
    def desk(cls, **overrides: object) -> NetworkConfig:
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides: object) -> NetworkConfig:
        values: dict[str, object] = {"z_dim": 512, "e_dim": 128, "gat_dim": 256, "heads": 4}
        values.update(overrides)
        return cls(**values)


# ── Forward output ───────────────────────────────────────────────

@dataclass
class QOutput:
    """Batched Q-values plus the pieces they were combined from."""
    q: Tensor
    value: Tensor
    advantage: Tensor
    # one [B, S, N, N] array per graph layer; empty for dense_bev
    attention: list[np.ndarray] = field(default_factory=list)
