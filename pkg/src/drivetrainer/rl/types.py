"""
RL Types — Transitions, trainer configuration and training records.

• Transition: one (s, a, r, s′, terminal) experience in compact form
• TrainerConfig: every knob of the asynchronous training loop
• TrainingLogRecord: one line of the training curve
• TrainingSummary: what a finished run reports back
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, model_validator

from drivetrainer.config import config_hash
from drivetrainer.nn.types import NetworkConfig, NetworkKind
from drivetrainer.obs.types import CompactObservation, ObservationBatch, ObservationConfig
from drivetrainer.sim.types import SEEN_SCENARIOS, Density, ScenarioId


@dataclass(frozen=True)
class Transition:
    obs: CompactObservation
    action: int
    reward: float
    next_obs: CompactObservation
    # collision or success only; timeouts still bootstrap
    terminal: bool


@dataclass(frozen=True)
class TransitionBatch:
    obs: ObservationBatch
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: ObservationBatch
    terminals: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> TransitionBatch:
        return cls(
            obs=ObservationBatch.from_observations([t.obs for t in transitions]),
            actions=np.array([t.action for t in transitions], dtype=np.int64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_obs=ObservationBatch.from_observations([t.next_obs for t in transitions]),
            terminals=np.array([t.terminal for t in transitions], dtype=bool),
        )


# ── Configuration ────────────────────────────────────────────────

class TrainerConfig(BaseModel):
    """Asynchronous D3QN training; defaults are the full-size constants."""

    gamma: float = Field(0.99, ge=0.0, le=1.0)
    lr: float = Field(1e-4, gt=0)
    batch_size: int = Field(128, gt=0)
    target_sync_period: int = Field(1500, gt=0)
    collect_interval: int = Field(4000, gt=0)
    rounds_per_update: int = Field(300, gt=0)
    buffer_capacity: int = Field(500_000, gt=0)
    max_grad_norm: float = Field(10.0, gt=0)

    per_alpha: float = Field(0.6, ge=0)
    per_beta_start: float = Field(0.4, ge=0, le=1)
    per_beta_end: float = Field(1.0, ge=0, le=1)
    priority_floor: float = Field(1e-3, gt=0)

    total_steps: int = Field(300_000, gt=0)
    workers: int = Field(1, ge=1)
    worker_restarts: int = Field(3, ge=0)
    seed: int = Field(0, ge=0)
    noisy_targets: bool = True
    checkpoint_every: int = Field(5, gt=0)  # update bursts

    scenarios: list[ScenarioId] = Field(default_factory=lambda: list(SEEN_SCENARIOS))
    densities: list[Density] = Field(default_factory=lambda: [Density.REGULAR, Density.DENSE])
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    observation: ObservationConfig = Field(default_factory=ObservationConfig)

    @model_validator(mode="after")
    def _check(self) -> TrainerConfig:
        if not self.scenarios or not self.densities:
            raise ValueError("scenarios and densities must be non-empty")
        if self.per_beta_end < self.per_beta_start:
            raise ValueError("per_beta_end must not be below per_beta_start")
        wants_dense = self.network.kind == NetworkKind.DENSE_BEV
        if self.observation.dense != wants_dense:
            self.observation = self.observation.model_copy(update={"dense": wants_dense})
        return self

    def beta(self, env_steps: int) -> float:
        """Importance-sampling exponent, annealed linearly over the step budget."""
        frac = min(1.0, env_steps / self.total_steps)
        return self.per_beta_start + frac * (self.per_beta_end - self.per_beta_start)

    def config_hash(self) -> str:
        return config_hash(self)


class TrainingLogRecord(BaseModel):
    env_steps: int
    episodes: int
    mean_reward_100: float | None
    loss: float | None
    buffer_size: int
    sync_count: int


@dataclass
class TrainingSummary:
    env_steps: int = 0
    episodes: int = 0
    gradient_steps: int = 0
    sync_count: int = 0
    transitions_pushed: int = 0
    transitions_counted: int = 0
    worker_restarts: int = 0
    checkpoints: list[Path] = field(default_factory=list)
    records: list[TrainingLogRecord] = field(default_factory=list)

    @property
    def final_mean_reward(self) -> float | None:
        return self.records[-1].mean_reward_100 if self.records else None
