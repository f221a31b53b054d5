"""
Learner — double-Q targets, weighted TD regression and target syncing.

The learner thread is the only writer of the online parameters θ; the
target copy θ⁻ changes only through `sync_target`.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import structlog

from drivetrainer.autodiff import Tape, Tensor, backward, ops
from drivetrainer.errors import TrainingDivergedError
from drivetrainer.nn.optim import Adam
from drivetrainer.nn.qnet import QNetwork, QNetworkParams
from drivetrainer.nn.types import Mode
from drivetrainer.obs.types import ObservationBatch
from drivetrainer.rl.buffer import PrioritizedReplayBuffer
from drivetrainer.rl.types import TrainerConfig, TransitionBatch

logger = structlog.get_logger(__name__)

QFunction = Callable[[ObservationBatch], np.ndarray]


def q_function(net: QNetwork, mode: Mode) -> QFunction:
    """Plain-array view of a network, used for target computation."""
    return lambda batch: net(batch, mode).q.data.astype(np.float64)


def compute_targets(batch: TransitionBatch, online: QFunction, target: QFunction, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, else r + γ·Q⁻(s′, argmax_a Q(s′, a))."""
    rewards = batch.rewards.astype(np.float64)
    if gamma == 0.0 or batch.terminals.all():
        return rewards.copy()
    selected = np.argmax(online(batch.next_obs), axis=1)
    evaluated = target(batch.next_obs)[np.arange(len(batch)), selected]
    bootstrap = np.where(batch.terminals, 0.0, evaluated)
    return rewards + gamma * bootstrap


def train_step(
    net: QNetwork,
    optimizer: Adam,
    batch: TransitionBatch,
    y: np.ndarray,
    weights: np.ndarray,
    priority_floor: float = 1e-3,
) -> tuple[float, np.ndarray]:
    """One Adam step on mean(w·(y − Q(s, a))²); returns the loss and |TD| + floor priorities."""
    dtype = net.config.np_dtype
    rows = np.arange(len(batch))
    with Tape():
        out = net(batch.obs, Mode.TRAIN)
        q_taken = ops.getitem(out.q, (rows, batch.actions))
        td = ops.sub(Tensor(y, dtype=dtype), q_taken)
        weighted = ops.mul(Tensor(weights, dtype=dtype), ops.mul(td, td))
        loss = ops.mean(weighted)

    value = float(loss.item())
    if not np.isfinite(value):
        raise TrainingDivergedError(
            {
                "loss": value,
                "q_min": float(np.nanmin(out.q.data)) if np.isfinite(out.q.data).any() else None,
                "q_max": float(np.nanmax(out.q.data)) if np.isfinite(out.q.data).any() else None,
                "target_range": (float(np.min(y)), float(np.max(y))),
                "optimizer_steps": optimizer.step_count,
            }
        )
    optimizer.zero_grad()
    backward(loss)
    optimizer.step()
    priorities = np.abs(td.data.astype(np.float64)) + priority_floor
    return value, priorities


def sync_target(params: QNetworkParams, step: int, period: int) -> bool:
    """θ⁻ := θ when `step` is a positive multiple of `period`."""
    if step > 0 and step % period == 0:
        params.sync_target()
        return True
    return False


@dataclass
class BurstResult:
    rounds: int
    mean_loss: float | None
    synced: int


class Learner:
    """Owns θ, θ⁻, the optimizer and the sampling generator."""

    def __init__(self, config: TrainerConfig, buffer: PrioritizedReplayBuffer) -> None:
        self.config = config
        self.buffer = buffer
        network = config.network.model_copy(update={"seed": config.seed})
        self.params = QNetworkParams.create(network)
        self.optimizer = Adam(self.params.online.parameters(), lr=config.lr, max_grad_norm=config.max_grad_norm)
        self._rng = np.random.default_rng([config.seed, 0x5EED])
        self.gradient_steps = 0
        self.sync_count = 0

    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def update_burst(self, env_steps: int) -> BurstResult:
        """Run the configured number of train rounds; skipped while the buffer is short of one batch."""
        cfg = self.config
        if not self.ready():
            return BurstResult(rounds=0, mean_loss=None, synced=0)
        target_mode = Mode.TRAIN if cfg.noisy_targets else Mode.EVAL
        online_q = q_function(self.params.online, target_mode)
        target_q = q_function(self.params.target, target_mode)
        beta = cfg.beta(env_steps)

        losses: list[float] = []
        synced = 0
        for _ in range(cfg.rounds_per_update):
            sample = self.buffer.sample(cfg.batch_size, beta, self._rng)
            batch = TransitionBatch.from_transitions(sample.transitions)
            y = compute_targets(batch, online_q, target_q, cfg.gamma)
            loss, priorities = train_step(
                self.params.online, self.optimizer, batch, y, sample.weights, cfg.priority_floor
            )
            self.buffer.update_priorities(sample.indices, priorities)
            losses.append(loss)
            self.gradient_steps += 1
            if sync_target(self.params, self.gradient_steps, cfg.target_sync_period):
                self.sync_count += 1
                synced += 1

        mean_loss = float(np.mean(losses))
        logger.info(
            "update_burst_done",
            env_steps=env_steps,
            gradient_steps=self.gradient_steps,
            mean_loss=round(mean_loss, 6),
            beta=round(beta, 4),
            synced=synced,
        )
        return BurstResult(rounds=len(losses), mean_loss=mean_loss, synced=synced)
