"""
Asynchronous Trainer — actor threads collect, the learner updates.

Each phase the gate releases `collect_interval` pooled env steps to the
workers; once they are all in the buffer the learner runs its update
burst, publishes fresh parameters and opens the next phase. Training-curve
records go to `training_log.jsonl`, checkpoints to `checkpoints/`.
"""

from __future__ import annotations

import threading
from collections.abc import Iterator
from pathlib import Path

import structlog

from drivetrainer.errors import WorkerFailureError
from drivetrainer.nn.checkpoint import save_checkpoint
from drivetrainer.rl.buffer import PrioritizedReplayBuffer
from drivetrainer.rl.learner import Learner
from drivetrainer.rl.types import TrainerConfig, TrainingLogRecord, TrainingSummary
from drivetrainer.rl.worker import CollectionGate, EpisodeStats, ExperienceWorker, ParameterStore

logger = structlog.get_logger(__name__)

TRAINING_LOG = "training_log.jsonl"
POLL_SECONDS = 1.0


class AsyncTrainer:
    def __init__(self, config: TrainerConfig, out_dir: str | Path) -> None:
        self.config = config
        self.out_dir = Path(out_dir)
        self.buffer = PrioritizedReplayBuffer(config.buffer_capacity, config.per_alpha, config.priority_floor)
        self.learner = Learner(config, self.buffer)
        self.gate = CollectionGate()
        self.store = ParameterStore()
        self.stats = EpisodeStats()
        self.workers = [
            ExperienceWorker(k, config, self.buffer, self.gate, self.store, self.stats)
            for k in range(config.workers)
        ]
        self.summary = TrainingSummary()

    @property
    def log_path(self) -> Path:
        return self.out_dir / TRAINING_LOG

    def checkpoints(self) -> Iterator[Path]:
        """Run the whole budget, yielding each checkpoint path as it is written."""
        cfg = self.config
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.log_path.write_text("", encoding="utf-8")
        self.store.publish(self.learner.params.online.state_dict())
        threads = [
            threading.Thread(target=w.run, name=f"experience-worker-{w.worker_id}", daemon=True)
            for w in self.workers
        ]
        for t in threads:
            t.start()
        logger.info("training_started", workers=cfg.workers, total_steps=cfg.total_steps, config_hash=cfg.config_hash())

        env_steps = 0
        bursts = 0
        try:
            while env_steps < cfg.total_steps:
                quota = min(cfg.collect_interval, cfg.total_steps - env_steps)
                self.gate.open_phase(quota)
                self._await_phase()
                env_steps += quota

                burst = self.learner.update_burst(env_steps)
                self.store.publish(self.learner.params.online.state_dict())
                bursts += 1
                self._log_record(env_steps, burst.mean_loss)

                if bursts % cfg.checkpoint_every == 0 or env_steps >= cfg.total_steps:
                    path = save_checkpoint(
                        self.out_dir / "checkpoints" / f"step_{env_steps:09d}.npz",
                        self.learner.params,
                        env_steps,
                        {
                            "gradient_steps": self.learner.gradient_steps,
                            "trainer_hash": cfg.config_hash(),
                            "observation": cfg.observation.model_dump(mode="json"),
                        },
                    )
                    self.summary.checkpoints.append(path)
                    yield path
        finally:
            self.gate.close()
            for t in threads:
                t.join()
            self._finish(env_steps)

    def run(self) -> TrainingSummary:
        for _ in self.checkpoints():
            pass
        return self.summary

    def _await_phase(self) -> None:
        while not self.gate.wait_collected(timeout=POLL_SECONDS):
            if all(w.failed is not None for w in self.workers):
                reasons = {w.worker_id: repr(w.failed) for w in self.workers}
                raise WorkerFailureError(f"every experience worker exhausted its restarts: {reasons}")

    def _log_record(self, env_steps: int, loss: float | None) -> None:
        record = TrainingLogRecord(
            env_steps=env_steps,
            episodes=self.stats.episodes,
            mean_reward_100=self.stats.mean(),
            loss=loss,
            buffer_size=len(self.buffer),
            sync_count=self.learner.sync_count,
        )
        self.summary.records.append(record)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(record.model_dump_json() + "\n")

    def _finish(self, env_steps: int) -> None:
        s = self.summary
        s.env_steps = env_steps
        s.episodes = self.stats.episodes
        s.gradient_steps = self.learner.gradient_steps
        s.sync_count = self.learner.sync_count
        s.transitions_pushed = self.buffer.total_pushed
        s.transitions_counted = sum(w.steps_counted for w in self.workers)
        s.worker_restarts = sum(w.restarts for w in self.workers)
        logger.info(
            "training_finished",
            env_steps=s.env_steps,
            episodes=s.episodes,
            gradient_steps=s.gradient_steps,
            pushed=s.transitions_pushed,
            counted=s.transitions_counted,
        )


def run_async_training(config: TrainerConfig, out_dir: str | Path) -> Iterator[Path]:
    """Checkpoint stream of one asynchronous training run."""
    return AsyncTrainer(config, out_dir).checkpoints()
