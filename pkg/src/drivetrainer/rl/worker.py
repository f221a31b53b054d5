"""
Experience Workers — actor threads feeding the shared replay buffer.

• CollectionGate: pooled step quota; the learner opens a phase of N
  steps, workers claim steps one by one and report completion
• ParameterStore: versioned read-only parameter snapshots
• ExperienceWorker: one environment, one network copy, noisy-net
  exploration; crashes are logged and the worker restarts with a fresh
  environment (tenacity)
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np
import structlog
from tenacity import Retrying, stop_after_attempt

from drivetrainer.config import TRAIN_SEED_LIMIT
from drivetrainer.nn.module import StateDict
from drivetrainer.nn.qnet import QNetwork
from drivetrainer.nn.types import Mode
from drivetrainer.obs.builder import ObservationBuilder
from drivetrainer.obs.types import SceneObservation
from drivetrainer.rl.buffer import PrioritizedReplayBuffer
from drivetrainer.rl.types import TrainerConfig, Transition
from drivetrainer.sim.types import ScenarioConfig
from drivetrainer.sim.world import World, spawn_scenario

logger = structlog.get_logger(__name__)


class CollectionGate:
    """Two-phase barrier: workers collect exactly `quota` pooled steps, then wait for the learner."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._quota = 0
        self._claimed = 0
        self._completed = 0
        self._closed = False

    @property
    def closed(self) -> bool:
        return self._closed

    def open_phase(self, quota: int) -> None:
        with self._cond:
            self._quota = quota
            self._claimed = 0
            self._completed = 0
            self._cond.notify_all()

    def claim(self) -> bool:
        """Block until a step slot is free; False once the gate is closed."""
        with self._cond:
            while not self._closed and self._claimed >= self._quota:
                self._cond.wait()
            if self._closed:
                return False
            self._claimed += 1
            return True

    def complete(self) -> None:
        with self._cond:
            self._completed += 1
            self._cond.notify_all()

    def give_back(self) -> None:
        """Return a claimed slot whose step never finished."""
        with self._cond:
            self._claimed -= 1
            self._cond.notify_all()

    def wait_collected(self, timeout: float | None = None) -> bool:
        with self._cond:
            self._cond.wait_for(lambda: self._closed or self._completed >= self._quota, timeout=timeout)
            return self._completed >= self._quota

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


@dataclass(frozen=True)
class Snapshot:
    version: int
    state: StateDict


class ParameterStore:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._snapshot = Snapshot(version=0, state={})

    def publish(self, state: StateDict) -> int:
        with self._lock:
            self._snapshot = Snapshot(version=self._snapshot.version + 1, state=state)
            return self._snapshot.version

    def latest(self) -> Snapshot:
        with self._lock:
            return self._snapshot


class EpisodeStats:
    """Episode returns pooled across workers."""

    def __init__(self, window: int = 100) -> None:
        self._lock = threading.Lock()
        self._returns: deque[float] = deque(maxlen=window)
        self.episodes = 0

    def record(self, episode_return: float) -> None:
        with self._lock:
            self._returns.append(episode_return)
            self.episodes += 1

    def mean(self) -> float | None:
        with self._lock:
            return float(np.mean(self._returns)) if self._returns else None


class ExperienceWorker:
    def __init__(
        self,
        worker_id: int,
        config: TrainerConfig,
        buffer: PrioritizedReplayBuffer,
        gate: CollectionGate,
        store: ParameterStore,
        stats: EpisodeStats,
    ) -> None:
        self.worker_id = worker_id
        self.config = config
        self.buffer = buffer
        self.gate = gate
        self.store = store
        self.stats = stats
        self.builder = ObservationBuilder(config.observation)
        self.steps_counted = 0
        self.restarts = 0
        self.failed: BaseException | None = None
        self._rng = np.random.default_rng([config.seed, worker_id + 1])

    def run(self) -> None:
        """Thread entry point."""
        structlog.contextvars.bind_contextvars(worker_id=self.worker_id)
        logger.info("worker_started")
        try:
            for attempt in Retrying(stop=stop_after_attempt(self.config.worker_restarts + 1), reraise=True):
                with attempt:
                    number = attempt.retry_state.attempt_number
                    if number > 1:
                        self.restarts += 1
                        logger.warning("worker_restarted", attempt=number)
                    self._collect(number)
        except Exception as e:
            self.failed = e
            logger.error("worker_failed", detail=str(e), restarts=self.restarts)
        finally:
            logger.info("worker_stopped", steps=self.steps_counted)
            structlog.contextvars.unbind_contextvars("worker_id")

    def new_episode(self) -> World:
        """Random scenario and density per episode, seeded below the evaluation range."""
        scenario = self.config.scenarios[int(self._rng.integers(len(self.config.scenarios)))]
        density = self.config.densities[int(self._rng.integers(len(self.config.densities)))]
        seed = int(self._rng.integers(TRAIN_SEED_LIMIT))
        return spawn_scenario(ScenarioConfig(scenario_id=scenario, density=density, seed=seed))

    def _collect(self, attempt: int) -> None:
        net = QNetwork(self.config.network)
        net.reseed_noise(self.config.seed * 10_007 + self.worker_id * 101 + attempt)
        version = -1
        world: World | None = None
        obs: SceneObservation | None = None
        episode_return = 0.0

        while self.gate.claim():
            try:
                snapshot = self.store.latest()
                if snapshot.version != version:
                    net.load_state_dict(snapshot.state)
                    version = snapshot.version
                if world is None or obs is None or world.terminal:
                    world = self.new_episode()
                    obs = self.builder.build(world)
                    episode_return = 0.0

                action = int(np.argmax(net(obs, Mode.TRAIN).q.data[0]))
                outcome = world.step(action)
                next_obs = self.builder.build(world)
                terminal = outcome.events.collision or outcome.events.success
                self.buffer.push(Transition(obs.compact(), action, outcome.reward, next_obs.compact(), terminal))
            except Exception:
                self.gate.give_back()
                logger.exception("worker_crashed", attempt=attempt)
                raise
            self.gate.complete()
            self.steps_counted += 1
            episode_return += outcome.reward
            obs = next_obs
            if outcome.terminal:
                self.stats.record(episode_return)
                logger.debug("episode_done", events=outcome.events.names(), episode_return=episode_return)
