"""Reference policies: uniform random actions and a fixed target speed."""

from __future__ import annotations

import numpy as np

from drivetrainer.agents.base import quantize_speed
from drivetrainer.obs.types import SceneObservation
from drivetrainer.sim.types import ACTION_SPEEDS_KMH
from drivetrainer.sim.world import World


class RandomAgent:
    name = "random"
    needs_observation = False

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def reset(self, world: World) -> None:
        self._rng = np.random.default_rng([self.seed, world.config.seed])

    def act(self, world: World, obs: SceneObservation | None = None) -> int:
        return int(self._rng.integers(len(ACTION_SPEEDS_KMH)))


class ConstantSpeedAgent:
    needs_observation = False

    def __init__(self, kmh: float) -> None:
        self.kmh = kmh
        self.action = quantize_speed(kmh)
        self.name = f"constant:{kmh:g}"

    def reset(self, world: World) -> None:
        pass

    def act(self, world: World, obs: SceneObservation | None = None) -> int:
        return self.action
