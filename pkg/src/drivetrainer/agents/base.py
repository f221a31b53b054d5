"""
Policy contract shared by every agent.

An agent is created per evaluation episode, reset on the spawned world,
then asked for one action index per step. Agents that read the network
observation set `needs_observation` so the harness builds it only for them.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from drivetrainer.obs.types import SceneObservation
from drivetrainer.sim.types import ACTION_SPEEDS_KMH
from drivetrainer.sim.world import World


@runtime_checkable
class Policy(Protocol):
    name: str
    needs_observation: bool

    def reset(self, world: World) -> None: ...

    def act(self, world: World, obs: SceneObservation | None = None) -> int: ...


def quantize_speed(kmh: float) -> int:
    """Index of the nearest action speed; ties go to the slower one."""
    distances = np.abs(np.asarray(ACTION_SPEEDS_KMH) - kmh)
    return int(np.argmin(distances))


def greedy_action(q_values: np.ndarray) -> int:
    """argmax with the lowest index winning ties."""
    return int(np.argmax(np.asarray(q_values)))
