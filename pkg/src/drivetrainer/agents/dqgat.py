"""The learned agent: greedy over the Q-network in eval mode (noise off)."""

from __future__ import annotations

from pathlib import Path

import structlog

from drivetrainer.agents.base import greedy_action
from drivetrainer.nn.checkpoint import file_hash, load_checkpoint
from drivetrainer.nn.qnet import QNetwork
from drivetrainer.nn.types import Mode, NetworkKind
from drivetrainer.obs.types import ObservationConfig, SceneObservation
from drivetrainer.sim.world import World

logger = structlog.get_logger(__name__)


def dqgat_act(net: QNetwork, obs: SceneObservation, mode: Mode = Mode.EVAL) -> int:
    return greedy_action(net(obs, mode).q.data[0])


class DqgatAgent:
    needs_observation = True

    def __init__(self, net: QNetwork, observation: ObservationConfig, name: str = "dqgat") -> None:
        self.net = net
        self.observation = observation
        self.name = name
        self.checkpoint_hash: str | None = None

    @classmethod
    def from_checkpoint(cls, path: str | Path, observation: ObservationConfig | None = None) -> DqgatAgent:
        params, meta = load_checkpoint(path)
        if observation is None:
            stored = meta.get("observation")
            observation = ObservationConfig.model_validate(stored) if stored else ObservationConfig.desk()
        dense = params.config.kind == NetworkKind.DENSE_BEV
        observation = observation.model_copy(update={"dense": dense})
        agent = cls(params.online, observation)
        agent.checkpoint_hash = file_hash(path)
        logger.debug("agent_loaded", path=str(path), step=meta.get("step"), kind=params.config.kind.value)
        return agent

    def reset(self, world: World) -> None:
        pass

    def act(self, world: World, obs: SceneObservation | None = None) -> int:
        if obs is None:
            raise ValueError("dqgat agent needs an observation")
        return dqgat_act(self.net, obs, Mode.EVAL)
