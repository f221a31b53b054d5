"""Deployable policies and the by-name agent registry."""

from __future__ import annotations

from pathlib import Path

from drivetrainer.agents.base import Policy
from drivetrainer.agents.dqgat import DqgatAgent
from drivetrainer.agents.fsm_ttc import FsmTtcAgent, FsmTtcConfig
from drivetrainer.agents.reference import ConstantSpeedAgent, RandomAgent
from drivetrainer.errors import UnknownAgentError
from drivetrainer.obs.types import ObservationConfig

AGENT_NAMES = ("dqgat", "fsm_ttc", "random", "constant:<kmh>")


def make_agent(
    name: str,
    checkpoint: str | Path | None = None,
    seed: int = 0,
    observation: ObservationConfig | None = None,
    fsm: FsmTtcConfig | None = None,
) -> Policy:
    """Build a fresh agent instance from its CLI name."""
    if name == "dqgat":
        if checkpoint is None:
            raise UnknownAgentError("agent 'dqgat' needs --checkpoint")
        return DqgatAgent.from_checkpoint(checkpoint, observation)
    if name == "fsm_ttc":
        return FsmTtcAgent(fsm)
    if name == "random":
        return RandomAgent(seed)
    if name.startswith("constant:"):
        try:
            kmh = float(name.split(":", 1)[1])
        except ValueError:
            raise UnknownAgentError(f"bad constant speed in {name!r}") from None
        if kmh < 0:
            raise UnknownAgentError(f"constant speed must be non-negative, got {kmh}")
        return ConstantSpeedAgent(kmh)
    raise UnknownAgentError(f"unknown agent {name!r}; expected one of {list(AGENT_NAMES)}")


__all__ = ["AGENT_NAMES", "Policy", "make_agent"]
