"""
FSM-TTC — rule-based crossing baseline.

Four states:
  APPROACH  cruise while no conflict zone is within the decision distance
  WAIT      hold 0 km/h while a conflicting vehicle reaches the zone sooner
            than the TTC threshold
  CREEP     advance slowly while the nearest threat is marginal
  GO        cruise; once the ego is inside a zone it never stops there

A lead-vehicle guard caps the command by gap and TTC to whatever is ahead
in the ego's corridor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, Field, model_validator

from drivetrainer.agents.base import quantize_speed
from drivetrainer.obs.types import SceneObservation
from drivetrainer.sim.geometry import to_local
from drivetrainer.sim.lanemap import LaneMap
from drivetrainer.sim.scenarios import build_lanemap, ego_bounds
from drivetrainer.sim.types import ScenarioId, VehicleState
from drivetrainer.sim.world import World

CORRIDOR_HALF_WIDTH = 2.0
LEAD_HORIZON = 40.0


class FsmState(str, Enum):
    APPROACH = "approach"
    WAIT = "wait"
    CREEP = "creep"
    GO = "go"


class FsmTtcConfig(BaseModel):
    ttc_threshold: float = Field(3.0, gt=0)
    creep_kmh: float = Field(10.0, ge=0)
    cruise_kmh: float = Field(30.0, gt=0)
    approach_distance: float = Field(12.0, gt=0)
    creep_margin: float = Field(2.0, ge=0)
    lead_min_gap: float = Field(4.0, ge=0)

    @model_validator(mode="after")
    def _creep_below_cruise(self) -> FsmTtcConfig:
        if self.creep_kmh >= self.cruise_kmh:
            raise ValueError("creep_kmh must be below cruise_kmh")
        return self


def ttc(ego: VehicleState, other: VehicleState) -> float:
    """Bumper gap over closing speed along the line of centers; +inf when not closing."""
    dx, dy = other.x - ego.x, other.y - ego.y
    distance = math.hypot(dx, dy)
    if distance == 0.0:
        return 0.0
    closing = -((other.vx - ego.vx) * dx + (other.vy - ego.vy) * dy) / distance
    if closing <= 0.0:
        return math.inf
    gap = max(0.0, distance - (ego.l + other.l) / 2)
    return gap / closing


@dataclass(frozen=True)
class ConflictZone:
    """Where the ego route meets one crossing route, in both routes' arclengths."""
    route_id: str
    ego_in: float
    ego_out: float
    other_in: float
    other_out: float


def zones_for_route(lanemap: LaneMap, ego_route_id: str) -> dict[str, ConflictZone]:
    zones: dict[str, ConflictZone] = {}
    for other_id in sorted(lanemap.routes):
        hit = lanemap.conflict(ego_route_id, other_id)
        if hit is not None:
            zones[other_id] = ConflictZone(other_id, hit.a_in, hit.a_out, hit.b_in, hit.b_out)
    return zones


@lru_cache(maxsize=None)
def conflict_zones(scenario_id: ScenarioId) -> dict[str, ConflictZone]:
    lanemap = build_lanemap(scenario_id)
    route_id, _, _ = ego_bounds(scenario_id, lanemap)
    return zones_for_route(lanemap, route_id)


def time_to_zone(other: VehicleState, zone: ConflictZone) -> float:
    """Seconds until `other` reaches the zone; 0 inside it, +inf once it has left."""
    if other.s - other.l / 2 > zone.other_out:
        return math.inf
    distance = zone.other_in - other.s - other.l / 2
    if distance <= 0.0:
        return 0.0
    return distance / other.v if other.v > 0.0 else math.inf


def lead_cap_kmh(config: FsmTtcConfig, world: World) -> float:
    """Speed ceiling from the nearest vehicle ahead in the ego corridor."""
    ego = world.ego
    cap = math.inf
    for other in world.states()[1:]:
        lx, ly = to_local(np.array([other.x, other.y]), (ego.x, ego.y), ego.psi)
        if not (0.0 < lx < LEAD_HORIZON and abs(ly) < CORRIDOR_HALF_WIDTH):
            continue
        gap = lx - (ego.l + other.l) / 2
        if gap < config.lead_min_gap:
            cap = 0.0
        elif ttc(ego, other) < config.ttc_threshold:
            cap = min(cap, config.creep_kmh)
    return cap


def fsm_step(config: FsmTtcConfig, world: World, zones: dict[str, ConflictZone], state: FsmState) -> FsmState:
    """Next FSM state; defined for every (world, state) pair."""
    ego = world.ego
    front = ego.s + ego.l / 2
    rear = ego.s - ego.l / 2
    open_zones = [z for z in zones.values() if rear <= z.ego_out]
    inside = any(front >= z.ego_in for z in open_zones)
    near = any(0.0 <= z.ego_in - front <= config.approach_distance for z in open_zones)

    threat = math.inf
    for other in world.states()[1:]:
        zone = zones.get(other.route_id)
        if zone is None or rear > zone.ego_out or front >= zone.ego_in:
            continue
        if zone.ego_in - front <= config.approach_distance:
            threat = min(threat, time_to_zone(other, zone))

    if inside and state in (FsmState.GO, FsmState.CREEP):
        return FsmState.GO
    if threat < config.ttc_threshold:
        return FsmState.WAIT
    if threat < config.ttc_threshold + config.creep_margin:
        return FsmState.CREEP
    if near or inside:
        return FsmState.GO
    return FsmState.APPROACH


def fsm_ttc_act(
    config: FsmTtcConfig,
    world: World,
    state: FsmState = FsmState.APPROACH,
    zones: dict[str, ConflictZone] | None = None,
) -> tuple[int, FsmState]:
    """(action index, next state) for one control step."""
    if zones is None:
        zones = zones_for_route(world.lanemap, world.ego.route_id)
    state = fsm_step(config, world, zones, state)
    target = {
        FsmState.APPROACH: config.cruise_kmh,
        FsmState.WAIT: 0.0,
        FsmState.CREEP: config.creep_kmh,
        FsmState.GO: config.cruise_kmh,
    }[state]
    return quantize_speed(min(target, lead_cap_kmh(config, world))), state


class FsmTtcAgent:
    name = "fsm_ttc"
    needs_observation = False

    def __init__(self, config: FsmTtcConfig | None = None) -> None:
        self.config = config or FsmTtcConfig()
        self.state = FsmState.APPROACH
        self._zones: dict[str, ConflictZone] = {}

    def reset(self, world: World) -> None:
        self.state = FsmState.APPROACH
        self._zones = conflict_zones(world.config.scenario_id)

    def act(self, world: World, obs: SceneObservation | None = None) -> int:
        action, self.state = fsm_ttc_act(self.config, world, self.state, self._zones)
        return action
