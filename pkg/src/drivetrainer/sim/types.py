"""
Simulation Types — The core data structures of the traffic world.

• Enums: ScenarioId, Density, Event
• Config: ScenarioConfig (validated, YAML-loadable)
• State: VehicleState snapshots, EventFlags, StepOutcome
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from pydantic import BaseModel, Field, model_validator

if TYPE_CHECKING:
    from drivetrainer.sim.world import World

DT = 0.1
ACTION_SPEEDS_KMH: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0)
EGO_ID = 0
COLLISION_REWARD = -50.0


def kmh_to_ms(kmh: float) -> float:
    return kmh / 3.6


def ms_to_kmh(ms: float) -> float:
    return ms * 3.6


# ── Core Enums ───────────────────────────────────────────────────

class ScenarioId(str, Enum):
    T_LEFT = "t_left"
    T_MERGE = "t_merge"
    INT_CROSS = "int_cross"
    INT_LEFT = "int_left"
    FIVE_WAY = "five_way"
    ROUNDABOUT = "roundabout"
    STOPPED_LEAD = "stopped_lead"


SEEN_SCENARIOS = (ScenarioId.T_LEFT, ScenarioId.T_MERGE, ScenarioId.INT_CROSS, ScenarioId.INT_LEFT)
NEW_SCENARIOS = (ScenarioId.FIVE_WAY, ScenarioId.ROUNDABOUT)


class Density(str, Enum):
    REGULAR = "regular"
    DENSE = "dense"


class Event(str, Enum):
    """Terminal events, listed in priority order."""
    COLLISION = "collision"
    SUCCESS = "success"
    JAM_TIMEOUT = "jam_timeout"
    STEP_TIMEOUT = "step_timeout"


# ── Configuration ────────────────────────────────────────────────

_COUNT_SCALE = {
    ScenarioId.T_LEFT: 0.75,
    ScenarioId.T_MERGE: 0.75,
    ScenarioId.INT_CROSS: 1.0,
    ScenarioId.INT_LEFT: 1.0,
    ScenarioId.FIVE_WAY: 1.25,
    ScenarioId.ROUNDABOUT: 1.0,
}
_BASE_COUNTS = {Density.REGULAR: (4, 8), Density.DENSE: (9, 16)}
_BASE_SPEEDS = {Density.REGULAR: (4.0, 9.0), Density.DENSE: (3.0, 8.0)}


def default_vehicle_count(scenario: ScenarioId, density: Density) -> tuple[int, int]:
    if scenario == ScenarioId.STOPPED_LEAD:
        return (1, 1) if density == Density.REGULAR else (2, 2)
    lo, hi = _BASE_COUNTS[density]
    factor = _COUNT_SCALE[scenario]
    scaled_lo = max(1, round(lo * factor))
    return scaled_lo, max(scaled_lo, round(hi * factor))


class ScenarioConfig(BaseModel):
    """One episode setup; unset ranges fall back to the density defaults."""

    scenario_id: ScenarioId
    density: Density = Density.REGULAR
    seed: int = Field(0, ge=0)
    vehicle_count: tuple[int, int] | None = None
    target_speed: tuple[float, float] | None = None
    vehicle_width: tuple[float, float] = (1.8, 2.1)
    vehicle_length: tuple[float, float] = (4.2, 5.2)
    max_steps: int = Field(600, gt=0)
    jam_timeout_steps: int = Field(150, gt=0)

    @model_validator(mode="after")
    def _fill_and_check_ranges(self) -> ScenarioConfig:
        if self.vehicle_count is None:
            self.vehicle_count = default_vehicle_count(self.scenario_id, self.density)
        if self.target_speed is None:
            self.target_speed = _BASE_SPEEDS[self.density]
        ranges: dict[str, tuple[float, float]] = {
            "vehicle_count": self.vehicle_count,
            "target_speed": self.target_speed,
            "vehicle_width": self.vehicle_width,
            "vehicle_length": self.vehicle_length,
        }
        for name, (lo, hi) in ranges.items():
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be an ordered non-negative range, got {(lo, hi)}")
        if self.vehicle_width[0] <= 0 or self.vehicle_length[0] <= 0:
            raise ValueError("vehicle extents must be positive")
        return self


# ── State ────────────────────────────────────────────────────────

@dataclass(frozen=True, slots=True)
class VehicleState:
    """Pose, motion and extents of one road agent in the world frame."""
    vehicle_id: int
    x: float
    y: float
    psi: float
    v: float
    a: float
    w: float
    l: float  # noqa: E741
    route_id: str
    s: float

    @property
    def vx(self) -> float:
        return self.v * math.cos(self.psi)

    @property
    def vy(self) -> float:
        return self.v * math.sin(self.psi)

    @property
    def ax(self) -> float:
        return self.a * math.cos(self.psi)

    @property
    def ay(self) -> float:
        return self.a * math.sin(self.psi)


@dataclass(frozen=True, slots=True)
class EventFlags:
    collision: bool = False
    success: bool = False
    jam_timeout: bool = False
    step_timeout: bool = False

    @property
    def terminal(self) -> bool:
        return self.collision or self.success or self.jam_timeout or self.step_timeout

    def names(self) -> list[str]:
        return [e.value for e in Event if getattr(self, e.value)]

    @classmethod
    def from_names(cls, names: list[str]) -> EventFlags:
        return cls(**{Event(n).value: True for n in names})

    @classmethod
    def resolve(cls, collision: bool, success: bool, jam: bool, timeout: bool) -> EventFlags:
        """Keep only the highest-priority event."""
        if collision:
            return cls(collision=True)
        if success:
            return cls(success=True)
        if jam:
            return cls(jam_timeout=True)
        if timeout:
            return cls(step_timeout=True)
        return cls()


@dataclass(frozen=True)
class StepOutcome:
    t: int
    ego_action: int
    states: tuple[VehicleState, ...]  # ego first
    events: EventFlags
    reward: float
    world: World | None = None

    @property
    def terminal(self) -> bool:
        return self.events.terminal


def reward(events: EventFlags, ego_speed_kmh: float) -> float:
    """−50 on collision, otherwise v/40 with v in km/h."""
    if events.collision:
        return COLLISION_REWARD
    return ego_speed_kmh / 40.0
