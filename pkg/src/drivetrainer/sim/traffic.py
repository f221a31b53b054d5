"""
Background traffic — IDM car-following plus binary gap acceptance.

Each background vehicle draws a desired speed and an aggressiveness
p ∈ [0, 1] at spawn. Conservative vehicles (p < 0.5) treat a conflict
point as a stop line while crossing traffic is less than 4 s away from it;
aggressive vehicles only follow their leader.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

from drivetrainer.sim.geometry import wrap_angle
from drivetrainer.sim.lanemap import Route
from drivetrainer.sim.types import EGO_ID, VehicleState

if TYPE_CHECKING:
    from drivetrainer.sim.world import World

LEADER_HORIZON = 50.0
LEADER_LATERAL = 1.6
LEADER_HEADING = math.radians(60)
YIELD_TIME = 4.0
YIELD_HORIZON = 40.0
COMFORT_DECEL = 4.0


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 2.0
    b: float = 3.0
    s0: float = 2.0
    time_headway: float = 1.5
    delta: float = 4.0
    a_min: float = -8.0


IDM = IdmParams()


def idm_acceleration(
    v: float,
    v0: float,
    gap: float = math.inf,
    dv: float = 0.0,
    params: IdmParams = IDM,
) -> float:
    """a[1 − (v/v0)^δ − (s*/gap)²] with s* = s0 + vT + v·Δv / (2√(ab)); `dv` is v − v_lead."""
    free = 1.0 - (v / max(v0, 1e-6)) ** params.delta
    if math.isinf(gap):
        interaction = 0.0
    else:
        s_star = params.s0 + max(0.0, v * params.time_headway + v * dv / (2.0 * math.sqrt(params.a_max * params.b)))
        interaction = (s_star / max(gap, 0.1)) ** 2
    accel = params.a_max * (free - interaction)
    return max(params.a_min, min(params.a_max, accel))


@dataclass
class BackgroundVehicle:
    state: VehicleState
    route: Route
    desired_speed: float
    aggressiveness: float
    hold_steps: int = 0

    @property
    def conservative(self) -> bool:
        return self.aggressiveness < 0.5


def find_leader(vehicle: BackgroundVehicle, others: list[VehicleState]) -> tuple[float, float]:
    """(bumper gap, leader speed) of the nearest vehicle ahead on this vehicle's route."""
    me = vehicle.state
    path = vehicle.route.path
    best_gap, best_speed = math.inf, 0.0
    for other in others:
        if other.vehicle_id == me.vehicle_id:
            continue
        if math.hypot(other.x - me.x, other.y - me.y) > LEADER_HORIZON + other.l:
            continue
        s_other, lateral = path.project((other.x, other.y), me.s, me.s + LEADER_HORIZON)
        if s_other <= me.s or abs(lateral) > LEADER_LATERAL:
            continue
        if abs(wrap_angle(other.psi - float(path.headings(s_other)))) > LEADER_HEADING:
            continue
        gap = s_other - me.s - (me.l + other.l) / 2
        if gap < best_gap:
            best_gap, best_speed = gap, other.v
    return best_gap, best_speed


def yield_gap(vehicle: BackgroundVehicle, world: World) -> float | None:
    """Distance to the nearest conflict this vehicle should stop in front of, if any."""
    me = vehicle.state
    own_speed = max(me.v, 0.1)
    stop_gap: float | None = None
    for other in world.states():
        if other.vehicle_id == me.vehicle_id:
            continue
        zone = world.lanemap.conflict(me.route_id, other.route_id)
        if zone is None:
            continue
        distance = zone.a_in - me.s - me.l / 2
        if distance <= 0.0 or distance > YIELD_HORIZON:
            continue
        if other.s > zone.b_out:
            continue
        other_distance = zone.b_in - other.s - other.l / 2
        other_time = 0.0 if other_distance <= 0 else other_distance / max(other.v, 0.1)
        if other_time >= YIELD_TIME:
            continue
        if other.vehicle_id != EGO_ID and other_time >= distance / own_speed:
            continue
        if me.v**2 / (2.0 * COMFORT_DECEL) > distance:
            continue
        stop_gap = distance if stop_gap is None else min(stop_gap, distance)
    return stop_gap


def background_policy(vehicle: BackgroundVehicle, world: World) -> float:
    """Acceleration command for one background vehicle."""
    if vehicle.hold_steps > 0:
        return 0.0
    me = vehicle.state
    gap, lead_speed = find_leader(vehicle, list(world.states()))
    accel = idm_acceleration(me.v, vehicle.desired_speed, gap, me.v - lead_speed)
    if vehicle.conservative:
        stop = yield_gap(vehicle, world)
        if stop is not None:
            accel = min(accel, idm_acceleration(me.v, vehicle.desired_speed, stop, me.v))
    return accel
