"""
Traffic World — one deterministic episode of a scenario.

• spawn_scenario: builds the map, places the ego and background traffic
• World.step: advances every vehicle by Δt = 0.1 s and resolves events
• rigid_transform: moved copy of a world for invariance checks
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import replace

import numpy as np
import structlog

from drivetrainer.errors import SpawnError, TerminalWorldError
from drivetrainer.sim.collision import check_collision
from drivetrainer.sim.controllers import V_MAX, LongitudinalPID, bicycle_step, pure_pursuit_steering
from drivetrainer.sim.geometry import rigid_points, to_local, wrap_angle
from drivetrainer.sim.lanemap import LANE_WIDTH, LaneMap, Route
from drivetrainer.sim.scenarios import build_lanemap, ego_bounds
from drivetrainer.sim.traffic import BackgroundVehicle, background_policy
from drivetrainer.sim.types import (
    ACTION_SPEEDS_KMH,
    DT,
    EGO_ID,
    EventFlags,
    ScenarioConfig,
    ScenarioId,
    StepOutcome,
    VehicleState,
    kmh_to_ms,
    ms_to_kmh,
    reward,
)

logger = structlog.get_logger(__name__)

EGO_EXTENTS = (1.9, 4.6)
MAX_SPAWN_ATTEMPTS = 1000
SPAWN_MARGIN = (1.0, 4.0)
EGO_CLEARANCE = 10.0
RESPAWN_CLEARANCE = 12.0
JAM_DISPLACEMENT = 1.0
JAM_CORRIDOR = 10.0


class World:
    def __init__(
        self,
        config: ScenarioConfig,
        lanemap: LaneMap,
        ego: VehicleState,
        goal_s: float,
        background: list[BackgroundVehicle],
        rng: np.random.Generator,
    ) -> None:
        self.config = config
        self.lanemap = lanemap
        self.goal_s = goal_s
        self.background = background
        self.t = 0
        self.events = EventFlags()
        self._ego = ego
        self._rng = rng
        self._pid = LongitudinalPID(dt=DT)
        self._trail: deque[tuple[float, float]] = deque([(ego.x, ego.y)], maxlen=config.jam_timeout_steps + 1)
        self._next_id = max((v.state.vehicle_id for v in background), default=EGO_ID) + 1
        self._pending_respawns = 0
        self._respawn = config.scenario_id != ScenarioId.STOPPED_LEAD

    # ── Views ────────────────────────────────────────────

    @property
    def ego(self) -> VehicleState:
        return self._ego

    @property
    def ego_route(self) -> Route:
        return self.lanemap.routes[self._ego.route_id]

    @property
    def terminal(self) -> bool:
        return self.events.terminal

    def states(self) -> tuple[VehicleState, ...]:
        """Ego first, then background vehicles in spawn order."""
        return (self._ego, *(v.state for v in self.background))

    # ── Dynamics ─────────────────────────────────────────

    def step(self, action: int) -> StepOutcome:
        if self.terminal:
            raise TerminalWorldError(f"world already ended with {self.events.names()} at t={self.t}")
        if not 0 <= action < len(ACTION_SPEEDS_KMH):
            raise ValueError(f"action index {action} outside 0..{len(ACTION_SPEEDS_KMH) - 1}")

        commands = [background_policy(v, self) for v in self.background]
        self._ego = self._advance_ego(kmh_to_ms(ACTION_SPEEDS_KMH[action]))
        finished = self._advance_background(commands)
        if self._respawn:
            self._pending_respawns += finished
            self._respawn_background()
        self.t += 1

        ego = self._ego
        collision = any(check_collision(ego, v.state) for v in self.background)
        success = ego.s >= self.goal_s
        self._trail.append((ego.x, ego.y))
        jam = self._jammed()
        timeout = self.t >= self.config.max_steps
        self.events = EventFlags.resolve(collision, success, jam, timeout)
        r = reward(self.events, ms_to_kmh(ego.v))
        return StepOutcome(t=self.t, ego_action=action, states=self.states(), events=self.events, reward=r, world=self)

    def _advance_ego(self, target: float) -> VehicleState:
        ego = self._ego
        path = self.ego_route.path
        accel = self._pid.step(target, ego.v)
        steer = pure_pursuit_steering(ego.x, ego.y, ego.psi, ego.v, path, ego.s)
        x, y, psi, v, a = bicycle_step(ego.x, ego.y, ego.psi, ego.v, accel, steer, DT)
        s, _ = path.project((x, y), ego.s - 1.0, ego.s + v * DT + 3.0)
        return replace(ego, x=x, y=y, psi=psi, v=v, a=a, s=s)

    def _advance_background(self, commands: list[float]) -> int:
        survivors: list[BackgroundVehicle] = []
        for vehicle, accel in zip(self.background, commands):
            st = vehicle.state
            if vehicle.hold_steps > 0:
                vehicle.hold_steps -= 1
                vehicle.state = replace(st, v=0.0, a=0.0)
                survivors.append(vehicle)
                continue
            v = min(V_MAX, max(0.0, st.v + accel * DT))
            s = st.s + v * DT
            if s >= vehicle.route.path.length - 0.5:
                continue
            x, y, psi = vehicle.route.path.pose(s)
            vehicle.state = replace(st, x=x, y=y, psi=psi, v=v, a=(v - st.v) / DT, s=s)
            survivors.append(vehicle)
        finished = len(self.background) - len(survivors)
        self.background = survivors
        return finished

    def _respawn_background(self) -> None:
        route_ids = sorted(self.lanemap.routes)
        while self._pending_respawns > 0:
            route = self.lanemap.routes[route_ids[int(self._rng.integers(len(route_ids)))]]
            vehicle = _sample_vehicle(self.config, route, self._next_id, self._rng, s=None)
            if any(
                math.hypot(o.x - vehicle.state.x, o.y - vehicle.state.y) < RESPAWN_CLEARANCE
                for o in self.states()
            ):
                return
            self.background.append(vehicle)
            self._next_id += 1
            self._pending_respawns -= 1

    def _jammed(self) -> bool:
        if len(self._trail) <= self.config.jam_timeout_steps:
            return False
        (x0, y0), (x1, y1) = self._trail[0], self._trail[-1]
        if math.hypot(x1 - x0, y1 - y0) >= JAM_DISPLACEMENT:
            return False
        return not self.corridor_occupied()

    def corridor_occupied(self, length: float = JAM_CORRIDOR) -> bool:
        """True if a vehicle sits in the ego's forward corridor."""
        ego = self._ego
        for v in self.background:
            lx, ly = to_local(np.array([v.state.x, v.state.y]), (ego.x, ego.y), ego.psi)
            reach = length + (ego.l + v.state.l) / 2
            if 0.0 < lx < reach and abs(ly) < (LANE_WIDTH + v.state.w) / 2:
                return True
        return False

    # ── Copies ───────────────────────────────────────────

    def with_states(self, states: list[VehicleState]) -> World:
        """Copy whose vehicles are replaced by logged snapshots (ego first)."""
        clone = copy.copy(self)
        clone._ego = states[0]
        clone.background = [
            BackgroundVehicle(
                state=st,
                route=self.lanemap.routes[st.route_id],
                desired_speed=max(st.v, 1.0),
                aggressiveness=1.0,
            )
            for st in states[1:]
        ]
        return clone


def _sample_vehicle(
    config: ScenarioConfig,
    route: Route,
    vehicle_id: int,
    rng: np.random.Generator,
    s: float | None,
) -> BackgroundVehicle:
    w = float(rng.uniform(*config.vehicle_width))
    l = float(rng.uniform(*config.vehicle_length))  # noqa: E741
    desired = float(rng.uniform(*config.target_speed))
    aggressiveness = float(rng.uniform(0.0, 1.0))
    s_pos = l / 2 if s is None else s
    speed = desired * float(rng.uniform(0.6, 1.0))
    x, y, psi = route.path.pose(s_pos)
    state = VehicleState(vehicle_id, x, y, psi, speed, 0.0, w, l, route.route_id, s_pos)
    return BackgroundVehicle(state=state, route=route, desired_speed=desired, aggressiveness=aggressiveness)


def _inflated(state: VehicleState) -> VehicleState:
    return replace(state, w=state.w + SPAWN_MARGIN[0], l=state.l + SPAWN_MARGIN[1])


def spawn_scenario(config: ScenarioConfig) -> World:
    """Build the map, place the ego on its scripted route and spawn background traffic."""
    lanemap = build_lanemap(config.scenario_id)
    route_id, start_s, goal_s = ego_bounds(config.scenario_id, lanemap)
    ego_route = lanemap.routes[route_id]
    rng = np.random.default_rng(config.seed)

    x, y, psi = ego_route.path.pose(start_s)
    ego = VehicleState(EGO_ID, x, y, psi, 0.0, 0.0, EGO_EXTENTS[0], EGO_EXTENTS[1], route_id, start_s)

    lo, hi = config.vehicle_count
    count = int(rng.integers(lo, hi + 1))
    if config.scenario_id == ScenarioId.STOPPED_LEAD:
        background = _spawn_stopped_leads(config, ego_route, start_s, count, rng)
    else:
        background = _spawn_traffic(config, lanemap, ego, ego_route, count, rng)
    logger.debug("scenario_spawned", scenario=config.scenario_id.value, seed=config.seed, vehicles=len(background))
    return World(config, lanemap, ego, goal_s, background, rng)


def _spawn_stopped_leads(
    config: ScenarioConfig,
    route: Route,
    start_s: float,
    count: int,
    rng: np.random.Generator,
) -> list[BackgroundVehicle]:
    leads: list[BackgroundVehicle] = []
    s = start_s
    for k in range(count):
        s += float(rng.uniform(25.0, 40.0))
        vehicle = _sample_vehicle(config, route, k + 1, rng, s=s)
        vehicle.state = replace(vehicle.state, v=0.0)
        vehicle.hold_steps = int(rng.integers(20, 61))
        leads.append(vehicle)
    return leads


def _spawn_traffic(
    config: ScenarioConfig,
    lanemap: LaneMap,
    ego: VehicleState,
    ego_route: Route,
    count: int,
    rng: np.random.Generator,
) -> list[BackgroundVehicle]:
    route_ids = sorted(lanemap.routes)
    placed: list[BackgroundVehicle] = []
    attempts = 0
    while len(placed) < count:
        attempts += 1
        if attempts > MAX_SPAWN_ATTEMPTS:
            raise SpawnError(
                f"{config.scenario_id.value} seed={config.seed}: placed {len(placed)}/{count} vehicles "
                f"after {MAX_SPAWN_ATTEMPTS} attempts"
            )
        route = lanemap.routes[route_ids[int(rng.integers(len(route_ids)))]]
        s = float(rng.uniform(0.0, route.exit_s))
        candidate = _sample_vehicle(config, route, len(placed) + 1, rng, s=max(s, 3.0))
        st = candidate.state
        if route.lane_ids[0] == ego_route.lane_ids[0] and st.s < ego.s + 15.0:
            continue
        if math.hypot(st.x - ego.x, st.y - ego.y) < EGO_CLEARANCE:
            continue
        box = _inflated(st)
        if any(check_collision(box, _inflated(other.state)) for other in placed):
            continue
        placed.append(candidate)
    return placed


def rigid_transform(world: World, dx: float, dy: float, dtheta: float) -> World:
    """Copy of `world` rotated by `dtheta` about the origin, then translated by (dx, dy)."""

    def move(st: VehicleState) -> VehicleState:
        (x, y), = rigid_points(np.array([[st.x, st.y]]), dx, dy, dtheta)
        return replace(st, x=float(x), y=float(y), psi=wrap_angle(st.psi + dtheta))

    lanemap = world.lanemap.transformed(dx, dy, dtheta)
    clone = copy.copy(world)
    clone.lanemap = lanemap
    clone._ego = move(world.ego)
    clone.background = [
        BackgroundVehicle(
            state=move(v.state),
            route=lanemap.routes[v.route.route_id],
            desired_speed=v.desired_speed,
            aggressiveness=v.aggressiveness,
            hold_steps=v.hold_steps,
        )
        for v in world.background
    ]
    clone._trail = deque(
        (tuple(p) for p in rigid_points(np.array(world._trail), dx, dy, dtheta)),
        maxlen=world._trail.maxlen,
    )
    return clone
