"""
Scenario Maps — Lane maps and ego routes for every scenario family.

• Junctions: arms at given compass angles, two lanes per direction,
  Bezier connectors through the box (T-junction, 4-way, 5-way)
• Roundabout: single-lane counter-clockwise ring of radius 18 m, 4 arms
• Straight road: one lane for the stopped-lead toy task
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from drivetrainer.sim.geometry import Polyline, bezier, circle_polygon, wrap_angle
from drivetrainer.sim.lanemap import LANE_WIDTH, Lane, LaneMap
from drivetrainer.sim.types import ScenarioId

ARM_LENGTH = 60.0
EGO_START_BEFORE_ENTRY = 25.0
EGO_GOAL_AFTER_EXIT = 20.0
ROUNDABOUT_RADIUS = 18.0
ROUNDABOUT_ARM_RADIUS = 26.0
ROUNDABOUT_PORT_DEG = 20.0
STRAIGHT_ROAD = (-20.0, 230.0)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: ScenarioId
    ego_route: str
    # explicit ego start/goal arclengths; None → derived from the route's junction bounds
    start_s: float | None = None
    goal_s: float | None = None


def _unit(theta: float) -> tuple[np.ndarray, np.ndarray]:
    u = np.array([math.cos(theta), math.sin(theta)])
    n = np.array([-math.sin(theta), math.cos(theta)])
    return u, n


def _connector(p0: np.ndarray, d_in: np.ndarray, p3: np.ndarray, d_out: np.ndarray, pull: float) -> Polyline:
    reach = pull * float(np.linalg.norm(p3 - p0))
    return Polyline(bezier(p0, p0 + d_in * reach, p3 - d_out * reach, p3))


def _arm_rectangle(u: np.ndarray, n: np.ndarray, r0: float, r1: float, half_width: float) -> np.ndarray:
    return np.array([u * r0 - n * half_width, u * r1 - n * half_width, u * r1 + n * half_width, u * r0 + n * half_width])


# ── Junctions ────────────────────────────────────────────────────

def build_junction(name: str, arms: dict[str, float]) -> LaneMap:
    """Unsignalized junction; `arms` maps arm name → outward compass angle in degrees."""
    w = LANE_WIDTH
    angles = {k: math.radians(v) for k, v in arms.items()}
    ordered = sorted(angles.values())
    gaps = [(b - a) for a, b in zip(ordered, ordered[1:] + [ordered[0] + 2 * math.pi])]
    r_box = max(8.0, (2 * w + 0.5) / math.tan(min(gaps) / 2))

    lanes: dict[str, Lane] = {}
    successors: dict[str, list[str]] = {}
    drivable = [circle_polygon((0.0, 0.0), r_box + w)]
    markings: list[Polyline] = []

    for arm, theta in angles.items():
        u, n = _unit(theta)
        for k in (0, 1):
            off = (k + 0.5) * w
            lanes[f"{arm}{k}in"] = Lane(f"{arm}{k}in", Polyline([u * ARM_LENGTH + n * off, u * r_box + n * off]))
            lanes[f"{arm}{k}out"] = Lane(f"{arm}{k}out", Polyline([u * r_box - n * off, u * ARM_LENGTH - n * off]))
            successors[f"{arm}{k}in"] = []
        drivable.append(_arm_rectangle(u, n, 0.0, ARM_LENGTH, 2 * w))
        for off in (-w, 0.0, w):
            markings.append(Polyline([u * r_box + n * off, u * ARM_LENGTH + n * off]))

    route_lanes: dict[str, tuple[str, ...]] = {}
    for a, theta_a in angles.items():
        for b, theta_b in angles.items():
            if a == b:
                continue
            turn = wrap_angle(theta_b - theta_a - math.pi)
            if abs(turn) < math.radians(30):
                pairs = [(0, 0), (1, 1)]
            elif turn < 0:
                pairs = [(1, 1)]
            else:
                pairs = [(0, 0)]
            u_a, _ = _unit(theta_a)
            u_b, _ = _unit(theta_b)
            pull = 1 / 3 if abs(turn) < math.radians(30) else 0.4
            for i, j in pairs:
                start = lanes[f"{a}{i}in"]
                end = lanes[f"{b}{j}out"]
                cid = f"{a}{i}>{b}{j}"
                lanes[cid] = Lane(
                    cid,
                    _connector(start.centerline.points[-1], -u_a, end.centerline.points[0], u_b, pull),
                    successors=(end.lane_id,),
                )
                successors[start.lane_id].append(cid)
                route_lanes[f"{a}{i}-{b}"] = (start.lane_id, cid, end.lane_id)

    for lane_id, nxt in successors.items():
        lane = lanes[lane_id]
        lanes[lane_id] = Lane(lane_id, lane.centerline, lane.width, tuple(nxt))
    return LaneMap.build(name, lanes, route_lanes, drivable, markings=markings)


# ── Roundabout ───────────────────────────────────────────────────

def build_roundabout(name: str = "roundabout") -> LaneMap:
    w = LANE_WIDTH
    radius = ROUNDABOUT_RADIUS
    arms = {"E": 0.0, "N": 90.0, "W": 180.0, "S": 270.0}
    port = math.radians(ROUNDABOUT_PORT_DEG)

    def ring_point(phi: float) -> np.ndarray:
        return np.array([radius * math.cos(phi), radius * math.sin(phi)])

    def tangent(phi: float) -> np.ndarray:
        return np.array([-math.sin(phi), math.cos(phi)])

    # ring nodes, counter-clockwise: (angle, kind, arm)
    nodes: list[tuple[float, str, str]] = []
    for arm, deg in arms.items():
        theta = math.radians(deg)
        nodes.append(((theta - port) % (2 * math.pi), "exit", arm))
        nodes.append(((theta + port) % (2 * math.pi), "entry", arm))
    nodes.sort()

    lanes: dict[str, Lane] = {}
    arc_ids: list[str] = []
    for k, (phi0, _, _) in enumerate(nodes):
        phi1 = nodes[(k + 1) % len(nodes)][0]
        if phi1 <= phi0:
            phi1 += 2 * math.pi
        count = max(3, int(math.degrees(phi1 - phi0) / 3) + 1)
        pts = np.array([ring_point(p) for p in np.linspace(phi0, phi1, count)])
        arc_ids.append(f"ring{k}")
        lanes[f"ring{k}"] = Lane(f"ring{k}", Polyline(pts))

    node_index = {(kind, arm): k for k, (_, kind, arm) in enumerate(nodes)}
    arc_successors: dict[str, list[str]] = {a: [arc_ids[(k + 1) % len(arc_ids)]] for k, a in enumerate(arc_ids)}

    drivable = [circle_polygon((0.0, 0.0), radius + 6.0)]
    holes = [circle_polygon((0.0, 0.0), radius - w / 2 - 0.5)]
    markings: list[Polyline] = []
    for arm, deg in arms.items():
        theta = math.radians(deg)
        u, n = _unit(theta)
        off = w / 2
        r_in = ROUNDABOUT_ARM_RADIUS
        entry_arc = arc_ids[node_index[("entry", arm)]]
        exit_k = node_index[("exit", arm)]
        phi_in = (theta + port) % (2 * math.pi)
        phi_out = (theta - port) % (2 * math.pi)

        inbound = Polyline([u * ARM_LENGTH + n * off, u * r_in + n * off])
        outbound = Polyline([u * r_in - n * off, u * ARM_LENGTH - n * off])
        entry = _connector(inbound.points[-1], -u, ring_point(phi_in), tangent(phi_in), 0.4)
        exit_ = _connector(ring_point(phi_out), tangent(phi_out), outbound.points[0], u, 0.4)

        lanes[f"{arm}in"] = Lane(f"{arm}in", inbound, successors=(f"{arm}entry",))
        lanes[f"{arm}entry"] = Lane(f"{arm}entry", entry, successors=(entry_arc,))
        lanes[f"{arm}exit"] = Lane(f"{arm}exit", exit_, successors=(f"{arm}out",))
        lanes[f"{arm}out"] = Lane(f"{arm}out", outbound)
        arc_successors[arc_ids[(exit_k - 1) % len(arc_ids)]].append(f"{arm}exit")

        drivable.append(_arm_rectangle(u, n, radius, ARM_LENGTH, w))
        markings.append(Polyline([u * r_in, u * ARM_LENGTH]))

    for arc_id in arc_ids:
        lane = lanes[arc_id]
        lanes[arc_id] = Lane(arc_id, lane.centerline, lane.width, tuple(arc_successors[arc_id]))

    route_lanes: dict[str, tuple[str, ...]] = {}
    for a in arms:
        for b in arms:
            if a == b:
                continue
            seq = [f"{a}in", f"{a}entry"]
            k = node_index[("entry", a)]
            target = node_index[("exit", b)]
            while True:
                seq.append(arc_ids[k])
                k = (k + 1) % len(arc_ids)
                if k == target:
                    break
            seq += [f"{b}exit", f"{b}out"]
            route_lanes[f"{a}-{b}"] = tuple(seq)
    return LaneMap.build(name, lanes, route_lanes, drivable, holes=holes, markings=markings)


# ── Straight road ────────────────────────────────────────────────

def build_straight_road(name: str = "straight") -> LaneMap:
    x0, x1 = STRAIGHT_ROAD
    w = LANE_WIDTH
    lane = Lane("main", Polyline([[x0, 0.0], [x1, 0.0]]))
    shoulder = w / 2 + 1.5
    drivable = [np.array([[x0, -shoulder], [x1, -shoulder], [x1, shoulder], [x0, shoulder]])]
    return LaneMap.build(name, {"main": lane}, {"main": ("main",)}, drivable)


# ── Registry ─────────────────────────────────────────────────────

T_ARMS = {"E": 0.0, "W": 180.0, "S": 270.0}
CROSS_ARMS = {"E": 0.0, "N": 90.0, "W": 180.0, "S": 270.0}
FIVE_ARMS = {"SE": 342.0, "NE": 54.0, "NW": 126.0, "W": 198.0, "S": 270.0}

SCENARIOS: dict[ScenarioId, ScenarioSpec] = {
    ScenarioId.T_MERGE: ScenarioSpec(ScenarioId.T_MERGE, "S1-E"),
    ScenarioId.T_LEFT: ScenarioSpec(ScenarioId.T_LEFT, "S0-W"),
    ScenarioId.INT_CROSS: ScenarioSpec(ScenarioId.INT_CROSS, "S0-N"),
    ScenarioId.INT_LEFT: ScenarioSpec(ScenarioId.INT_LEFT, "S0-W"),
    ScenarioId.FIVE_WAY: ScenarioSpec(ScenarioId.FIVE_WAY, "S0-W"),
    ScenarioId.ROUNDABOUT: ScenarioSpec(ScenarioId.ROUNDABOUT, "S-N"),
    ScenarioId.STOPPED_LEAD: ScenarioSpec(ScenarioId.STOPPED_LEAD, "main", start_s=20.0, goal_s=170.0),
}


@lru_cache(maxsize=None)
def build_lanemap(scenario_id: ScenarioId) -> LaneMap:
    """Lane map for a scenario; built once per process and shared read-only."""
    scenario_id = ScenarioId(scenario_id)
    if scenario_id in (ScenarioId.T_MERGE, ScenarioId.T_LEFT):
        return build_junction("t_junction", T_ARMS)
    if scenario_id in (ScenarioId.INT_CROSS, ScenarioId.INT_LEFT):
        return build_junction("intersection", CROSS_ARMS)
    if scenario_id == ScenarioId.FIVE_WAY:
        return build_junction("five_way", FIVE_ARMS)
    if scenario_id == ScenarioId.ROUNDABOUT:
        return build_roundabout()
    return build_straight_road()


def ego_bounds(scenario_id: ScenarioId, lanemap: LaneMap) -> tuple[str, float, float]:
    """(route id, start arclength, goal arclength) of the scripted ego route."""
    spec = SCENARIOS[ScenarioId(scenario_id)]
    route = lanemap.routes[spec.ego_route]
    start = spec.start_s if spec.start_s is not None else route.entry_s - EGO_START_BEFORE_ENTRY
    goal = spec.goal_s if spec.goal_s is not None else route.exit_s + EGO_GOAL_AFTER_EXIT
    return route.route_id, start, goal
