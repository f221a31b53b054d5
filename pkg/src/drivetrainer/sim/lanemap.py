"""
Lane Map — Lanes, routes, drivable area and route-pair conflicts.

• Lane: centerline polyline with width and successor lanes
• Route: connected lane sequence with one concatenated path
• LaneMap: the whole HD map, plus conflict intervals for every route pair
  that crosses or merges
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path as MplPath

from drivetrainer.sim.geometry import Polyline, rigid_points

LANE_WIDTH = 3.5
CONFLICT_RADIUS = 3.0
CONFLICT_MAX_LENGTH = 15.0
_SAMPLE_STEP = 0.5


@dataclass(frozen=True)
class Lane:
    lane_id: str
    centerline: Polyline
    width: float = LANE_WIDTH
    successors: tuple[str, ...] = ()


@dataclass(frozen=True)
class Route:
    """A start → goal lane sequence; `entry_s` / `exit_s` bound the junction part of `path`."""
    route_id: str
    lane_ids: tuple[str, ...]
    path: Polyline
    entry_s: float
    exit_s: float


@dataclass(frozen=True)
class ConflictInterval:
    """Arclength windows where two routes come within CONFLICT_RADIUS of each other."""
    a_in: float
    a_out: float
    b_in: float
    b_out: float


def build_route(route_id: str, lanes: dict[str, Lane], lane_ids: tuple[str, ...]) -> Route:
    parts = [lanes[k].centerline for k in lane_ids]
    path = Polyline.concatenate(parts)
    entry_s = parts[0].length
    exit_s = path.length - parts[-1].length
    return Route(route_id=route_id, lane_ids=lane_ids, path=path, entry_s=entry_s, exit_s=exit_s)


def _conflict(a: Route, b: Route) -> ConflictInterval | None:
    if a.lane_ids[0] == b.lane_ids[0]:
        return None
    s_a, pts_a = a.path.resample(_SAMPLE_STEP)
    s_b, pts_b = b.path.resample(_SAMPLE_STEP)
    d2 = ((pts_a[:, None, :] - pts_b[None, :, :]) ** 2).sum(axis=-1)
    close = d2 <= CONFLICT_RADIUS**2
    rows = np.flatnonzero(close.any(axis=1))
    if rows.size == 0:
        return None
    first = rows[0]
    # first contiguous run of close samples along a
    breaks = np.flatnonzero(np.diff(rows) > 1)
    last = rows[breaks[0]] if breaks.size else rows[-1]
    a_in = float(s_a[first])
    a_out = float(min(s_a[last], a_in + CONFLICT_MAX_LENGTH))
    window = (s_a >= a_in) & (s_a <= a_out)
    cols = np.flatnonzero(close[window].any(axis=0))
    b_in = float(s_b[cols[0]])
    b_out = float(min(s_b[cols[-1]], b_in + CONFLICT_MAX_LENGTH))
    return ConflictInterval(a_in=a_in, a_out=a_out, b_in=b_in, b_out=b_out)


@dataclass
class LaneMap:
    name: str
    lanes: dict[str, Lane]
    routes: dict[str, Route]
    drivable: list[np.ndarray]
    holes: list[np.ndarray] = field(default_factory=list)
    markings: list[Polyline] = field(default_factory=list)
    conflicts: dict[tuple[str, str], ConflictInterval] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._drivable_paths = [MplPath(p) for p in self.drivable]
        self._hole_paths = [MplPath(p) for p in self.holes]

    @classmethod
    def build(
        cls,
        name: str,
        lanes: dict[str, Lane],
        route_lanes: dict[str, tuple[str, ...]],
        drivable: list[np.ndarray],
        holes: list[np.ndarray] | None = None,
        markings: list[Polyline] | None = None,
    ) -> LaneMap:
        routes = {rid: build_route(rid, lanes, ids) for rid, ids in route_lanes.items()}
        conflicts: dict[tuple[str, str], ConflictInterval] = {}
        for a in routes.values():
            for b in routes.values():
                if a.route_id != b.route_id and (hit := _conflict(a, b)) is not None:
                    conflicts[(a.route_id, b.route_id)] = hit
        lanemap = cls(name, lanes, routes, drivable, holes or [], markings or [], conflicts)
        lanemap.validate()
        return lanemap

    def validate(self) -> None:
        for route in self.routes.values():
            for here, nxt in zip(route.lane_ids, route.lane_ids[1:]):
                if nxt not in self.lanes[here].successors:
                    raise ValueError(f"route {route.route_id}: {nxt} does not follow {here}")
            if np.any(np.diff(route.path.s) <= 0):
                raise ValueError(f"route {route.route_id}: arclength not strictly increasing")

    def drivable_contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        inside = np.zeros(len(pts), dtype=bool)
        for path in self._drivable_paths:
            inside |= path.contains_points(pts)
        for path in self._hole_paths:
            inside &= ~path.contains_points(pts)
        return inside

    def conflict(self, route_a: str, route_b: str) -> ConflictInterval | None:
        return self.conflicts.get((route_a, route_b))

    def transformed(self, dx: float, dy: float, dtheta: float) -> LaneMap:
        """Rigidly moved copy; arclengths and conflicts are unchanged."""
        lanes = {
            k: Lane(k, lane.centerline.transformed(dx, dy, dtheta), lane.width, lane.successors)
            for k, lane in self.lanes.items()
        }
        routes = {
            k: Route(k, r.lane_ids, r.path.transformed(dx, dy, dtheta), r.entry_s, r.exit_s)
            for k, r in self.routes.items()
        }
        return LaneMap(
            name=self.name,
            lanes=lanes,
            routes=routes,
            drivable=[rigid_points(p, dx, dy, dtheta) for p in self.drivable],
            holes=[rigid_points(p, dx, dy, dtheta) for p in self.holes],
            markings=[m.transformed(dx, dy, dtheta) for m in self.markings],
            conflicts=dict(self.conflicts),
        )
