"""
BEV Rasterizer — binary bird's-eye view anchored at the ego vehicle.

Rows run forward (row 0 is the rearmost strip), column 0 is the leftmost.
Everything is transformed into the ego frame first and filled by testing
pixel centers against polygons, so the raster depends only on relative
geometry.

Channels: 0 drivable area with lane markings carved out, 1 ego route
strip, 2 vehicle footprints. The dense variant adds ego-frame vx and vy
of each footprint, normalized by 15 m/s.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from matplotlib.path import Path as MplPath

from drivetrainer.obs.types import VELOCITY_NORM, BEVGrid, ObservationConfig
from drivetrainer.sim.collision import footprint
from drivetrainer.sim.geometry import rotation, to_local
from drivetrainer.sim.lanemap import LANE_WIDTH
from drivetrainer.sim.types import VehicleState
from drivetrainer.sim.world import World

# keeps pixel centers off polygon edges that sit on exact grid lines
_JITTER = 1e-6
ROUTE_MARGIN = 10.0

PixelWindow = tuple[slice, slice, np.ndarray]


@lru_cache(maxsize=8)
def pixel_centers(height: int, width: int, resolution: float, behind: float) -> np.ndarray:
    """[H, W, 2] ego-frame coordinates of every pixel center (read-only)."""
    forward = -behind + (np.arange(height) + 0.5) * resolution + _JITTER * resolution
    lateral = width * resolution / 2 - (np.arange(width) + 0.5) * resolution + _JITTER * resolution
    grid = np.stack(np.meshgrid(forward, lateral, indexing="ij"), axis=-1)
    grid.setflags(write=False)
    return grid


def to_pixel(points: np.ndarray, config: ObservationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fractional (row, col) of ego-frame points."""
    pts = np.asarray(points, dtype=np.float64)
    rows = (pts[..., 0] + config.behind) / config.resolution
    cols = (config.half_width - pts[..., 1]) / config.resolution
    return rows, cols


def polygon_window(polygon: np.ndarray, config: ObservationConfig) -> PixelWindow | None:
    """Pixel window covering an ego-frame polygon plus the inside mask over it."""
    rows, cols = to_pixel(polygon, config)
    r0 = max(0, int(np.floor(rows.min())))
    r1 = min(config.height, int(np.ceil(rows.max())) + 1)
    c0 = max(0, int(np.floor(cols.min())))
    c1 = min(config.width, int(np.ceil(cols.max())) + 1)
    if r0 >= r1 or c0 >= c1:
        return None
    centers = pixel_centers(config.height, config.width, config.resolution, config.behind)[r0:r1, c0:c1]
    inside = MplPath(polygon).contains_points(centers.reshape(-1, 2)).reshape(r1 - r0, c1 - c0)
    return slice(r0, r1), slice(c0, c1), inside


def _fill(channel: np.ndarray, polygon: np.ndarray, config: ObservationConfig, value: float) -> PixelWindow | None:
    window = polygon_window(polygon, config)
    if window is not None:
        rows, cols, inside = window
        channel[rows, cols][inside] = value
    return window


def _draw_polyline(channel: np.ndarray, points: np.ndarray, config: ObservationConfig, value: float) -> None:
    rows, cols = to_pixel(points, config)
    r = np.floor(rows).astype(np.int64)
    c = np.floor(cols).astype(np.int64)
    valid = (r >= 0) & (r < config.height) & (c >= 0) & (c < config.width)
    channel[r[valid], c[valid]] = value


def ego_velocity(ego: VehicleState, other: VehicleState) -> np.ndarray:
    """Velocity of `other` expressed in the ego frame."""
    return rotation(-ego.psi) @ np.array([other.vx, other.vy])


def rasterize(world: World, config: ObservationConfig) -> BEVGrid:
    ego = world.ego
    origin, heading = (ego.x, ego.y), ego.psi
    data = np.zeros((config.channels, config.height, config.width), dtype=np.float32)

    lanemap = world.lanemap
    for polygon in lanemap.drivable:
        _fill(data[0], to_local(polygon, origin, heading), config, 1.0)
    for polygon in lanemap.holes:
        _fill(data[0], to_local(polygon, origin, heading), config, 0.0)
    for marking in lanemap.markings:
        _, points = marking.resample(config.resolution / 2)
        _draw_polyline(data[0], to_local(points, origin, heading), config, 0.0)

    reach = float(np.hypot(config.forward, config.half_width)) + ROUTE_MARGIN
    strip = world.ego_route.path.sub(ego.s - config.behind - ROUTE_MARGIN, ego.s + reach)
    outline = np.concatenate([strip.offset(LANE_WIDTH / 2), strip.offset(-LANE_WIDTH / 2)[::-1]])
    _fill(data[1], to_local(outline, origin, heading), config, 1.0)

    for state in world.states():
        center = to_local(np.array([state.x, state.y]), origin, heading)
        if state.vehicle_id != ego.vehicle_id and not config.contains(float(center[0]), float(center[1])):
            continue
        window = _fill(data[2], to_local(footprint(state), origin, heading), config, 1.0)
        if config.dense and window is not None:
            rows, cols, inside = window
            vx, vy = np.clip(ego_velocity(ego, state) / VELOCITY_NORM, -1.0, 1.0)
            data[3, rows, cols][inside] = vx
            data[4, rows, cols][inside] = vy

    r = min(config.height - 1, int(config.behind / config.resolution))
    c = min(config.width - 1, int(config.half_width / config.resolution))
    data[2, r, c] = 1.0
    return BEVGrid(data=data, resolution=config.resolution)
