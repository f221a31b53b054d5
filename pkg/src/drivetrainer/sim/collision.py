"""Oriented-rectangle overlap by the separating-axis test."""

from __future__ import annotations

import math

import numpy as np

from drivetrainer.sim.geometry import rectangle_corners
from drivetrainer.sim.types import VehicleState


def footprint(state: VehicleState) -> np.ndarray:
    return rectangle_corners(state.x, state.y, state.psi, state.w, state.l)


def polygons_overlap(p: np.ndarray, q: np.ndarray) -> bool:
    """Convex polygons overlap unless some edge normal separates their projections."""
    for poly in (p, q):
        edges = np.roll(poly, -1, axis=0) - poly
        for ex, ey in edges:
            axis = np.array([-ey, ex])
            proj_p = p @ axis
            proj_q = q @ axis
            if proj_p.max() < proj_q.min() or proj_q.max() < proj_p.min():
                return False
    return True


def check_collision(a: VehicleState, b: VehicleState) -> bool:
    reach = (math.hypot(a.w, a.l) + math.hypot(b.w, b.l)) / 2
    if math.hypot(a.x - b.x, a.y - b.y) > reach:
        return False
    return polygons_overlap(footprint(a), footprint(b))
