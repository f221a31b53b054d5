"""Ego-frame node features {x, y, d, ψ, vx, vy, ax, ay, w, l} for every vehicle in the region."""

from __future__ import annotations

import math

import numpy as np

from drivetrainer.nn.types import NODE_FEATURES
from drivetrainer.obs.types import NodeFeatureSet, ObservationConfig
from drivetrainer.sim.geometry import rotation, to_local, wrap_angle
from drivetrainer.sim.types import VehicleState
from drivetrainer.sim.world import World


def node_features(ego: VehicleState, other: VehicleState) -> np.ndarray:
    into_ego = rotation(-ego.psi)
    x, y = to_local(np.array([other.x, other.y]), (ego.x, ego.y), ego.psi)
    vx, vy = into_ego @ np.array([other.vx, other.vy])
    ax, ay = into_ego @ np.array([other.ax, other.ay])
    psi = wrap_angle(other.psi - ego.psi)
    return np.array([x, y, math.hypot(x, y), psi, vx, vy, ax, ay, other.w, other.l], dtype=np.float64)


def ego_features(ego: VehicleState) -> np.ndarray:
    features = np.zeros(NODE_FEATURES, dtype=np.float64)
    features[4] = ego.v
    features[6] = ego.a
    features[8:] = (ego.w, ego.l)
    return features


def build_nodes(world: World, config: ObservationConfig, n_max: int | None = None) -> NodeFeatureSet:
    """Ego first, then region vehicles nearest-first (ties by id), truncated at `n_max` nodes."""
    cap = config.n_max if n_max is None else n_max
    ego = world.ego
    others: list[tuple[float, int, np.ndarray]] = []
    for state in world.states()[1:]:
        row = node_features(ego, state)
        if config.contains(row[0], row[1]):
            others.append((row[2], state.vehicle_id, row))
    others.sort(key=lambda item: (item[0], item[1]))
    kept = others[: max(0, cap - 1)]

    features = np.empty((1 + len(kept), NODE_FEATURES), dtype=np.float64)
    features[0] = ego_features(ego)
    for k, (_, _, row) in enumerate(kept, start=1):
        features[k] = row
    return NodeFeatureSet(features=features, vehicle_ids=(ego.vehicle_id, *(vid for _, vid, _ in kept)))
