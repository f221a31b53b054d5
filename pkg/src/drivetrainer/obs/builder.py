"""Raster + nodes → SceneObservation, the single input format of every network kind."""

from __future__ import annotations

import numpy as np

from drivetrainer.obs.nodes import build_nodes
from drivetrainer.obs.raster import rasterize
from drivetrainer.obs.types import ObservationConfig, SceneObservation
from drivetrainer.sim.world import World


class ObservationBuilder:
    def __init__(self, config: ObservationConfig | None = None) -> None:
        self.config = config or ObservationConfig.desk()

    def build(self, world: World) -> SceneObservation:
        grid = rasterize(world, self.config)
        node_set = build_nodes(world, self.config)
        nodes, mask = node_set.padded(self.config.n_max, np.float32)
        return SceneObservation(bev=grid.data, nodes=nodes, mask=mask, vehicle_ids=node_set.vehicle_ids)

    __call__ = build
