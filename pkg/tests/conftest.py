from collections.abc import Callable, Sequence

import numpy as np
import pytest

from drivetrainer.nn.types import NetworkConfig, NetworkKind
from drivetrainer.obs.types import ObservationConfig
from drivetrainer.sim.scenarios import build_lanemap
from drivetrainer.sim.traffic import BackgroundVehicle
from drivetrainer.sim.types import EGO_ID, Density, ScenarioConfig, ScenarioId, VehicleState
from drivetrainer.sim.world import EGO_EXTENTS, World

WorldFactory = Callable[..., World]


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every randomized test is reproducible."""
    return np.random.default_rng(20240917)


@pytest.fixture
def tiny_network_config() -> NetworkConfig:
    """Small float64 network: fast forward passes and tight gradient checks."""
    return NetworkConfig(
        kind=NetworkKind.DQGAT,
        dtype="float64",
        encoder_channels=(2, 4),
        z_dim=6,
        e_dim=5,
        gat_dim=4,
        heads=2,
        stream_hidden=6,
        seed=3,
    )


@pytest.fixture
def tiny_obs_config() -> ObservationConfig:
    """24 x 20 raster at 2 m per pixel: 40 m ahead, 8 m behind, 20 m to each side."""
    return ObservationConfig(height=24, width=20, resolution=2.0, behind=8.0, n_max=5)


@pytest.fixture
def straight_world() -> WorldFactory:
    """
    Factory for a world on the single straight lane.

    The ego starts at the origin heading +x (arclength 20 on route "main");
    `others` is a list of (arclength, speed) for background vehicles on the
    same lane, following with plain IDM.
    """
    lanemap = build_lanemap(ScenarioId.STOPPED_LEAD)
    route = lanemap.routes["main"]

    def make(
        others: Sequence[tuple[float, float]] = (),
        ego_s: float = 20.0,
        ego_v: float = 0.0,
        seed: int = 0,
        max_steps: int = 600,
        jam_timeout_steps: int = 150,
        goal_s: float = 170.0,
    ) -> World:
        config = ScenarioConfig(
            scenario_id=ScenarioId.STOPPED_LEAD,
            density=Density.REGULAR,
            seed=seed,
            max_steps=max_steps,
            jam_timeout_steps=jam_timeout_steps,
        )
        x, y, psi = route.path.pose(ego_s)
        ego = VehicleState(EGO_ID, x, y, psi, ego_v, 0.0, EGO_EXTENTS[0], EGO_EXTENTS[1], "main", ego_s)
        background = []
        for k, (s, v) in enumerate(others, start=1):
            bx, by, bpsi = route.path.pose(s)
            state = VehicleState(k, bx, by, bpsi, v, 0.0, 1.9, 4.6, "main", s)
            background.append(BackgroundVehicle(state=state, route=route, desired_speed=max(v, 1.0), aggressiveness=1.0))
        return World(config, lanemap, ego, goal_s, background, np.random.default_rng(seed))

    return make
