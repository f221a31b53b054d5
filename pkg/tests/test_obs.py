import numpy as np
import pytest

from drivetrainer.errors import DimensionError
from drivetrainer.obs.builder import ObservationBuilder
from drivetrainer.obs.export import export_bev_png, load_bev_png
from drivetrainer.obs.nodes import build_nodes
from drivetrainer.obs.raster import rasterize
from drivetrainer.obs.types import NodeFeatureSet, ObservationBatch, ObservationConfig
from drivetrainer.sim.geometry import Polyline, to_local
from drivetrainer.sim.lanemap import Lane, LaneMap
from drivetrainer.sim.traffic import BackgroundVehicle
from drivetrainer.sim.types import EGO_ID, ScenarioConfig, ScenarioId, VehicleState
from drivetrainer.sim.world import EGO_EXTENTS, World, rigid_transform, spawn_scenario


def open_world(others=(), ego_psi=0.0):
    """Ego at the origin on a 1 km square of drivable area; `others` are (x, y, psi, v) tuples."""
    lane = Lane("main", Polyline([[-500.0, 0.0], [500.0, 0.0]]))
    square = np.array([[-500.0, -500.0], [500.0, -500.0], [500.0, 500.0], [-500.0, 500.0]])
    lanemap = LaneMap.build("open", {"main": lane}, {"main": ("main",)}, [square])
    route = lanemap.routes["main"]
    ego = VehicleState(EGO_ID, 0.0, 0.0, ego_psi, 0.0, 0.0, EGO_EXTENTS[0], EGO_EXTENTS[1], "main", 500.0)
    background = [
        BackgroundVehicle(VehicleState(k, x, y, psi, v, 0.0, 1.9, 4.6, "main", 500.0 + x), route, max(v, 1.0), 1.0)
        for k, (x, y, psi, v) in enumerate(others, start=1)
    ]
    config = ScenarioConfig(scenario_id=ScenarioId.STOPPED_LEAD)
    return World(config, lanemap, ego, 1000.0, background, np.random.default_rng(0))


# ── Raster ───────────────────────────────────────────────────────

def test_full_scale_shape():
    """Full-scale region is 3 x 200 x 280."""
    world = spawn_scenario(ScenarioConfig(scenario_id=ScenarioId.T_LEFT, seed=1))
    grid = rasterize(world, ObservationConfig.full())
    assert grid.shape == (3, 200, 280), "200 rows forward by 280 columns across."
    assert grid.data.dtype == np.float32


def test_empty_open_world(tiny_obs_config):
    """All-drivable map: channel 0 is all ones, channel 2 holds only the ego block."""
    grid = rasterize(open_world(), tiny_obs_config)
    assert np.all(grid.data[0] == 1.0), "Open map must be fully drivable."
    rows, cols = np.nonzero(grid.data[2])
    assert grid.data[2, 4, 10] == 1.0, "Ego pixel block is always set."
    assert rows.min() >= 2 and rows.max() <= 6 and cols.min() >= 9 and cols.max() <= 11, "Only the ego is drawn."


def test_straight_road_channels(straight_world, tiny_obs_config):
    """The single lane fills the middle columns of the map and route channels."""
    grid = rasterize(straight_world(), tiny_obs_config)
    assert np.all(grid.data[0][:, 8:12] == 1.0) and np.all(grid.data[0][:, :8] == 0.0)
    assert np.all(grid.data[1][:, 9:11] == 1.0), "Route strip runs through every forward row."
    assert np.all(grid.data[1][:, :9] == 0.0) and np.all(grid.data[1][:, 11:] == 0.0)


def test_raster_is_pure(tiny_obs_config):
    """Rasterizing the same world twice is bit-identical."""
    world = spawn_scenario(ScenarioConfig(scenario_id=ScenarioId.INT_CROSS, seed=9))
    assert np.array_equal(rasterize(world, tiny_obs_config).data, rasterize(world, tiny_obs_config).data)


def test_translation_invariance():
    """Moving map, ego and traffic by (10, 10) m leaves the raster unchanged."""
    config = ObservationConfig(height=40, width=56, resolution=1.0, behind=6.0)
    world = spawn_scenario(ScenarioConfig(scenario_id=ScenarioId.T_MERGE, seed=2))
    moved = rigid_transform(world, 10.0, 10.0, 0.0)
    assert np.array_equal(rasterize(world, config).data, rasterize(moved, config).data)


def test_rotation_invariance_up_to_quantization():
    """A global rotation changes at most a thin boundary of pixels and no node features."""
    config = ObservationConfig(height=40, width=56, resolution=1.0, behind=6.0)
    world = spawn_scenario(ScenarioConfig(scenario_id=ScenarioId.INT_LEFT, seed=4))
    moved = rigid_transform(world, -3.0, 8.0, 1.1)
    a, b = rasterize(world, config).data, rasterize(moved, config).data
    assert np.mean(a != b) < 0.02, "Only edge pixels may flip under rotation."
    nodes_a = build_nodes(world, config)
    nodes_b = build_nodes(moved, config)
    assert nodes_a.vehicle_ids == nodes_b.vehicle_ids
    assert np.allclose(nodes_a.features, nodes_b.features, atol=1e-6)


def test_dense_velocity_channels():
    """Dense raster writes ego-frame velocity / 15 onto the footprint pixels."""
    config = ObservationConfig(height=40, width=40, resolution=0.5, behind=5.0, dense=True)
    grid = rasterize(open_world(others=[(10.0, 0.0, 0.0, 7.5)]), config)
    assert grid.channels == 5
    ahead = grid.data[3][28:36, 16:24]
    assert np.count_nonzero(ahead) > 0, "The moving car must cover some pixels."
    assert np.allclose(ahead[ahead != 0.0], 0.5), "vx = 7.5 / 15 on the other car."
    assert np.all(grid.data[4] == 0.0), "No lateral motion."


def test_export_png_keeps_row_order(tmp_path, tiny_obs_config):
    """Binary channels exported as PNG load back in raster row order."""
    grid = rasterize(open_world(others=[(12.0, 4.0, 0.4, 0.0)]), tiny_obs_config)
    paths = export_bev_png(grid, tmp_path)
    assert [p.name for p in paths] == ["bev_0_map.png", "bev_1_route.png", "bev_2_vehicles.png"]
    assert np.array_equal(load_bev_png(paths[2]), grid.data[2]), "Forward-up export must not flip rows."


# ── Nodes ────────────────────────────────────────────────────────

def test_lone_ego_node(straight_world, tiny_obs_config):
    """A stopped ego alone gives one node (0, 0, 0, 0, 0, 0, 0, 0, w, l)."""
    nodes = build_nodes(straight_world(), tiny_obs_config)
    assert nodes.count == 1 and nodes.vehicle_ids == (EGO_ID,)
    assert nodes.features[0].tolist() == [0, 0, 0, 0, 0, 0, 0, 0, 1.9, 4.6]


def test_vehicle_ahead_features(straight_world, tiny_obs_config):
    """Another car 10 m ahead with the same heading sits at x=10, y=0, d=10, psi=0."""
    nodes = build_nodes(straight_world(others=[(30.0, 0.0)]), tiny_obs_config)
    x, y, d, psi = nodes.features[1, :4]
    assert (x, y, d, psi) == pytest.approx((10.0, 0.0, 10.0, 0.0))


def test_region_filter_by_center(tiny_obs_config):
    """Vehicles whose centers fall outside the region are dropped."""
    world = open_world(others=[(39.0, 0.0, 0.0, 0.0), (41.0, 0.0, 0.0, 0.0), (-9.0, 0.0, 0.0, 0.0)])
    assert build_nodes(world, tiny_obs_config).vehicle_ids == (EGO_ID, 1)


def test_nearest_first_truncation(rng):
    """30 vehicles with N_max = 16 keep the 15 nearest, ordered like a brute-force sort."""
    config = ObservationConfig()
    others = [(rng.uniform(-14, 34), rng.uniform(-30, 30), rng.uniform(-3, 3), rng.uniform(0, 8)) for _ in range(30)]
    world = open_world(others=others, ego_psi=0.0)
    nodes = build_nodes(world, config)

    oracle = sorted((float(np.hypot(x, y)), k) for k, (x, y, _, _) in enumerate(others, start=1))
    assert nodes.vehicle_ids[1:] == tuple(k for _, k in oracle[:15]), "Nearest 15 in distance order."
    assert nodes.count == 16
    d = np.hypot(nodes.features[:, 0], nodes.features[:, 1])
    assert np.allclose(nodes.features[:, 2], d, atol=1e-6), "d must equal |(x, y)|."


def test_node_velocity_in_ego_frame():
    """A car driving the same way as a rotated ego has vx = v and vy = 0."""
    world = open_world(others=[(5.0, 5.0, np.pi / 4, 6.0)], ego_psi=np.pi / 4)
    row = build_nodes(world, ObservationConfig()).features[1]
    expected_x, expected_y = to_local(np.array([5.0, 5.0]), (0.0, 0.0), np.pi / 4)
    assert row[:2] == pytest.approx([expected_x, expected_y])
    assert row[3] == pytest.approx(0.0, abs=1e-12)
    assert row[4:6] == pytest.approx([6.0, 0.0], abs=1e-9)


def test_padding_overflow():
    """More nodes than the cap is a DimensionError."""
    node_set = NodeFeatureSet(features=np.zeros((3, 10)), vehicle_ids=(0, 1, 2))
    with pytest.raises(DimensionError):
        node_set.padded(2)


# ── Observation assembly ─────────────────────────────────────────

def test_builder_output(straight_world, tiny_obs_config):
    """Builder pads nodes to N_max and keeps the raster channels."""
    obs = ObservationBuilder(tiny_obs_config).build(straight_world(others=[(30.0, 0.0), (45.0, 2.0)]))
    assert obs.bev.shape == (3, 24, 20) and obs.nodes.shape == (5, 10)
    assert obs.mask.tolist() == [True, True, True, False, False]
    assert obs.vehicle_ids == (EGO_ID, 1, 2)
    assert np.all(obs.nodes[3:] == 0.0), "Padding rows are zero."


def test_compact_observation_is_smaller(straight_world, tiny_obs_config):
    """Bit-packed storage restores the exact observation in far fewer bytes."""
    obs = ObservationBuilder(tiny_obs_config).build(straight_world(others=[(30.0, 0.0)]))
    compact = obs.compact()
    restored = compact.expand()
    assert np.array_equal(restored.bev, obs.bev) and np.array_equal(restored.nodes, obs.nodes)
    assert compact.nbytes < obs.bev.nbytes / 8, "Binary channels cost one bit per pixel."


def test_batch_validation(straight_world, tiny_obs_config):
    """Batches must be non-empty and uniformly shaped."""
    obs = ObservationBuilder(tiny_obs_config).build(straight_world())
    other = ObservationBuilder(ObservationConfig(height=24, width=20, resolution=2.0, behind=8.0, n_max=3)).build(
        straight_world()
    )
    assert len(ObservationBatch.from_observations([obs, obs.compact()])) == 2
    with pytest.raises(DimensionError):
        ObservationBatch.from_observations([])
    with pytest.raises(DimensionError):
        ObservationBatch.from_observations([obs, other])
