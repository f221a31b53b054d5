import numpy as np
import pytest
from matplotlib import image as mpimg

from drivetrainer.nn.qnet import QNetwork, q_forward
from drivetrainer.nn.types import Mode
from drivetrainer.obs.builder import ObservationBuilder
from drivetrainer.obs.types import SceneObservation
from drivetrainer.service.introspection import attention_report, export_saliency_png, saliency
from drivetrainer.service.render import render_replay
from drivetrainer.sim.replay_log import ReplayHeader, ReplayLog, StepRecord
from drivetrainer.sim.types import ScenarioConfig, ScenarioId
from drivetrainer.sim.world import spawn_scenario


@pytest.fixture
def short_log():
    """Three logged steps of a merge scenario."""
    config = ScenarioConfig(scenario_id=ScenarioId.T_MERGE, seed=3)
    world = spawn_scenario(config)
    steps = [StepRecord.from_outcome(world.step(2)) for _ in range(3)]
    return ReplayLog(header=ReplayHeader(scenario=config, agent="constant:20"), steps=steps)


def smooth_obs(rng, obs):
    """Same scene with a continuous raster, so no ReLU sits exactly on its kink."""
    return SceneObservation(
        bev=rng.uniform(0.05, 0.95, obs.bev.shape), nodes=obs.nodes.astype(np.float64), mask=obs.mask
    )


# ── Saliency ─────────────────────────────────────────────────────

def test_saliency_shape_and_range(tiny_network_config, tiny_obs_config, straight_world):
    """Saliency is BEV-shaped, non-negative and max-normalized."""
    net = QNetwork(tiny_network_config)
    obs = ObservationBuilder(tiny_obs_config).build(straight_world(others=[(35.0, 4.0)]))
    result = saliency(net, obs)
    assert result.raw.shape == obs.bev.shape
    assert np.all(result.raw >= 0.0)
    assert result.normalized.max() == pytest.approx(1.0)
    assert result.image().shape == obs.bev.shape[1:]
    assert result.action == int(np.argmax(result.q_values))


def test_saliency_vanishes_with_zero_conv_weights(tiny_network_config, tiny_obs_config, straight_world):
    """If the encoder convolutions are zero the BEV has no influence."""
    net = QNetwork(tiny_network_config)
    state = net.state_dict()
    for name in state:
        if name.startswith("encoder.convs.") and name.endswith("kernels"):
            state[name] = np.zeros_like(state[name])
    net.load_state_dict(state)
    obs = ObservationBuilder(tiny_obs_config).build(straight_world())
    result = saliency(net, obs)
    assert np.all(result.raw == 0.0) and np.all(result.normalized == 0.0)


def test_saliency_matches_finite_differences(rng, tiny_network_config, tiny_obs_config, straight_world):
    """|dQ/dX| agrees with central differences at 20 random pixels."""
    net = QNetwork(tiny_network_config)
    obs = smooth_obs(rng, ObservationBuilder(tiny_obs_config).build(straight_world(others=[(30.0, 3.0)])))
    result = saliency(net, obs)
    h = 1e-5

    def q_at(bev):
        return float(net(SceneObservation(bev=bev, nodes=obs.nodes, mask=obs.mask), Mode.EVAL).q.data[0, result.action])

    c, rows, cols = (rng.integers(n, size=20) for n in obs.bev.shape)
    for k, i, j in zip(c, rows, cols):
        plus, minus = obs.bev.copy(), obs.bev.copy()
        plus[k, i, j] += h
        minus[k, i, j] -= h
        numeric = abs(q_at(plus) - q_at(minus)) / (2 * h)
        assert numeric == pytest.approx(result.raw[k, i, j], abs=1e-3), f"pixel {(k, i, j)}"


def test_saliency_png(tmp_path, tiny_network_config, tiny_obs_config, straight_world):
    """The exported image has the raster's height and width."""
    obs = ObservationBuilder(tiny_obs_config).build(straight_world(others=[(35.0, 4.0)]))
    path = export_saliency_png(saliency(QNetwork(tiny_network_config), obs), tmp_path / "sal" / "saliency.png")
    assert path.exists()
    assert mpimg.imread(path).shape[:2] == obs.bev.shape[1:]


# ── Attention ────────────────────────────────────────────────────

def test_single_node_attention(tiny_network_config, tiny_obs_config, straight_world):
    """An ego alone attends only to itself in every head."""
    obs = ObservationBuilder(tiny_obs_config).build(straight_world())
    report = attention_report(QNetwork(tiny_network_config), obs)
    assert len(report.heads) == 2 * tiny_network_config.heads
    for head in report.heads:
        assert head.node_ids == [0] and head.weights == [1.0]


def test_attention_report_matches_graph_layers(tiny_network_config, tiny_obs_config, straight_world):
    """Report weights are the ego rows of the forward pass attention, summing to 1."""
    net = QNetwork(tiny_network_config)
    obs = ObservationBuilder(tiny_obs_config).build(straight_world(others=[(30.0, 4.0), (45.0, 2.0)]))
    report = attention_report(net, obs)
    out = q_forward(net, obs, Mode.EVAL)
    valid = np.flatnonzero(obs.mask)

    assert report.q_values == [float(v) for v in out.q.data[0]]
    assert report.action == int(np.argmax(out.q.data[0]))
    for head in report.heads:
        assert head.node_ids == [0, 1, 2]
        assert head.weights == [float(w) for w in out.attention[head.layer - 1][0, head.head, 0, valid]]
        assert sum(head.weights) == pytest.approx(1.0, abs=1e-6)


# ── Replay rendering ─────────────────────────────────────────────

def test_render_empty_log():
    """A log without steps renders no frames."""
    config = ScenarioConfig(scenario_id=ScenarioId.T_MERGE)
    assert render_replay(ReplayLog(header=ReplayHeader(scenario=config, agent="x"), steps=[])) == []


def test_render_frames(tmp_path, short_log):
    """One RGBA frame per step, written as numbered PNGs, identical on re-render."""
    frames = render_replay(short_log, tmp_path / "frames")
    assert len(frames) == len(short_log.steps) == 3
    assert frames[0].dtype == np.uint8 and frames[0].shape[2] == 4
    assert sorted(p.name for p in (tmp_path / "frames").iterdir()) == [f"frame_{k:05d}.png" for k in range(3)]
    again = render_replay(short_log)
    assert all(np.array_equal(a, b) for a, b in zip(frames, again)), "Rendering must be deterministic."


def test_render_saliency_overlay(short_log):
    """An overlay callback changes the frame pixels."""
    plain = render_replay(short_log)[0]
    overlaid = render_replay(short_log, saliency=lambda record: np.ones((24, 20)))[0]
    assert plain.shape == overlaid.shape
    assert not np.array_equal(plain, overlaid)
