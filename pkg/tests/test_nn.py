import numpy as np
import pytest

from drivetrainer.autodiff import Tape, Tensor, backward, ops
from drivetrainer.autodiff.gradcheck import gradient_check
from drivetrainer.errors import CheckpointError, DimensionError, InvalidMaskError, UnknownNetworkKindError
from drivetrainer.nn.checkpoint import load_checkpoint, read_checkpoint_meta, save_checkpoint
from drivetrainer.nn.layers import (
    GATLayer,
    NoisyLinear,
    dueling_combine,
    fixed_aggregation_weights,
    gat_layer,
    noisy_linear_forward,
)
from drivetrainer.nn.optim import Adam
from drivetrainer.nn.qnet import QNetwork, QNetworkParams, adjacency_from_mask, build_ablation_network, q_forward
from drivetrainer.nn.types import MergeMode, Mode, NetworkConfig, NetworkKind
from drivetrainer.obs.types import SceneObservation


def random_obs(rng, channels=3, count=4, n_max=5, height=24, width=20):
    bev = (rng.random((channels, height, width)) > 0.7).astype(np.float32)
    nodes = np.zeros((n_max, 10), dtype=np.float32)
    nodes[:count] = rng.normal(scale=[8, 8, 10, 1, 4, 4, 1, 1, 0.2, 0.5], size=(count, 10))
    mask = np.zeros(n_max, dtype=bool)
    mask[:count] = True
    return SceneObservation(bev=bev, nodes=nodes, mask=mask, vehicle_ids=tuple(range(count)))


def scalar_noisy_layer(w, b, w_noisy, b_noisy, seed=0):
    layer = NoisyLinear(1, 1, np.random.default_rng(seed), dtype=np.float64)
    layer.W.data = np.array([[w]], dtype=np.float64)
    layer.b.data = np.array([b], dtype=np.float64)
    layer.W_noisy.data = np.array([[w_noisy]], dtype=np.float64)
    layer.b_noisy.data = np.array([b_noisy], dtype=np.float64)
    return layer


# ── Noisy linear ─────────────────────────────────────────────────

def test_noisy_eval_is_deterministic_stream(rng):
    """Eval mode with W = I and b = 0 returns x unchanged."""
    layer = NoisyLinear(3, 3, rng, dtype=np.float64)
    layer.W.data = np.eye(3)
    layer.b.data = np.zeros(3)
    x = Tensor(rng.normal(size=(2, 3)), dtype=np.float64)
    y = noisy_linear_forward(layer, x, Mode.EVAL)
    assert np.allclose(y.data, x.data), "Eval output must be b + Wx exactly."


def test_noisy_train_with_zero_sigma_equals_eval(rng):
    """With zero noisy weights the train output equals the eval output."""
    layer = NoisyLinear(4, 2, rng, dtype=np.float64)
    layer.W_noisy.data = np.zeros((2, 4))
    layer.b_noisy.data = np.zeros(2)
    x = Tensor(rng.normal(size=(3, 4)), dtype=np.float64)
    assert np.allclose(layer(x, Mode.TRAIN).data, layer(x, Mode.EVAL).data), "Zero noise must not change y."


def test_noisy_train_resamples_each_call(rng):
    """Train-mode output changes across calls for a fixed input."""
    layer = NoisyLinear(4, 2, rng, dtype=np.float64)
    x = Tensor(np.ones((1, 4)), dtype=np.float64)
    first, second = layer(x, Mode.TRAIN).data, layer(x, Mode.TRAIN).data
    assert not np.allclose(first, second), "Fresh noise must be drawn on every train call."


def test_factorized_noise_is_zero_mean():
    """1000 samples of y = (W_noisy * eps) x with W = b = 0 average to zero within 3 standard errors."""
    layer = scalar_noisy_layer(0.0, 0.0, 1.0, 0.0, seed=11)
    x = Tensor([[1.0]], dtype=np.float64)
    samples = np.array([layer(x, Mode.TRAIN).item() for _ in range(1000)])
    stderr = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean()) < 3 * stderr, "Factorized Gaussian noise must be zero-mean."


def test_noisy_linear_dimension_mismatch(rng):
    """Input width must match the layer."""
    layer = NoisyLinear(3, 2, rng)
    with pytest.raises(DimensionError):
        layer(Tensor(np.ones((1, 4))), Mode.EVAL)


# ── Graph attention ──────────────────────────────────────────────

def test_single_node_attends_to_itself(rng):
    """One node with a self-loop gets attention weight 1 whatever the parameters."""
    layer = GATLayer(3, 4, 2, MergeMode.CONCAT, rng, dtype=np.float64)
    _, alpha = gat_layer(layer, Tensor(rng.normal(size=(1, 3)), dtype=np.float64), np.ones((1, 1), bool))
    assert np.array_equal(alpha, np.ones((2, 1, 1))), "Single-element softmax is 1."


def test_identical_nodes_share_attention(rng):
    """Two identical, fully connected nodes attend 1/2 to each other."""
    layer = GATLayer(3, 4, 2, MergeMode.AVERAGE, rng, dtype=np.float64)
    row = rng.normal(size=3)
    _, alpha = gat_layer(layer, Tensor(np.stack([row, row]), dtype=np.float64), np.ones((2, 2), bool))
    assert np.allclose(alpha, 0.5), "Symmetric inputs give uniform attention."


def test_gat_matches_direct_formula(rng):
    """Single head on three nodes: output equals a loop over the attention formula."""
    layer = GATLayer(4, 3, 1, MergeMode.CONCAT, rng, dtype=np.float64)
    h = rng.normal(size=(3, 4))
    adj = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=bool)
    out, alpha = gat_layer(layer, Tensor(h, dtype=np.float64), adj)

    w, a = layer.W.data[0], layer.a.data[0]
    wh = h @ w.T
    expected = np.zeros((3, 3))
    for k in range(3):
        scores = np.array([max(0.0, a[:3] @ wh[k] + a[3:] @ wh[j]) for j in range(3)])
        weights = np.where(adj[k], np.exp(scores - scores[adj[k]].max()), 0.0)
        weights /= weights.sum()
        assert np.allclose(alpha[0, k], weights, atol=1e-10), "Attention coefficients differ."
        expected[k] = np.maximum(0.0, weights @ wh)
    assert np.allclose(out.data, expected, atol=1e-5), "Layer output differs from the direct formula."


def test_merge_modes_set_output_width(rng):
    """Concat yields S * F features, average yields F."""
    h = Tensor(rng.normal(size=(3, 5)), dtype=np.float64)
    adj = np.ones((3, 3), bool)
    concat = GATLayer(5, 4, 3, MergeMode.CONCAT, rng, dtype=np.float64)
    average = GATLayer(5, 4, 3, MergeMode.AVERAGE, rng, dtype=np.float64)
    assert gat_layer(concat, h, adj)[0].shape == (3, 12), "Concat output is heads * out_dim wide."
    assert gat_layer(average, h, adj)[0].shape == (3, 4), "Average output is out_dim wide."
    assert concat.output_dim == 12 and average.output_dim == 4


def test_gat_row_without_neighbours_raises(rng):
    """A node with an empty neighbourhood is rejected."""
    layer = GATLayer(2, 2, 1, MergeMode.CONCAT, rng)
    with pytest.raises(InvalidMaskError):
        gat_layer(layer, Tensor(np.ones((2, 2))), np.array([[True, True], [False, False]]))


def test_gat_gradients(rng):
    """Both graph-attention parameters pass the gradient check on a batched input."""
    layer = GATLayer(3, 2, 2, MergeMode.CONCAT, rng, dtype=np.float64)
    h = rng.normal(size=(2, 3, 3))
    adj = adjacency_from_mask(np.array([[1, 1, 0], [1, 1, 1]], dtype=bool))
    weights = rng.normal(size=(2, 3, 4))

    def fn(w, a):
        layer.W, layer.a = w, a
        out, _ = gat_layer(layer, Tensor(h, dtype=np.float64), adj)
        return ops.sum(ops.mul(out, Tensor(weights, dtype=np.float64)))

    result = gradient_check(fn, [layer.W.data.copy(), layer.a.data.copy()], h=1e-6)
    assert result.max_error < 1e-4, f"GAT gradients off by {result.max_error}."


# ── Fixed-weight aggregation ─────────────────────────────────────

def test_uniform_weights_are_one_over_neighbourhood():
    """Two neighbours plus self: every weight is 1/3."""
    weights = fixed_aggregation_weights(np.ones((3, 3), bool), np.zeros((3, 2)), "uniform")
    assert np.allclose(weights, 1.0 / 3.0), "Uniform weights must be 1/|N_k|."


def test_distance_weights_for_coincident_nodes():
    """A neighbour at distance 0 weighs the same as self."""
    weights = fixed_aggregation_weights(np.ones((2, 2), bool), np.zeros((2, 2)), "distance")
    assert np.allclose(weights, 0.5), "Equal distances give equal weights."


def test_distance_weights_follow_inverse_distance():
    """Weights are proportional to 1 / (1 + d) and rows sum to one."""
    positions = np.array([[0.0, 0.0], [3.0, 0.0]])
    weights = fixed_aggregation_weights(np.ones((2, 2), bool), positions, "distance")
    assert np.allclose(weights[0], [0.8, 0.2]), "1 : 1/4 normalizes to 0.8 : 0.2."


# ── Dueling head ─────────────────────────────────────────────────

def test_dueling_examples():
    """V = 0 with flat advantages is all zeros; V = 5, A = [1, 2, 3] gives [4, 5, 6]."""
    assert np.array_equal(dueling_combine(0.0, np.zeros(5)).data, np.zeros(5)), "Zero in, zero out."
    assert np.allclose(dueling_combine(5.0, np.array([1.0, 2.0, 3.0])).data, [4.0, 5.0, 6.0]), "Centred advantage."


def test_dueling_mean_equals_value(rng):
    """mean(Q) == V over 1000 batched states."""
    v = Tensor(rng.normal(scale=10.0, size=(1000, 1)), dtype=np.float64)
    a = Tensor(rng.normal(scale=10.0, size=(1000, 5)), dtype=np.float64)
    q = dueling_combine(v, a)
    assert np.allclose(q.data.mean(axis=1), v.data[:, 0], atol=1e-10), "Mean over actions must equal V."


def test_network_dueling_identity_on_random_states(rng, tiny_network_config):
    """For 1000 random scenes the network's mean Q equals its value stream."""
    net = QNetwork(tiny_network_config)
    for _ in range(1000):
        out = q_forward(net, random_obs(rng, count=int(rng.integers(1, 6))), Mode.EVAL)
        assert np.allclose(out.q.data.mean(axis=1), out.value.data[:, 0], atol=1e-6)


def test_dueling_empty_advantage():
    """An empty advantage vector is rejected."""
    with pytest.raises(DimensionError):
        dueling_combine(1.0, np.zeros(0))


# ── Full network ─────────────────────────────────────────────────

def test_q_forward_contract(rng, tiny_network_config):
    """Five finite Q-values, argmax in range, attention rows are distributions, mean(Q) = V."""
    net = QNetwork(tiny_network_config)
    out = q_forward(net, random_obs(rng), Mode.EVAL)
    assert out.q.shape == (1, 5), "One Q-value per action."
    assert 0 <= int(np.argmax(out.q.data[0])) < 5
    assert np.allclose(out.q.data.mean(axis=1), out.value.data[:, 0], atol=1e-5), "Dueling identity must hold."
    for alpha in out.attention:
        assert alpha.shape == (1, 2, 5, 5)
        assert np.all(alpha >= 0) and np.allclose(alpha.sum(axis=-1), 1.0, atol=1e-6), "Rows must sum to one."


def test_eval_forward_is_bit_identical(rng, tiny_network_config):
    """Two eval passes on the same observation give identical bits."""
    net = QNetwork(tiny_network_config)
    obs = random_obs(rng)
    assert np.array_equal(net(obs, Mode.EVAL).q.data, net(obs, Mode.EVAL).q.data), "Eval must be pure."


def test_train_forward_uses_noise(rng, tiny_network_config):
    """Train mode samples noise, so two passes differ."""
    net = QNetwork(tiny_network_config)
    obs = random_obs(rng)
    assert not np.array_equal(net(obs, Mode.TRAIN).q.data, net(obs, Mode.TRAIN).q.data), "Noise must vary."


@pytest.mark.parametrize("kind", [NetworkKind.DQGAT, NetworkKind.GCN_UNIFORM, NetworkKind.GCN_DISTANCE])
def test_non_ego_permutation_invariance(rng, tiny_network_config, kind):
    """Reordering the non-ego nodes of 100 random scenes leaves Q unchanged."""
    net = QNetwork(tiny_network_config.model_copy(update={"kind": kind}))
    for scene in range(100):
        count = int(rng.integers(2, 6))
        obs = random_obs(rng, count=count)
        order = [0, *(1 + rng.permutation(count - 1)), *range(count, 5)]
        shuffled = SceneObservation(bev=obs.bev, nodes=obs.nodes[order], mask=obs.mask[order])
        q1 = net(obs, Mode.EVAL).q.data
        q2 = net(shuffled, Mode.EVAL).q.data
        assert np.allclose(q1, q2, atol=1e-5), f"Scene {scene}: Q must not depend on neighbour order."
        assert np.argmax(q1) == np.argmax(q2)


def test_padding_nodes_do_not_change_q(rng, tiny_network_config):
    """Padded rows carry no information into the ego output."""
    net = QNetwork(tiny_network_config)
    obs = random_obs(rng, count=3)
    noisy_padding = obs.nodes.copy()
    noisy_padding[3:] = 7.0
    padded = SceneObservation(bev=obs.bev, nodes=noisy_padding, mask=obs.mask)
    assert np.allclose(net(obs, Mode.EVAL).q.data, net(padded, Mode.EVAL).q.data, atol=1e-10)


def test_missing_ego_node_rejected(rng, tiny_network_config):
    """An observation whose first node is invalid cannot be evaluated."""
    net = QNetwork(tiny_network_config)
    obs = random_obs(rng)
    empty = SceneObservation(bev=obs.bev, nodes=obs.nodes, mask=np.zeros(5, dtype=bool))
    with pytest.raises(DimensionError):
        net(empty, Mode.EVAL)


def test_q_forward_gradients(rng, tiny_network_config):
    """Gradient check through the whole composite for one parameter of each stage."""
    net = QNetwork(tiny_network_config)
    obs = random_obs(rng)
    names = [
        "encoder.convs.1.kernels",
        "node_encoder.fc1.W",
        "graph1.a",
        "graph2.W",
        "advantage_out.W",
        "value_hidden.b",
    ]
    params = net.parameters()
    weights = Tensor(rng.normal(size=(1, 5)), dtype=np.float64)

    def fn(*tensors):
        net.replace_parameters(dict(zip(names, tensors)))
        return ops.sum(ops.mul(q_forward(net, obs, Mode.EVAL).q, weights))

    result = gradient_check(fn, [params[n].data.copy() for n in names], h=1e-6)
    assert result.max_error < 1e-4, f"Composite gradients off: {dict(zip(names, result.errors))}"


def test_dense_bev_zero_image_is_bias_path(rng, tiny_network_config):
    """DenseBEV on an all-zero raster equals the hand-computed bias-only forward."""
    net = QNetwork(tiny_network_config.model_copy(update={"kind": NetworkKind.DENSE_BEV}))
    obs = random_obs(rng, channels=5)
    zero = SceneObservation(bev=np.zeros_like(obs.bev), nodes=obs.nodes, mask=obs.mask)
    q = net(zero, Mode.EVAL).q.data[0]

    def relu(x):
        return np.maximum(x, 0.0)

    z = net.encoder.proj.b.data
    v = net.value_out.W.data @ relu(net.value_hidden.W.data @ z + net.value_hidden.b.data) + net.value_out.b.data
    a = net.advantage_out.W.data @ relu(net.advantage_hidden.W.data @ z + net.advantage_hidden.b.data)
    a = a + net.advantage_out.b.data
    assert np.allclose(q, v + a - a.mean(), atol=1e-10), "Zero input must reduce to the bias path."
    assert net(zero, Mode.EVAL).attention == [], "DenseBEV has no graph layers."


def test_unknown_ablation_kind():
    """An unsupported architecture name raises UnknownNetworkKindError."""
    with pytest.raises(UnknownNetworkKindError):
        build_ablation_network("transformer")


def test_ablation_builds_each_kind(tiny_network_config):
    """Every kind builds with matching online and target shapes."""
    for kind in NetworkKind:
        params = build_ablation_network(kind, tiny_network_config)
        assert params.config.kind == kind
        online, target = params.online.state_dict(), params.target.state_dict()
        assert online.keys() == target.keys(), "Online and target share parameter names."
        assert all(online[k].shape == target[k].shape for k in online), "Shapes must agree."


def test_target_starts_equal_and_syncs(tiny_network_config):
    """The target copy starts equal to the online net and re-syncs after drift."""
    params = QNetworkParams.create(tiny_network_config)
    for name, value in params.online.state_dict().items():
        assert np.array_equal(value, params.target.state_dict()[name])
    params.online.parameters()["value_out.b"].data += 1.0
    assert not np.array_equal(params.online.state_dict()["value_out.b"], params.target.state_dict()["value_out.b"])
    params.sync_target()
    assert np.array_equal(params.online.state_dict()["value_out.b"], params.target.state_dict()["value_out.b"])


def test_network_presets():
    """Full preset restores the large dims; dense_bev needs five raster channels."""
    full = NetworkConfig.full()
    assert (full.z_dim, full.e_dim, full.gat_dim, full.heads) == (512, 128, 256, 4)
    assert NetworkConfig(kind=NetworkKind.DENSE_BEV).bev_channels == 5
    with pytest.raises(ValueError):
        NetworkConfig(feature_scale=(1.0, 2.0))


# ── Module plumbing & optimizer ──────────────────────────────────

def test_load_state_dict_rejects_mismatch(tiny_network_config):
    """Missing names raise CheckpointError and wrong shapes raise DimensionError."""
    net = QNetwork(tiny_network_config)
    state = net.state_dict()
    missing = dict(state)
    missing.pop("graph1.a")
    with pytest.raises(CheckpointError):
        net.load_state_dict(missing)
    state["graph1.a"] = np.zeros((1, 1))
    with pytest.raises(DimensionError):
        net.load_state_dict(state)


def test_clone_is_independent(tiny_network_config):
    """A cloned module does not share parameter storage."""
    net = QNetwork(tiny_network_config)
    twin = net.clone()
    twin.parameters()["graph2.W"].data[...] = 0.0
    assert np.any(net.parameters()["graph2.W"].data != 0.0), "Clone writes must not leak back."


def test_adam_minimizes_quadratic():
    """A few hundred Adam steps pull a parameter to the minimum of (x - 3)^2."""
    x = Tensor([0.0], requires_grad=True, dtype=np.float64)
    opt = Adam({"x": x}, lr=0.1, max_grad_norm=None)
    for _ in range(300):
        opt.zero_grad()
        with Tape():
            d = ops.sub(x, 3.0)
            loss = ops.sum(ops.mul(d, d))
        backward(loss)
        opt.step()
    assert x.data[0] == pytest.approx(3.0, abs=0.05), "Adam must converge on a convex bowl."


def test_adam_reports_pre_clip_norm():
    """step() returns the unclipped global norm and skips parameters without gradient."""
    x = Tensor([0.0, 0.0], requires_grad=True, dtype=np.float64)
    y = Tensor([1.0], requires_grad=True, dtype=np.float64)
    opt = Adam({"x": x, "y": y}, lr=0.01, max_grad_norm=1.0)
    x.grad = np.array([3.0, 4.0])
    assert opt.step() == pytest.approx(5.0), "Norm is reported before clipping."
    assert np.all(x.data < 0.0), "Parameters move against the gradient."
    assert y.data[0] == 1.0, "Parameters without gradient stay put."


# ── Checkpoints ──────────────────────────────────────────────────

def test_checkpoint_round_trip_is_bit_exact(tmp_path, tiny_network_config):
    """Saved online and target arrays load back identical, with step and extras in the metadata."""
    params = QNetworkParams.create(tiny_network_config)
    params.online.parameters()["graph1.W"].data *= 1.5
    path = save_checkpoint(tmp_path / "ckpt.npz", params, step=1234, extra={"note": "unit"})
    loaded, meta = load_checkpoint(path)
    for source, copy in ((params.online, loaded.online), (params.target, loaded.target)):
        for name, value in source.state_dict().items():
            assert np.array_equal(value, copy.state_dict()[name]), f"{name} changed in the round trip."
    assert meta["step"] == 1234 and meta["note"] == "unit"
    assert read_checkpoint_meta(path)["config_hash"] == tiny_network_config.config_hash()


def test_corrupt_checkpoint_raises(tmp_path):
    """A file that is not an archive is a CheckpointError."""
    path = tmp_path / "broken.npz"
    path.write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
