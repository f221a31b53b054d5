"""
Q-Network Assembly — BEV encoder + node MLP + two graph layers + dueling noisy heads.

• QNetwork: one parameter set θ (architecture picked by NetworkConfig.kind)
• QNetworkParams: online θ plus the frozen target copy θ⁻
• q_forward: SceneObservation / ObservationBatch → QOutput
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drivetrainer.autodiff import Tensor, ops
from drivetrainer.errors import DimensionError, UnknownNetworkKindError
from drivetrainer.nn.layers import (
    ConvEncoder,
    GATLayer,
    GraphConvLayer,
    NodeEncoder,
    NoisyLinear,
    dueling_combine,
)
from drivetrainer.nn.module import Module
from drivetrainer.nn.types import NODE_FEATURES, MergeMode, Mode, NetworkConfig, NetworkKind, QOutput
from drivetrainer.obs.types import ObservationBatch, SceneObservation

_GRAPH_WEIGHTING = {NetworkKind.GCN_UNIFORM: "uniform", NetworkKind.GCN_DISTANCE: "distance"}


class QNetwork(Module):
    def __init__(self, config: NetworkConfig) -> None:
        rng = np.random.default_rng(config.seed)
        dtype = config.np_dtype
        self._config = config
        self._feature_scale = np.asarray(config.feature_scale, dtype=dtype)

        self.encoder = ConvEncoder(config.bev_channels, config.encoder_channels, config.z_dim, rng, dtype)

        if config.kind == NetworkKind.DENSE_BEV:
            head_in = config.z_dim
        else:
            self.node_encoder = NodeEncoder(NODE_FEATURES, config.e_dim, rng, dtype)
            g_dim = config.e_dim + config.z_dim
            f, s = config.gat_dim, config.heads
            if config.kind == NetworkKind.DQGAT:
                act, slope = config.score_activation, config.leaky_slope
                self.graph1 = GATLayer(g_dim, f, s, MergeMode.CONCAT, rng, act, slope, dtype)
                self.graph2 = GATLayer(s * f, f, s, MergeMode.AVERAGE, rng, act, slope, dtype)
            else:
                weighting = _GRAPH_WEIGHTING[config.kind]
                self.graph1 = GraphConvLayer(g_dim, f, s, MergeMode.CONCAT, weighting, rng, dtype)
                self.graph2 = GraphConvLayer(s * f, f, s, MergeMode.AVERAGE, weighting, rng, dtype)
            head_in = f

        hidden = config.stream_hidden
        self.value_hidden = NoisyLinear(head_in, hidden, rng, config.sigma0, dtype)
        self.value_out = NoisyLinear(hidden, 1, rng, config.sigma0, dtype)
        self.advantage_hidden = NoisyLinear(head_in, hidden, rng, config.sigma0, dtype)
        self.advantage_out = NoisyLinear(hidden, config.n_actions, rng, config.sigma0, dtype)

    @property
    def config(self) -> NetworkConfig:
        return self._config

    def noisy_layers(self) -> list[NoisyLinear]:
        return [self.value_hidden, self.value_out, self.advantage_hidden, self.advantage_out]

    def reseed_noise(self, seed: int) -> None:
        children = np.random.SeedSequence(seed).spawn(len(self.noisy_layers()))
        for layer, child in zip(self.noisy_layers(), children):
            layer.reseed(child)

    def __call__(self, obs: SceneObservation | ObservationBatch, mode: Mode, bev: Tensor | None = None) -> QOutput:
        return q_forward(self, obs, mode, bev)


def adjacency_from_mask(mask: np.ndarray) -> np.ndarray:
    """Full connectivity among valid nodes plus a self-loop on every row."""
    valid = np.asarray(mask, dtype=bool)
    n = valid.shape[-1]
    return (valid[..., :, None] & valid[..., None, :]) | np.eye(n, dtype=bool)


def q_forward(
    net: QNetwork,
    obs: SceneObservation | ObservationBatch,
    mode: Mode,
    bev: Tensor | None = None,
) -> QOutput:
    """
    Batched Q-values for every action.

    `bev` overrides the observation raster with a caller-owned tensor,
    which is how saliency maps get a gradient w.r.t. the input.
    """
    batch = ObservationBatch.from_observations([obs]) if isinstance(obs, SceneObservation) else obs
    cfg = net.config
    dtype = cfg.np_dtype
    if batch.nodes.shape[1] == 0 or not batch.mask[:, 0].all():
        raise DimensionError("q_forward", batch.nodes.shape, detail="every observation needs the ego node")

    image = bev if bev is not None else Tensor(batch.bev, dtype=dtype)
    if image.shape[1] != cfg.bev_channels:
        raise DimensionError("q_forward", image.shape, detail=f"expected {cfg.bev_channels} BEV channels")
    z = net.encoder(image)

    attention: list[np.ndarray] = []
    if cfg.kind == NetworkKind.DENSE_BEV:
        head = z
    else:
        b, n, _ = batch.nodes.shape
        features = Tensor(batch.nodes * net._feature_scale, dtype=dtype)
        e = net.node_encoder(features)
        z_nodes = ops.broadcast_to(ops.reshape(z, (b, 1, cfg.z_dim)), (b, n, cfg.z_dim))
        g = ops.concat([e, z_nodes], axis=-1)
        adjacency = adjacency_from_mask(batch.mask)
        if cfg.kind == NetworkKind.DQGAT:
            h1, a1 = net.graph1(g, adjacency)
            h2, a2 = net.graph2(h1, adjacency)
        else:
            positions = batch.nodes[..., :2].astype(np.float64)
            h1, a1 = net.graph1(g, adjacency, positions)
            h2, a2 = net.graph2(h1, adjacency, positions)
        attention = [a1, a2]
        head = h2[:, 0]

    value = net.value_out(ops.relu(net.value_hidden(head, mode)), mode)
    advantage = net.advantage_out(ops.relu(net.advantage_hidden(head, mode)), mode)
    return QOutput(q=dueling_combine(value, advantage), value=value, advantage=advantage, attention=attention)


@dataclass
class QNetworkParams:
    """Online network θ and its target shadow θ⁻ (identical shapes)."""
    online: QNetwork
    target: QNetwork

    @classmethod
    def create(cls, config: NetworkConfig) -> QNetworkParams:
        online = QNetwork(config)
        target = QNetwork(config)
        target.load_state_dict(online.state_dict())
        target.reseed_noise(config.seed + 1)
        return cls(online=online, target=target)

    @property
    def config(self) -> NetworkConfig:
        return self.online.config

    def sync_target(self) -> None:
        self.target.load_state_dict(self.online.state_dict())


def build_ablation_network(kind: str | NetworkKind, config: NetworkConfig | None = None) -> QNetworkParams:
    """Q-network variant with GCN(U), GCN(D) or dense-BEV aggregation (or the full model)."""
    try:
        resolved = NetworkKind(kind)
    except ValueError:
        valid = [k.value for k in NetworkKind]
        raise UnknownNetworkKindError(f"unknown network kind {kind!r}; expected one of {valid}") from None
    base = config or NetworkConfig.desk()
    return QNetworkParams.create(base.model_copy(update={"kind": resolved}))
