"""
Neural Layers — Building blocks of the Q-network.

• Linear / NoisyLinear: deterministic and factorized-Gaussian noisy dense layers
• ConvEncoder: strided 3×3 conv stack with global average pooling → z
• NodeEncoder: two-layer ReLU MLP over per-node features → e_k
• GATLayer / GraphConvLayer: multi-head graph aggregation (learned or fixed weights)
• dueling_combine: value + centred advantage
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from drivetrainer.autodiff import Tensor, ops
from drivetrainer.errors import DimensionError, InvalidMaskError
from drivetrainer.nn.module import Module
from drivetrainer.nn.types import MergeMode, Mode, ScoreActivation


def _param(values: np.ndarray, dtype: np.dtype) -> Tensor:
    return Tensor(values, requires_grad=True, dtype=dtype)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x[..., in] @ Wᵀ + b with W stored as (out × in)."""
    y = ops.matmul(x, ops.transpose(weight))
    return ops.add(y, ops.broadcast_to(bias, y.shape))


# ── Dense ────────────────────────────────────────────────────────

class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype: np.dtype = np.float32) -> None:
        bound = 1.0 / np.sqrt(in_dim)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = _param(rng.uniform(-bound, bound, (out_dim, in_dim)), dtype)
        self.b = _param(rng.uniform(-bound, bound, out_dim), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError("linear", x.shape, self.W.shape)
        return linear(x, self.W, self.b)


@dataclass(frozen=True)
class NoiseSample:
    weight: np.ndarray  # ε^w, out × in
    bias: np.ndarray  # ε^b, out


def _signed_sqrt(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.sqrt(np.abs(x))


class NoisyLinear(Module):
    """Deterministic stream (W, b) plus a learnable noisy stream (W_noisy, b_noisy)."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        sigma0: float = 0.5,
        dtype: np.dtype = np.float32,
    ) -> None:
        bound = 1.0 / np.sqrt(in_dim)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = _param(rng.uniform(-bound, bound, (out_dim, in_dim)), dtype)
        self.b = _param(rng.uniform(-bound, bound, out_dim), dtype)
        self.W_noisy = _param(np.full((out_dim, in_dim), sigma0 * bound), dtype)
        self.b_noisy = _param(np.full(out_dim, sigma0 * bound), dtype)
        self._noise_rng = np.random.default_rng(int(rng.integers(2**63)))

    def reseed(self, seed: int | np.random.SeedSequence) -> None:
        self._noise_rng = np.random.default_rng(seed)

    def sample_noise(self) -> NoiseSample:
        eps_in = _signed_sqrt(self._noise_rng.standard_normal(self.in_dim))
        eps_out = _signed_sqrt(self._noise_rng.standard_normal(self.out_dim))
        return NoiseSample(weight=np.outer(eps_out, eps_in), bias=eps_out)

    def __call__(self, x: Tensor, mode: Mode, noise: NoiseSample | None = None) -> Tensor:
        return noisy_linear_forward(self, x, mode, noise)


def noisy_linear_forward(
    layer: NoisyLinear,
    x: Tensor,
    mode: Mode,
    noise: NoiseSample | None = None,
) -> Tensor:
    """EVAL: b + Wx exactly. TRAIN: adds (b_noisy ⊙ ε^b) + (W_noisy ⊙ ε^w)x with fresh ε."""
    if x.shape[-1] != layer.in_dim:
        raise DimensionError("noisy_linear", x.shape, layer.W.shape)
    y = linear(x, layer.W, layer.b)
    if mode == Mode.EVAL:
        return y
    if noise is None:
        noise = layer.sample_noise()
    dtype = layer.W.dtype
    w_eff = ops.mul(layer.W_noisy, Tensor(noise.weight, dtype=dtype))
    b_eff = ops.mul(layer.b_noisy, Tensor(noise.bias, dtype=dtype))
    return ops.add(y, linear(x, w_eff, b_eff))


# ── Encoders ─────────────────────────────────────────────────────

class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, dtype: np.dtype) -> None:
        std = np.sqrt(2.0 / (in_channels * 9))
        self.kernels = _param(rng.normal(0.0, std, (out_channels, in_channels, 3, 3)), dtype)
        self.bias = _param(np.zeros(out_channels), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.kernels, self.bias, stride=2, padding=1)


class ConvEncoder(Module):
    """BEV [B, C, H, W] → z [B, Z]."""

    def __init__(
        self,
        in_channels: int,
        channels: tuple[int, ...],
        z_dim: int,
        rng: np.random.Generator,
        dtype: np.dtype = np.float32,
    ) -> None:
        widths = (in_channels, *channels)
        self.convs = [Conv2d(c_in, c_out, rng, dtype) for c_in, c_out in zip(widths, widths[1:])]
        self.proj = Linear(channels[-1], z_dim, rng, dtype)

    def __call__(self, bev: Tensor) -> Tensor:
        x = bev
        for conv in self.convs:
            x = ops.relu(conv(x))
        pooled = ops.mean(x, axis=(2, 3))
        return self.proj(pooled)


class NodeEncoder(Module):
    """c_k → e_k through Linear-ReLU-Linear-ReLU."""

    def __init__(self, in_dim: int, e_dim: int, rng: np.random.Generator, dtype: np.dtype = np.float32) -> None:
        self.fc1 = Linear(in_dim, e_dim, rng, dtype)
        self.fc2 = Linear(e_dim, e_dim, rng, dtype)

    def __call__(self, c: Tensor) -> Tensor:
        return ops.relu(self.fc2(ops.relu(self.fc1(c))))


# ── Graph layers ─────────────────────────────────────────────────

def _merge(heads: list[Tensor], merge: MergeMode) -> Tensor:
    if merge == MergeMode.CONCAT:
        return ops.concat([ops.relu(h) for h in heads], axis=-1)
    return ops.relu(ops.scale(reduce(ops.add, heads), 1.0 / len(heads)))


def _batched(h: Tensor, adjacency: np.ndarray, op: str) -> tuple[Tensor, np.ndarray, bool]:
    adj = np.asarray(adjacency, dtype=bool)
    unbatched = h.ndim == 2
    if unbatched:
        h = ops.reshape(h, (1, *h.shape))
        adj = adj[None]
    b, n, _ = h.shape
    if adj.shape != (b, n, n):
        raise DimensionError(op, h.shape, adj.shape, detail="adjacency must be N×N per graph")
    if not adj.any(axis=-1).all():
        raise InvalidMaskError(f"{op}: a node has no neighbours")
    return h, adj, unbatched


class GATLayer(Module):
    """S heads of shared transform W^s (F_out × F_in) and attention vector a^s (2·F_out)."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        heads: int,
        merge: MergeMode,
        rng: np.random.Generator,
        score_activation: ScoreActivation = ScoreActivation.RELU,
        leaky_slope: float = 0.2,
        dtype: np.dtype = np.float32,
    ) -> None:
        w_bound = np.sqrt(6.0 / (in_dim + out_dim))
        a_bound = np.sqrt(6.0 / (2 * out_dim + 1))
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.merge = merge
        self.score_activation = score_activation
        self.leaky_slope = leaky_slope
        self.W = _param(rng.uniform(-w_bound, w_bound, (heads, out_dim, in_dim)), dtype)
        self.a = _param(rng.uniform(-a_bound, a_bound, (heads, 2 * out_dim)), dtype)

    @property
    def output_dim(self) -> int:
        return self.heads * self.out_dim if self.merge == MergeMode.CONCAT else self.out_dim

    def __call__(self, h: Tensor, adjacency: np.ndarray) -> tuple[Tensor, np.ndarray]:
        return gat_layer(self, h, adjacency)


def gat_layer(layer: GATLayer, h: Tensor, adjacency: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """
    Multi-head graph attention.

    Returns the merged node features and the attention coefficients,
    shaped [B, S, N, N] (or [S, N, N] for an unbatched input).
    """
    if h.shape[-1] != layer.in_dim:
        raise DimensionError("gat_layer", h.shape, layer.W.shape)
    h3, adj, unbatched = _batched(h, adjacency, "gat_layer")
    b, n, _ = h3.shape
    f = layer.out_dim

    outputs: list[Tensor] = []
    alphas: list[np.ndarray] = []
    for s in range(layer.heads):
        wh = ops.matmul(h3, ops.transpose(layer.W[s]))
        src = ops.matmul(wh, ops.reshape(layer.a[s, :f], (f, 1)))
        dst = ops.transpose(ops.matmul(wh, ops.reshape(layer.a[s, f:], (f, 1))), (0, 2, 1))
        scores = ops.add(ops.broadcast_to(src, (b, n, n)), ops.broadcast_to(dst, (b, n, n)))
        if layer.score_activation == ScoreActivation.LEAKY_RELU:
            scores = ops.leaky_relu(scores, layer.leaky_slope)
        else:
            scores = ops.relu(scores)
        alpha = ops.softmax_rows(scores, adj)
        outputs.append(ops.matmul(alpha, wh))
        alphas.append(alpha.data)

    out = _merge(outputs, layer.merge)
    attention = np.stack(alphas, axis=1)
    if unbatched:
        return ops.reshape(out, out.shape[1:]), attention[0]
    return out, attention


def fixed_aggregation_weights(adjacency: np.ndarray, positions: np.ndarray, weighting: str) -> np.ndarray:
    """Row-normalized fixed weights: 1/|N_k| (uniform) or ∝ 1/(1 + d_kj) (distance)."""
    adj = np.asarray(adjacency, dtype=bool)
    if weighting == "uniform":
        raw = adj.astype(np.float64)
    elif weighting == "distance":
        diff = positions[..., :, None, :] - positions[..., None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        raw = np.where(adj, 1.0 / (1.0 + dist), 0.0)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return raw / raw.sum(axis=-1, keepdims=True)


class GraphConvLayer(Module):
    """Same head structure as GATLayer with attention replaced by fixed weights."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        heads: int,
        merge: MergeMode,
        weighting: str,
        rng: np.random.Generator,
        dtype: np.dtype = np.float32,
    ) -> None:
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.merge = merge
        self.weighting = weighting
        self.W = _param(rng.uniform(-bound, bound, (heads, out_dim, in_dim)), dtype)

    def __call__(self, h: Tensor, adjacency: np.ndarray, positions: np.ndarray) -> tuple[Tensor, np.ndarray]:
        if h.shape[-1] != self.in_dim:
            raise DimensionError("graph_conv", h.shape, self.W.shape)
        h3, adj, unbatched = _batched(h, adjacency, "graph_conv")
        pos = positions[None] if unbatched else positions
        weights = fixed_aggregation_weights(adj, pos, self.weighting).astype(self.W.dtype)
        fixed = Tensor(weights)
        outputs = [ops.matmul(fixed, ops.matmul(h3, ops.transpose(self.W[s]))) for s in range(self.heads)]
        out = _merge(outputs, self.merge)
        attention = np.repeat(weights[:, None], self.heads, axis=1)
        if unbatched:
            return ops.reshape(out, out.shape[1:]), attention[0]
        return out, attention


# ── Dueling head ─────────────────────────────────────────────────

def dueling_combine(value: Tensor | float, advantage: Tensor | np.ndarray) -> Tensor:
    """Q_a = V + (A_a − mean(A)); V is a scalar or one value per batch row."""
    adv = advantage if isinstance(advantage, Tensor) else Tensor(advantage)
    if adv.ndim == 0 or adv.shape[-1] == 0:
        raise DimensionError("dueling_combine", adv.shape, detail="advantage must be non-empty")
    val = value if isinstance(value, Tensor) else Tensor(value, dtype=adv.dtype)
    centered = ops.sub(adv, ops.broadcast_to(ops.mean(adv, axis=-1, keepdims=True), adv.shape))
    if val.size == 1:
        return ops.add(centered, val)
    rows = ops.reshape(val, (*adv.shape[:-1], 1))
    return ops.add(centered, ops.broadcast_to(rows, adv.shape))
