"""
Policy Introspection — what the Q-network looks at.

• saliency: |∂Q(s, a*)/∂X| over the BEV input, a* the greedy action
• attention_report: ego-row attention per graph layer and head
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib import image as mpimg

from drivetrainer.agents.base import greedy_action
from drivetrainer.autodiff import Tape, Tensor, backward, ops
from drivetrainer.nn.qnet import QNetwork, q_forward
from drivetrainer.nn.types import Mode
from drivetrainer.obs.types import SceneObservation
from drivetrainer.service.schema import AttentionHead, AttentionReport


@dataclass(frozen=True)
class SaliencyMap:
    raw: np.ndarray  # [C, H, W] absolute gradient
    normalized: np.ndarray  # raw / max, zeros when the gradient vanishes
    action: int
    q_values: np.ndarray

    def image(self) -> np.ndarray:
        """[H, W] max over channels, aligned with the BEV rows and columns."""
        return self.normalized.max(axis=0)


def saliency(net: QNetwork, obs: SceneObservation) -> SaliencyMap:
    dtype = net.config.np_dtype
    bev = Tensor(obs.bev[None], requires_grad=True, dtype=dtype)
    with Tape():
        out = q_forward(net, obs, Mode.EVAL, bev=bev)
        q = out.q.data[0].astype(np.float64)
        action = greedy_action(q)
        best = ops.getitem(out.q, (0, action))
    backward(best)
    net.zero_grad()

    grad = np.zeros_like(obs.bev, dtype=np.float64) if bev.grad is None else bev.grad[0].astype(np.float64)
    raw = np.abs(grad)
    peak = float(raw.max())
    normalized = raw / peak if peak > 0.0 else np.zeros_like(raw)
    return SaliencyMap(raw=raw, normalized=normalized, action=action, q_values=q)


def export_saliency_png(saliency_map: SaliencyMap, path: str | Path) -> Path:
    """Grayscale image oriented like the exported BEV channels (forward up)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mpimg.imsave(path, saliency_map.image(), cmap="gray", vmin=0.0, vmax=1.0, origin="lower")
    return path


def attention_report(net: QNetwork, obs: SceneObservation) -> AttentionReport:
    out = q_forward(net, obs, Mode.EVAL)
    q = out.q.data[0].astype(np.float64)
    valid = np.flatnonzero(obs.mask)
    node_ids = [int(obs.vehicle_ids[k]) if k < len(obs.vehicle_ids) else int(k) for k in valid]
    heads: list[AttentionHead] = []
    for layer, alpha in enumerate(out.attention, start=1):
        for head in range(alpha.shape[1]):
            row = alpha[0, head, 0, valid]
            heads.append(
                AttentionHead(layer=layer, head=head, node_ids=node_ids, weights=[float(w) for w in row])
            )
    return AttentionReport(q_values=[float(v) for v in q], action=greedy_action(q), heads=heads)
