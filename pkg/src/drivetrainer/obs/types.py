"""
Observation Types — What the Q-network sees.

• Config: ObservationConfig (region of interest, resolution, node cap)
• Raw pieces: BEVGrid raster, NodeFeatureSet
• Network input: SceneObservation, its bit-packed CompactObservation,
  and ObservationBatch for batched forward passes
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from drivetrainer.config import config_hash
from drivetrainer.errors import DimensionError
from drivetrainer.nn.types import NODE_FEATURES

BINARY_CHANNELS = 3
VELOCITY_NORM = 15.0


class ObservationConfig(BaseModel):
    """Ego-anchored region: `height` rows forward, `width` columns across."""

    height: int = Field(100, gt=0)
    width: int = Field(140, gt=0)
    resolution: float = Field(0.5, gt=0)
    behind: float = Field(15.0, ge=0)
    n_max: int = Field(16, ge=1)
    dense: bool = False

    @property
    def channels(self) -> int:
        return BINARY_CHANNELS + 2 if self.dense else BINARY_CHANNELS

    @property
    def forward(self) -> float:
        return self.height * self.resolution - self.behind

    @property
    def half_width(self) -> float:
        return self.width * self.resolution / 2

    def contains(self, local_x: float, local_y: float) -> bool:
        """Whether an ego-frame point lies inside the region of interest."""
        return -self.behind <= local_x < self.forward and -self.half_width < local_y <= self.half_width

    def config_hash(self) -> str:
        return config_hash(self)

    @classmethod
    def desk(cls, **overrides: object) -> ObservationConfig:
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides: object) -> ObservationConfig:
        values: dict[str, object] = {"height": 200, "width": 280, "resolution": 0.25}
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class BEVGrid:
    """[C, H, W] raster; binary channels hold {0, 1}, dense velocity channels [-1, 1]."""
    data: np.ndarray
    resolution: float

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True)
class NodeFeatureSet:
    """Unpadded [N, 10] ego-frame features, ego first, nearest-first after that."""
    features: np.ndarray
    vehicle_ids: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.vehicle_ids)

    def padded(self, n_max: int, dtype: np.dtype | type = np.float32) -> tuple[np.ndarray, np.ndarray]:
        if self.count > n_max:
            raise DimensionError("padded", self.features.shape, (n_max, NODE_FEATURES), detail="too many nodes")
        nodes = np.zeros((n_max, NODE_FEATURES), dtype=dtype)
        nodes[: self.count] = self.features
        mask = np.zeros(n_max, dtype=bool)
        mask[: self.count] = True
        return nodes, mask


@dataclass(frozen=True)
class SceneObservation:
    bev: np.ndarray  # [C, H, W] float32
    nodes: np.ndarray  # [N_max, 10] float32
    mask: np.ndarray  # [N_max] bool
    vehicle_ids: tuple[int, ...] = ()

    def compact(self) -> CompactObservation:
        binary = self.bev[:BINARY_CHANNELS] > 0.5
        extra = self.bev[BINARY_CHANNELS:].copy() if self.bev.shape[0] > BINARY_CHANNELS else None
        return CompactObservation(
            bits=np.packbits(binary.ravel()),
            shape=tuple(binary.shape),
            extra=extra,
            nodes=self.nodes.copy(),
            mask=self.mask.copy(),
            vehicle_ids=self.vehicle_ids,
        )


@dataclass(frozen=True)
class CompactObservation:
    """Replay-buffer form: binary raster channels stored one bit per pixel."""
    bits: np.ndarray
    shape: tuple[int, ...]
    extra: np.ndarray | None
    nodes: np.ndarray
    mask: np.ndarray
    vehicle_ids: tuple[int, ...] = ()

    @property
    def nbytes(self) -> int:
        extra = 0 if self.extra is None else self.extra.nbytes
        return self.bits.nbytes + extra + self.nodes.nbytes + self.mask.nbytes

    def expand(self) -> SceneObservation:
        count = int(np.prod(self.shape))
        binary = np.unpackbits(self.bits, count=count).reshape(self.shape).astype(np.float32)
        bev = binary if self.extra is None else np.concatenate([binary, self.extra], axis=0)
        return SceneObservation(bev=bev, nodes=self.nodes, mask=self.mask, vehicle_ids=self.vehicle_ids)


@dataclass(frozen=True)
class ObservationBatch:
    bev: np.ndarray  # [B, C, H, W]
    nodes: np.ndarray  # [B, N_max, 10]
    mask: np.ndarray  # [B, N_max]

    def __len__(self) -> int:
        return int(self.bev.shape[0])

    @classmethod
    def from_observations(cls, observations: Sequence[SceneObservation | CompactObservation]) -> ObservationBatch:
        scenes = [o.expand() if isinstance(o, CompactObservation) else o for o in observations]
        if not scenes:
            raise DimensionError("from_observations", (0,), detail="empty batch")
        shapes = {(s.bev.shape, s.nodes.shape) for s in scenes}
        if len(shapes) != 1:
            first, *rest = sorted(shapes)
            raise DimensionError("from_observations", first[0], rest[0][0], detail="mixed observation shapes")
        return cls(
            bev=np.stack([s.bev for s in scenes]),
            nodes=np.stack([s.nodes for s in scenes]),
            mask=np.stack([s.mask for s in scenes]),
        )
