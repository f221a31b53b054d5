"""
Planar geometry — angles, frames, polylines and rectangles.

All lengths are metres; angles radians, counter-clockwise from +x.
"""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(angle: float | np.ndarray) -> float | np.ndarray:
    """Wrap into (−π, π]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=np.float64), 2.0 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_local(points: np.ndarray, origin: tuple[float, float], heading: float) -> np.ndarray:
    """World points [..., 2] → frame at `origin` with +x along `heading`."""
    c, s = math.cos(heading), math.sin(heading)
    d = np.asarray(points, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)


def to_world(points: np.ndarray, origin: tuple[float, float], heading: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    p = np.asarray(points, dtype=np.float64)
    return np.stack(
        [c * p[..., 0] - s * p[..., 1] + origin[0], s * p[..., 0] + c * p[..., 1] + origin[1]],
        axis=-1,
    )


def rigid_points(points: np.ndarray, dx: float, dy: float, dtheta: float) -> np.ndarray:
    """Rotate about the world origin by `dtheta`, then translate by (dx, dy)."""
    return to_world(points, (dx, dy), dtheta)


def rectangle_corners(x: float, y: float, psi: float, w: float, l: float) -> np.ndarray:  # noqa: E741
    """Counter-clockwise corners of an oriented w × l rectangle."""
    half = np.array([[l / 2, -w / 2], [l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2]])
    return to_world(half, (x, y), psi)


def circle_polygon(center: tuple[float, float], radius: float, segments: int = 72) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=-1)


def bezier(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray, p3: np.ndarray, n: int = 24) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (
        (1 - t) ** 3 * p0
        + 3 * (1 - t) ** 2 * t * p1
        + 3 * (1 - t) * t**2 * p2
        + t**3 * p3
    )


class Polyline:
    """Piecewise-linear curve parameterized by arclength `s`."""

    def __init__(self, points: np.ndarray) -> None:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError(f"polyline needs at least two 2D points, got shape {pts.shape}")
        seg = np.diff(pts, axis=0)
        keep = np.concatenate([[True], np.hypot(seg[:, 0], seg[:, 1]) > 1e-9])
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("polyline collapses to a single point")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        self.points = pts
        self.s = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self.s[-1])
        self._seg = seg
        self._seg_len = lengths
        self._headings = np.arctan2(seg[:, 1], seg[:, 0])

    def __len__(self) -> int:
        return len(self.points)

    def _locate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self._seg) - 1)
        return idx, s - self.s[idx]

    def positions(self, s: float | np.ndarray) -> np.ndarray:
        """Points at arclength `s`; linear extrapolation past either end."""
        arr = np.asarray(s, dtype=np.float64)
        idx, offset = self._locate(arr)
        direction = self._seg[idx] / self._seg_len[idx][..., None]
        return self.points[idx] + direction * offset[..., None]

    def headings(self, s: float | np.ndarray) -> np.ndarray:
        idx, _ = self._locate(np.asarray(s, dtype=np.float64))
        return self._headings[idx]

    def pose(self, s: float) -> tuple[float, float, float]:
        p = self.positions(s)
        return float(p[0]), float(p[1]), float(self.headings(s))

    def project(
        self,
        point: tuple[float, float] | np.ndarray,
        s_min: float | None = None,
        s_max: float | None = None,
    ) -> tuple[float, float]:
        """Closest arclength and signed lateral offset (left positive), optionally within [s_min, s_max]."""
        p = np.asarray(point, dtype=np.float64)
        lo = 0 if s_min is None else max(0, int(np.searchsorted(self.s, s_min, side="right")) - 1)
        lo = min(lo, len(self._seg) - 1)
        hi = len(self._seg) if s_max is None else max(lo + 1, int(np.searchsorted(self.s, s_max, side="left")))
        starts = self.points[lo:hi]
        seg = self._seg[lo:hi]
        seg_len = self._seg_len[lo:hi]
        t = np.clip(((p - starts) * seg).sum(axis=1) / seg_len**2, 0.0, 1.0)
        closest = starts + seg * t[:, None]
        dist2 = ((p - closest) ** 2).sum(axis=1)
        k = int(np.argmin(dist2))
        s_val = float(self.s[lo + k] + t[k] * seg_len[k])
        d = p - starts[k]
        lateral = float((seg[k, 0] * d[1] - seg[k, 1] * d[0]) / seg_len[k])
        return s_val, lateral

    def resample(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Evenly spaced (s, points) along the curve, end point included."""
        count = max(2, int(math.ceil(self.length / step)) + 1)
        s = np.linspace(0.0, self.length, count)
        return s, self.positions(s)

    def offset(self, distance: float) -> np.ndarray:
        """Vertices shifted `distance` to the left along averaged vertex normals."""
        normals = np.stack([-np.sin(self._headings), np.cos(self._headings)], axis=-1)
        vertex = np.empty_like(self.points)
        vertex[0] = normals[0]
        vertex[-1] = normals[-1]
        if len(normals) > 1:
            mid = normals[:-1] + normals[1:]
            vertex[1:-1] = mid / np.linalg.norm(mid, axis=1, keepdims=True)
        return self.points + distance * vertex

    def sub(self, s_start: float, s_end: float) -> Polyline:
        """Portion between two arclengths (clamped to the curve)."""
        s0 = max(0.0, s_start)
        s1 = min(self.length, s_end)
        inner = self.s[(self.s > s0) & (self.s < s1)]
        return Polyline(self.positions(np.concatenate([[s0], inner, [s1]])))

    def transformed(self, dx: float, dy: float, dtheta: float) -> Polyline:
        return Polyline(rigid_points(self.points, dx, dy, dtheta))

    @classmethod
    def concatenate(cls, parts: list[Polyline]) -> Polyline:
        return cls(np.concatenate([p.points for p in parts], axis=0))
