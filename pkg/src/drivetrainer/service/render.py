"""
Replay Rendering — top-down frames from a replay log.

Frames are drawn on an object-oriented matplotlib Figure with the Agg
canvas (no pyplot state), so rendering is thread-safe and the same log
always yields the same pixels.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator
from pathlib import Path

import numpy as np
from matplotlib import image as mpimg
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.patches import Polygon

from drivetrainer.sim.collision import footprint
from drivetrainer.sim.lanemap import LaneMap
from drivetrainer.sim.replay_log import ReplayLog, StepRecord
from drivetrainer.sim.scenarios import build_lanemap
from drivetrainer.sim.types import ACTION_SPEEDS_KMH, DT, EGO_ID, ms_to_kmh

SaliencyFn = Callable[[StepRecord], np.ndarray]

FIGSIZE = (6.4, 4.8)
DPI = 100
EGO_COLOR = "#d62728"
OTHER_COLOR = "#1f77b4"


def _map_extent(lanemap: LaneMap, margin: float = 5.0) -> tuple[float, float, float, float]:
    points = np.concatenate(lanemap.drivable)
    lo = points.min(axis=0) - margin
    hi = points.max(axis=0) + margin
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def _draw_map(ax: object, lanemap: LaneMap) -> None:
    for polygon in lanemap.drivable:
        ax.add_patch(Polygon(polygon, closed=True, facecolor="#bdbdbd", edgecolor="none"))  # type: ignore[attr-defined]
    for polygon in lanemap.holes:
        ax.add_patch(Polygon(polygon, closed=True, facecolor="white", edgecolor="none"))  # type: ignore[attr-defined]
    for marking in lanemap.markings:
        ax.plot(marking.points[:, 0], marking.points[:, 1], color="white", linewidth=0.6)  # type: ignore[attr-defined]


def render_frame(
    lanemap: LaneMap,
    record: StepRecord,
    route_id: str | None = None,
    overlay: np.ndarray | None = None,
    dt: float = DT,
) -> np.ndarray:
    """One RGBA frame as a uint8 [H, W, 4] array."""
    fig = Figure(figsize=FIGSIZE, dpi=DPI)
    canvas = FigureCanvasAgg(fig)
    if overlay is None:
        ax = fig.add_axes((0.0, 0.0, 1.0, 0.92))
    else:
        ax = fig.add_axes((0.0, 0.0, 0.62, 0.92))
        inset = fig.add_axes((0.64, 0.1, 0.34, 0.72))
        inset.imshow(overlay, cmap="inferno", vmin=0.0, vmax=1.0, origin="lower", interpolation="nearest")
        inset.set_axis_off()
        inset.set_title("saliency", fontsize=8)

    xmin, xmax, ymin, ymax = _map_extent(lanemap)
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.set_axis_off()
    _draw_map(ax, lanemap)
    if route_id is not None:
        path = lanemap.routes[route_id].path.points
        ax.plot(path[:, 0], path[:, 1], color=EGO_COLOR, linewidth=0.8, alpha=0.4)

    for vehicle in record.vehicles:
        color = EGO_COLOR if vehicle.vehicle_id == EGO_ID else OTHER_COLOR
        ax.add_patch(Polygon(footprint(vehicle.to_state()), closed=True, facecolor=color, edgecolor="black", linewidth=0.4))

    ego = record.ego
    label = (
        f"t={record.t * dt:5.1f}s  action={ACTION_SPEEDS_KMH[record.ego_action]:.0f} km/h  "
        f"v={ms_to_kmh(ego.v):4.1f} km/h  r={record.reward:+.2f}"
    )
    if record.events:
        label += "  [" + ", ".join(record.events) + "]"
    fig.text(0.01, 0.95, label, fontsize=8, family="monospace")

    canvas.draw()
    return np.asarray(canvas.buffer_rgba()).copy()


def iter_frames(log: ReplayLog, saliency: SaliencyFn | None = None) -> Iterator[np.ndarray]:
    if not log.steps:
        return
    lanemap = build_lanemap(log.header.scenario.scenario_id)
    route_id = log.steps[0].ego.route_id
    for record in log.steps:
        overlay = saliency(record) if saliency is not None else None
        yield render_frame(lanemap, record, route_id, overlay, log.header.dt)


def render_replay(log: ReplayLog, out_dir: str | Path | None = None, saliency: SaliencyFn | None = None) -> list[np.ndarray]:
    """All frames of a log; written as numbered PNGs when `out_dir` is given."""
    frames = list(iter_frames(log, saliency))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for k, frame in enumerate(frames):
            mpimg.imsave(out / f"frame_{k:05d}.png", frame)
    return frames
