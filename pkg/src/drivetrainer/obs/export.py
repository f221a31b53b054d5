"""Grayscale PNG dumps of raster channels, used for debugging and golden-image tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib import image as mpimg

from drivetrainer.obs.types import BINARY_CHANNELS, BEVGrid

CHANNEL_NAMES = ("map", "route", "vehicles", "vx", "vy")


def export_bev_png(grid: BEVGrid, out_dir: str | Path, stem: str = "bev") -> list[Path]:
    """One PNG per channel, forward pointing up; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for k in range(grid.channels):
        path = out / f"{stem}_{k}_{CHANNEL_NAMES[k]}.png"
        vmin = 0.0 if k < BINARY_CHANNELS else -1.0
        mpimg.imsave(path, grid.data[k], cmap="gray", vmin=vmin, vmax=1.0, origin="lower")
        paths.append(path)
    return paths


def load_bev_png(path: str | Path) -> np.ndarray:
    """Binary channel back from an exported PNG, in raster row order."""
    pixels = mpimg.imread(Path(path))
    return np.flipud(pixels[..., 0] > 0.5).astype(np.float32)
