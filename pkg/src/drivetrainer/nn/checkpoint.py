"""
Checkpoint I/O — online and target parameters in one `.npz` archive.

Layout: `online/<param>` and `target/<param>` arrays plus a `__meta__`
entry holding JSON {format, step, config_hash, network}. Arrays are stored
raw so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from drivetrainer.errors import CheckpointError
from drivetrainer.nn.qnet import QNetworkParams
from drivetrainer.nn.types import NetworkConfig

logger = structlog.get_logger(__name__)

FORMAT_VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(path: str | Path, params: QNetworkParams, step: int, extra: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT_VERSION,
        "step": int(step),
        "config_hash": params.config.config_hash(),
        "network": params.config.model_dump(mode="json"),
        **(extra or {}),
    }
    arrays: dict[str, np.ndarray] = {META_KEY: np.array(json.dumps(meta, sort_keys=True))}
    arrays.update({f"online/{k}": v for k, v in params.online.state_dict().items()})
    arrays.update({f"target/{k}": v for k, v in params.target.state_dict().items()})

    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)
    logger.info("checkpoint_saved", path=str(path), step=step)
    return path


def read_checkpoint_meta(path: str | Path) -> dict[str, Any]:
    with _open(path) as archive:
        return json.loads(str(archive[META_KEY]))


def load_checkpoint(path: str | Path) -> tuple[QNetworkParams, dict[str, Any]]:
    """Rebuild the networks recorded in the archive; returns (params, meta)."""
    with _open(path) as archive:
        if META_KEY not in archive.files:
            raise CheckpointError(f"{path}: missing {META_KEY}")
        meta = json.loads(str(archive[META_KEY]))
        online = {k.removeprefix("online/"): archive[k] for k in archive.files if k.startswith("online/")}
        target = {k.removeprefix("target/"): archive[k] for k in archive.files if k.startswith("target/")}

    config = NetworkConfig.model_validate(meta["network"])
    if config.config_hash() != meta["config_hash"]:
        raise CheckpointError(f"{path}: config hash does not match the stored network config")
    params = QNetworkParams.create(config)
    params.online.load_state_dict(online)
    params.target.load_state_dict(target)
    return params, meta


def file_hash(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _open(path: str | Path) -> Any:
    try:
        return np.load(Path(path), allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
