"""Parameter checkpoints: JSON map of name -> shape + values, with a version tag."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, params: dict[str, Tensor], extra: dict | None = None) -> None:
    """Write parameters as JSON; float repr round-trips exactly in 64-bit."""
    payload = {
        "version": FORMAT_VERSION,
        "extra": extra or {},
        "params": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (name -> array, extra metadata)."""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    arrays = {}
    for name, entry in payload["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        arrays[name] = arr
    return arrays, payload.get("extra", {})
