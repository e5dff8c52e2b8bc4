"""Deterministic CSV/JSON output with metadata sidecars."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

__all__ = ["fmt", "write_csv", "write_json", "config_hash", "sidecar", "base_meta"]


def fmt(v) -> str:
    """Locale-free text: 17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def sidecar(path: Path, meta: dict) -> Path:
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n")
    return side


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    if meta is not None:
        sidecar(path, meta)
    return path


def write_json(path: Path, data: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")
    if meta is not None:
        sidecar(path, meta)
    return path


def base_meta(command: str, config: dict, seed) -> dict:
    return {"tool": "mixlab", "version": __version__, "command": command,
            "config_hash": config_hash(config), "seed": seed}
