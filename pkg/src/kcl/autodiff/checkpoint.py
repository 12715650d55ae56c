"""Parameter container on disk.

Format (UTF-8 JSON)::

    {"format": "kcl-params", "version": 1,
     "params": {"<name>": {"shape": [d0, d1, ...], "values": [v0, v1, ...]}, ...}}

``values`` is the row-major flattening. Python serialises floats with the
shortest repr that round-trips, so float64 values survive exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

FORMAT = "kcl-params"
VERSION = 1


def dump_params(params: Mapping[str, np.ndarray]) -> str:
    body = {
        name: {"shape": list(arr.shape), "values": [float(v) for v in np.asarray(arr, dtype=np.float64).ravel()]}
        for name, arr in sorted(params.items())
    }
    return json.dumps({"format": FORMAT, "version": VERSION, "params": body}, allow_nan=False)


def load_params_text(text: str) -> dict[str, np.ndarray]:
    raw = json.loads(text)
    if raw.get("format") != FORMAT or raw.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint header: {raw.get('format')!r} v{raw.get('version')!r}")
    out = {}
    for name, rec in raw["params"].items():
        arr = np.asarray(rec["values"], dtype=np.float64)
        shape = tuple(rec["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"parameter {name}: {arr.size} values for shape {shape}")
        out[name] = arr.reshape(shape)
    return out


def save_params(path: str | Path, params: Mapping[str, np.ndarray]) -> None:
    Path(path).write_text(dump_params(params), encoding="utf-8")


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    return load_params_text(Path(path).read_text(encoding="utf-8"))
