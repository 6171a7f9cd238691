"""Text serialisation of parameter sets: a JSON document with a config header
and nested arrays written at 17 significant digits (exact round trip)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .params import Parameters

__all__ = ["FORMAT_VERSION", "dumps_params", "loads_params", "save_params", "load_params",
           "SerializationError"]

FORMAT_VERSION = 1


class SerializationError(ValueError):
    pass


def _format_matrix(a: np.ndarray) -> str:
    rows = (", ".join(format(float(v), ".17g") for v in row) for row in a)
    return "[" + ", ".join(f"[{r}]" for r in rows) + "]"


def dumps_params(params: Parameters, config: dict | None = None, model: str = "") -> str:
    header = json.dumps({"format": "bunn-params", "version": FORMAT_VERSION,
                         "model": model, "config": config or {}}, sort_keys=True)
    body = ",\n".join(f"    {json.dumps(name)}: {_format_matrix(t.value)}"
                      for name, t in ((n, params[n]) for n in params))
    return f'{{"header": {header},\n "params": {{\n{body}\n }}}}\n'


def loads_params(text: str) -> tuple[Parameters, dict, str]:
    """Inverse of :func:`dumps_params`: ``(params, config, model name)``."""
    try:
        doc = json.loads(text)
        header = doc["header"]
        raw = doc["params"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SerializationError(f"not a parameter file: {exc}") from exc
    if header.get("format") != "bunn-params":
        raise SerializationError("missing bunn-params header")
    if header.get("version") != FORMAT_VERSION:
        raise SerializationError(f"unsupported format version {header.get('version')}")
    arrays = []
    for name, rows in raw.items():
        arr = np.array(rows, dtype=np.float64)
        if arr.ndim != 2:
            raise SerializationError(f"parameter {name!r} is not a matrix")
        arrays.append((name, arr))
    return Parameters(arrays), header.get("config", {}), header.get("model", "")


def save_params(path: str | Path, params: Parameters, config: dict | None = None,
                model: str = "") -> None:
    Path(path).write_text(dumps_params(params, config, model))


def load_params(path: str | Path) -> tuple[Parameters, dict, str]:
    return loads_params(Path(path).read_text())
