"""Serialization of run outputs: 17-digit JSON, CSV side files and grid dumps."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import math
import os
import platform
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .field import ScalarField, write_grid

OUT_ENV = "KHESSIAN_OUT"
DEFAULT_OUT = "results"


def format_float(x: float) -> str:
    """17 significant digits; integral values keep a trailing ``.0``."""
    s = format(float(x), ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _plain(obj):
    """Map numpy scalars, arrays, tuples and report objects onto JSON-like values."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if dataclasses.is_dataclass(obj):
        return _plain(dataclasses.asdict(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _encode(obj, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    pad, close = "  " * (level + 1), "  " * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{pad}{json.dumps(k, ensure_ascii=False)}: {_encode(v, level + 1)}"
                          for k, v in obj.items())
        return "{\n" + body + "\n" + close + "}"
    if not obj:
        return "[]"
    if all(not isinstance(v, (dict, list)) for v in obj):
        return "[" + ", ".join(_encode(v, level + 1) for v in obj) + "]"
    return "[\n" + ",\n".join(pad + _encode(v, level + 1) for v in obj) + "\n" + close + "]"


def to_json(obj) -> str:
    """JSON text with every float at 17 significant digits and non-finite values as null."""
    return _encode(_plain(obj), 0) + "\n"


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return format_float(v) if math.isfinite(v) else str(v)
    if isinstance(v, (list, dict)):
        return to_json(v).strip().replace("\n", " ")
    return str(v)


def write_csv(path, rows, prefix: dict | None = None) -> None:
    """Rows of dicts; columns in first-seen order, ``prefix`` columns first."""
    prefix = prefix or {}
    columns = list(prefix)
    for row in rows:
        columns += [c for c in row if c not in columns]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(columns)
        for row in rows:
            full = {**prefix, **row}
            out.writerow([_cell(full.get(c)) for c in columns])


def versions() -> dict:
    return {"khessian": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def resolve_out_dir(flag: str | None, configured: str | None) -> Path:
    """Command-line flag, then the environment override, then the config, then a default."""
    return Path(flag or os.environ.get(OUT_ENV) or configured or DEFAULT_OUT)


class OutputWriter:
    """Writes the files of one run into a directory, tagging each with the config hash.

    The directory is created on the first write, so runs that fail
    validation leave nothing behind.
    """

    def __init__(self, out_dir, config_path: str, config_hash: str, command: str, seed: int):
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.metadata = {"config": str(config_path), "config_sha256": config_hash,
                         "command": command, "seed": seed}
        self.files: list = []

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return self.out_dir / name

    def csv(self, name: str, rows) -> None:
        write_csv(self._path(name), rows, {"config_sha256": self.config_hash})

    def grid(self, name: str, u: ScalarField) -> None:
        write_grid(u, self._path(name), header={"config_sha256": self.config_hash})

    def report(self, payload: dict, status: dict, extra_metadata: dict | None = None) -> Path:
        meta = {**self.metadata, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "versions": versions(), **(extra_metadata or {})}
        path = self._path("report.json")
        meta["files"] = list(self.files)
        with open(path, "w") as fh:
            fh.write(to_json({"metadata": meta, "status": status, "payload": payload}))
        return path
