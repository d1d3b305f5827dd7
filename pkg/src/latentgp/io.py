"""Dataset, draws, and report serialization.

CSV with 17-significant-digit floats is the interchange format: text
round-trips float64 exactly, files are diff-able, and every writer goes
through an atomic write-temp-then-rename so partial files never appear.
A run manifest (command, flags, seed, version, timestamps, outputs) is
written next to every command's outputs.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .exceptions import InvalidInput
from .sampler import PosteriorDraws
from .simulate import SimDataset

__all__ = [
    "fmt",
    "atomic_write_text",
    "write_json",
    "read_json",
    "write_dataset",
    "read_dataset",
    "truth_to_jsonable",
    "write_draws",
    "read_draws",
    "RunManifest",
    "read_table",
]


def fmt(x: float) -> str:
    """Render a float with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


def atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    return obj


def write_json(path: str, obj):
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path: str):
    with open(path) as handle:
        return json.load(handle)


# --------------------------------------------------------------------------
# simulated datasets
# --------------------------------------------------------------------------

def write_dataset(path: str, data: SimDataset):
    """One row per observation: id, x_true, x_tilde, y_f_1.., y_g_1.."""
    n, d = data.y_f.shape
    header = (["id", "x_true", "x_tilde"]
              + [f"y_f_{k}" for k in range(1, d + 1)]
              + [f"y_g_{k}" for k in range(1, d + 1)])
    rows = []
    for i in range(n):
        rows.append([str(i + 1), fmt(data.x_true[i]), fmt(data.x_tilde[i])]
                    + [fmt(v) for v in data.y_f[i]]
                    + [fmt(v) for v in data.y_g[i]])
    out = [",".join(header)] + [",".join(r) for r in rows]
    atomic_write_text(path, "\n".join(out) + "\n")


def truth_to_jsonable(data: SimDataset) -> dict:
    return {
        "process": data.process,
        "seed": data.seed,
        "s": data.s,
        "scale_lambda": data.scale_lambda,
        "x_true": data.x_true,
        "hyperparameters": {k: v for k, v in data.truth.items()},
    }


def read_dataset(path: str) -> SimDataset:
    """Parse a dataset CSV (and its sidecar truth JSON when present)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = list(reader)
    if header[:3] != ["id", "x_true", "x_tilde"]:
        raise InvalidInput(f"{path}: unexpected dataset header {header[:3]}")
    yf_cols = [i for i, name in enumerate(header) if name.startswith("y_f_")]
    yg_cols = [i for i, name in enumerate(header) if name.startswith("y_g_")]
    values = np.array([[float(v) for v in row] for row in rows])
    truth = {}
    meta = {"process": "unknown", "seed": -1, "s": 0.3, "scale_lambda": 10.0}
    sidecar = sidecar_path(path, "truth.json")
    if os.path.exists(sidecar):
        raw = read_json(sidecar)
        meta = {k: raw[k] for k in ("process", "seed", "s", "scale_lambda")}
        truth = {k: np.asarray(v) for k, v in raw["hyperparameters"].items()}
    return SimDataset(
        process=meta["process"], seed=meta["seed"], s=meta["s"],
        scale_lambda=meta["scale_lambda"],
        x_true=values[:, 1], x_tilde=values[:, 2],
        y_f=values[:, yf_cols] if yf_cols else np.empty((len(rows), 0)),
        y_g=values[:, yg_cols] if yg_cols else np.empty((len(rows), 0)),
        truth=truth,
    )


def sidecar_path(path: str, kind: str) -> str:
    stem, _ = os.path.splitext(path)
    return f"{stem}.{kind}"


# --------------------------------------------------------------------------
# posterior draws
# --------------------------------------------------------------------------

def write_draws(path: str, draws: PosteriorDraws):
    lines = [",".join(draws.names)]
    for row in draws.draws:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_draws(path: str):
    """Returns (names, array); chain structure is recorded in diagnostics."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        names = next(reader)
        arr = np.array([[float(v) for v in row] for row in reader])
    return names, arr


# --------------------------------------------------------------------------
# generic delimited tables (case-study ingestion)
# --------------------------------------------------------------------------

def read_table(path: str):
    """Read a CSV with a header row into (header, list-of-row-lists of str)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = list(reader)
    return header, rows


# --------------------------------------------------------------------------
# run manifests
# --------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    flags: dict
    seed: int | None
    outputs: list = field(default_factory=list)
    version: str = __version__
    started: str = ""
    finished: str = ""

    def start(self):
        self.started = datetime.now(timezone.utc).isoformat()
        return self

    def finish_and_write(self, path: str):
        self.finished = datetime.now(timezone.utc).isoformat()
        write_json(path, {
            "command": self.command,
            "flags": self.flags,
            "seed": self.seed,
            "outputs": self.outputs,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
        })
