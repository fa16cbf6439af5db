"""Deterministic CSV/JSON emission.

Floats are written with ``repr``, the shortest decimal string that round-trips,
so identical runs give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .simulate import Trajectory
from .transport import GridFunction


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def csv_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def trajectory_csv(traj: Trajectory) -> str:
    n = traj.trace.shape[1]
    header = ["t", "norm_state", "norm_history", "norm_total"]
    header += [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(n)]
    rows = (
        [t, a, b, c, *x, *u]
        for t, a, b, c, x, u in zip(
            traj.times, traj.norm_state, traj.norm_history, traj.norm_total, traj.trace, traj.inputs
        )
    )
    return csv_text(header, rows)


def snapshot_csv(snap: GridFunction) -> str:
    header = ["x"] + [f"z_{i + 1}" for i in range(snap.dimension)]
    return csv_text(header, ([x, *vals] for x, vals in zip(snap.nodes, snap.values)))


def snapshot_filename(t: float) -> str:
    return f"snapshot_t{fmt(float(t))}.csv"


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write(out_dir: str | Path, name: str, text: str) -> Path:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
