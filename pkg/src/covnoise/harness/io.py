"""CSV persistence for trajectories, variance reports and generic tables."""

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diagnostics import VarianceReport
from ..errors import IoFailure
from ..optimizer import TrajectoryLog


@dataclass
class Table:
    columns: tuple
    rows: list


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _as_table(obj):
    if isinstance(obj, Table):
        return obj
    if isinstance(obj, TrajectoryLog):
        return Table(TrajectoryLog.COLUMNS, list(obj.rows()))
    if isinstance(obj, VarianceReport):
        m = obj.meta
        rows = [(i, v, m.get("batch_size"), m.get("draws"), m.get("regime")) for i, v in obj.layers]
        return Table(("layer", "variance", "batch_size", "draws", "regime"), rows)
    raise TypeError(f"cannot write {type(obj).__name__} as CSV")


def csv_text(obj):
    t = _as_table(obj)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for row in t.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(obj, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(csv_text(obj))
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_csv(path):
    """(header, rows) with every cell as a string."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if not rows:
        return [], []
    return rows[0], rows[1:]


def read_trajectory(path):
    header, rows = read_csv(path)
    if tuple(header) != TrajectoryLog.COLUMNS:
        raise ValueError(f"{path} is not a trajectory CSV (header {header})")
    if not rows:
        return TrajectoryLog.empty()
    cols = list(zip(*rows))
    return TrajectoryLog(
        np.array([int(v) for v in cols[0]], dtype=np.int64),
        *(np.array([float(v) for v in c]) for c in cols[1:]),
    )
