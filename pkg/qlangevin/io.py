"""CSV emission and read-back of time series, plus the sup-norm comparison used by `compare`."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from .analysis import sup_deviation
from .core import TimeSeries
from .errors import QLangevinError

logger = logging.getLogger(__name__)

STDERR_SUFFIX = "_stderr"


def _header(series: TimeSeries) -> List[str]:
    header = ["t"]
    for name in series.names:
        header.append(name)
        if series.stderr is not None and name in series.stderr:
            header.append(name + STDERR_SUFFIX)
    return header


def write_csv(series: TimeSeries, path: str | Path) -> None:
    """Header `t,<channel>[,<channel>_stderr]...`, one row per time, shortest round-trip decimals."""
    path = Path(path)
    header = _header(series)
    columns = [series.t]
    for name in series.names:
        columns.append(series[name])
        if series.stderr is not None and name in series.stderr:
            columns.append(series.stderr[name])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in zip(*columns):
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc.strerror or exc}") from exc
    logger.debug("wrote %d rows to %s", len(series), path)


def read_csv(path: str | Path) -> TimeSeries:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise OSError(f"could not read {path}: {exc.strerror or exc}") from exc
    if not rows or not rows[0] or rows[0][0] != "t":
        raise QLangevinError(f"{path}: first column must be 't'")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise QLangevinError(f"{path}: {exc}") from exc
    columns = {name: data[:, i] for i, name in enumerate(header)}
    stderr = {
        name[: -len(STDERR_SUFFIX)]: col
        for name, col in columns.items()
        if name.endswith(STDERR_SUFFIX) and name[: -len(STDERR_SUFFIX)] in columns
    }
    error_columns = {name + STDERR_SUFFIX for name in stderr}
    channels = {name: col for name, col in columns.items() if name != "t" and name not in error_columns}
    return TimeSeries(columns["t"], channels, stderr or None)


def compare_csv(path_a: str | Path, path_b: str | Path, tol: float) -> Dict[str, Any]:
    """Sup-norm comparison over the channels both files share."""
    try:
        a, b = read_csv(path_a), read_csv(path_b)
        shared = [name for name in a.names if name in b.channels]
        if not shared:
            return {"success": False, "max_deviation": None, "channel": None, "error": "no shared channels"}
        deviation, channel = sup_deviation(a, b, shared)
    except (OSError, QLangevinError) as exc:
        return {"success": False, "max_deviation": None, "channel": None, "error": str(exc)}
    return {
        "success": bool(deviation <= tol),
        "max_deviation": deviation,
        "channel": channel,
        "error": None if deviation <= tol else f"{channel} deviates by {deviation:.3e} > {tol:.3e}",
    }
