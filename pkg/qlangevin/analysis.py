"""Post-processing of recorded time series: tail statistics, trends and oscillation periods."""
from __future__ import annotations

import logging
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy import stats

from .core import TimeSeries
from .errors import InvalidParameterError, ShapeError

logger = logging.getLogger(__name__)

TREND_TOLERANCE = 0.05


def _tail(series: TimeSeries, fraction: float) -> slice:
    if not 0.0 < fraction <= 1.0:
        raise InvalidParameterError(f"fraction must be in (0, 1], got {fraction}")
    n = len(series)
    return slice(n - max(1, int(round(fraction * n))), n)


def tail_mean(series: TimeSeries, channel: str, fraction: float = 0.25) -> Tuple[float, float]:
    """Mean of the last `fraction` of a channel and the standard error of that mean.

    For ensemble averages the error is the mean recorded stderr of the tail;
    otherwise it is the sample standard error of the tail values.
    """
    window = _tail(series, fraction)
    values = series[channel][window]
    mean = float(np.mean(values))
    if series.stderr is not None and channel in series.stderr:
        return mean, float(np.mean(series.stderr[channel][window]))
    if len(values) < 2:
        return mean, 0.0
    return mean, float(stats.sem(values))


def energy_trend(series: TimeSeries, channel: str = "Etot") -> float:
    """Least-squares slope of a channel over the final half of the record."""
    window = _tail(series, 0.5)
    t = series.t[window]
    if len(t) < 3:
        return 0.0
    return float(stats.linregress(t, series[channel][window]).slope)


def non_equilibrium_reason(
    series: TimeSeries, channel: str = "Etot", tolerance: float = TREND_TOLERANCE
) -> Optional[str]:
    """Why a run cannot be read as equilibrated: "truncated", "energy_trend", or None."""
    if series.truncated:
        return "truncated"
    if channel not in series.channels or len(series) < 6:
        return None
    window = _tail(series, 0.5)
    half_duration = series.t[window][-1] - series.t[window][0]
    level = abs(np.mean(series[channel][window]))
    drift = energy_trend(series, channel) * half_duration
    if drift > tolerance * level:
        logger.info("energy still rising: drift %.3g over final half, tail level %.3g", drift, level)
        return "energy_trend"
    return None


def is_non_equilibrated(series: TimeSeries, channel: str = "Etot", tolerance: float = TREND_TOLERANCE) -> bool:
    """True when the run was cut short or the energy still drifts over its final half."""
    return non_equilibrium_reason(series, channel, tolerance) is not None


def zero_crossing_period(t, values) -> float:
    """Mean spacing of upward zero crossings of the de-meaned signal."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(values, dtype=float)
    x = x - x.mean()
    idx = np.flatnonzero((x[:-1] < 0.0) & (x[1:] >= 0.0))
    if idx.size < 2:
        raise InvalidParameterError("need at least two upward zero crossings to estimate a period")
    crossings = t[idx] - x[idx] * (t[idx + 1] - t[idx]) / (x[idx + 1] - x[idx])
    return float(np.mean(np.diff(crossings)))


def sup_deviation(a: TimeSeries, b: TimeSeries, channels: Optional[Iterable[str]] = None) -> Tuple[float, Optional[str]]:
    """Largest |a - b| over shared channels; returns (deviation, worst channel)."""
    if len(a) != len(b) or not np.allclose(a.t, b.t, rtol=1e-9, atol=1e-12):
        raise ShapeError(f"time axes differ ({len(a)} vs {len(b)} samples)")
    names = list(channels) if channels is not None else [n for n in a.names if n in b.channels]
    worst, worst_name = 0.0, None
    for name in names:
        diff = float(np.max(np.abs(a[name] - b[name]))) if len(a) else 0.0
        if worst_name is None or diff > worst:
            worst, worst_name = diff, name
    return worst, worst_name
