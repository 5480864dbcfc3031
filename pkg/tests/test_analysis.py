from __future__ import annotations

import math

import numpy as np
import pytest

from qlangevin.analysis import (
    energy_trend,
    is_non_equilibrated,
    non_equilibrium_reason,
    sup_deviation,
    tail_mean,
    zero_crossing_period,
)
from qlangevin.core import TimeSeries
from qlangevin.errors import InvalidParameterError, ShapeError


def _series(values, dt=0.1, **kwargs) -> TimeSeries:
    values = np.asarray(values, dtype=float)
    return TimeSeries(np.arange(len(values)) * dt, {"Etot": values}, **kwargs)


def test_tail_mean_of_plain_series():
    series = _series([0.0] * 6 + [1.0, 2.0])
    mean, err = tail_mean(series, "Etot")
    assert mean == pytest.approx(1.5)
    assert err == pytest.approx(0.5)


def test_tail_mean_uses_recorded_stderr():
    values = np.ones(8)
    series = _series(values, stderr={"Etot": np.full(8, 0.02)})
    assert tail_mean(series, "Etot", fraction=0.5) == (pytest.approx(1.0), pytest.approx(0.02))


def test_tail_fraction_is_checked():
    with pytest.raises(InvalidParameterError):
        tail_mean(_series(np.ones(4)), "Etot", fraction=0.0)


def test_energy_trend_is_final_half_slope():
    t = np.arange(100) * 0.1
    values = np.where(t < 5.0, 3.0, 1.0 + 0.2 * t)
    assert energy_trend(_series(values)) == pytest.approx(0.2)


def test_flat_energy_is_equilibrated():
    rng = np.random.default_rng(1)
    assert not is_non_equilibrated(_series(0.6 + 0.001 * rng.normal(size=200)))


def test_rising_energy_is_not_equilibrated():
    t = np.arange(200) * 0.5
    assert is_non_equilibrated(_series(1.0 + 0.02 * t, dt=0.5))


def test_truncated_run_is_not_equilibrated():
    assert is_non_equilibrated(_series(np.ones(10), truncated=True))


def test_short_series_is_not_judged():
    assert not is_non_equilibrated(_series([1.0, 2.0, 3.0]))


def test_reason_names_the_check_that_fired():
    t = np.arange(200) * 0.5
    assert non_equilibrium_reason(_series(1.0 + 0.02 * t, dt=0.5)) == "energy_trend"
    assert non_equilibrium_reason(_series(1.0 + 0.02 * t, dt=0.5, truncated=True)) == "truncated"
    assert non_equilibrium_reason(_series(np.full(200, 0.6))) is None


def test_zero_crossing_period():
    t = np.linspace(0.0, 40.0, 4001)
    assert zero_crossing_period(t, 0.3 + np.sin(2 * math.pi * t / 7.5)) == pytest.approx(7.5, rel=1e-4)
    with pytest.raises(InvalidParameterError):
        zero_crossing_period(t[:100], np.sin(t[:100]))


def test_sup_deviation_picks_worst_channel():
    t = np.arange(5) * 0.1
    a = TimeSeries(t, {"x": np.zeros(5), "y": np.zeros(5)})
    b = TimeSeries(t, {"x": np.full(5, 0.1), "y": np.array([0, 0, 0.3, 0, 0])})
    assert sup_deviation(a, b) == (pytest.approx(0.3), "y")
    assert sup_deviation(a, b, ["x"]) == (pytest.approx(0.1), "x")


def test_sup_deviation_needs_common_time_axis():
    a = TimeSeries(np.arange(5) * 0.1, {"x": np.zeros(5)})
    b = TimeSeries(np.arange(4) * 0.1, {"x": np.zeros(4)})
    with pytest.raises(ShapeError):
        sup_deviation(a, b)
