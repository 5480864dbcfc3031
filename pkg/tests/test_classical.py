from __future__ import annotations

import math

import numpy as np
import pytest

from qlangevin.analysis import tail_mean, zero_crossing_period
from qlangevin.classical import (
    ClassicalState,
    damped_oscillator,
    run_classical_langevin,
    verlet_step,
)
from qlangevin.core import NoiseStream
from qlangevin.ensemble import EnsembleSpec, run_ensemble
from qlangevin.errors import InvalidStateError
from qlangevin.grid import LangevinParams, build_grid


def test_free_drift():
    params = LangevinParams(k=0.0, gamma=0.0, kT=0.0, dt=0.01)
    state = verlet_step(ClassicalState(0.0, 1.0), params, NoiseStream(0, 0))
    assert state.r == 0.01
    assert state.v == 1.0


def test_state_must_be_finite():
    with pytest.raises(InvalidStateError):
        ClassicalState(float("nan"), 0.0)


def test_harmonic_energy_and_period():
    params = LangevinParams(gamma=0.0, kT=0.0, dt=0.01, t_final=200 * math.pi)
    series = run_classical_langevin(params, 1.0, 0.0)
    drift = np.max(np.abs(series["Etot"] - 0.5)) / 0.5
    assert drift < 1e-3
    assert zero_crossing_period(series.t, series["r"]) == pytest.approx(2 * math.pi, rel=1e-3)


def test_damped_velocity_matches_closed_form():
    params = LangevinParams(gamma=0.5, kT=0.0, dt=0.001, t_final=20.0)
    series = run_classical_langevin(params, 1.0, 0.0, record_every=10)
    r, v = damped_oscillator(1.0, 0.0, 1.0, 1.0, 0.5, series.t)
    assert np.max(np.abs(series["v"] - v)) < 1e-3
    assert np.max(np.abs(series["r"] - r)) < 1e-3


def test_damped_velocity_envelope():
    params = LangevinParams(gamma=0.5, kT=0.0, dt=0.01, t_final=20.0)
    series = run_classical_langevin(params, 1.0, 0.0)
    early = np.abs(series["v"]).max()
    assert np.abs(series["v"][series.t >= 8.0]).max() < early / math.e


def test_cold_bath_drains_energy():
    params = LangevinParams(gamma=0.5, kT=0.0, dt=0.01, t_final=60.0)
    series = run_classical_langevin(params, 1.0, 0.0, NoiseStream(1, 0))
    assert series["Etot"][-1] < 1e-5


@pytest.mark.parametrize("gamma", [0.5, 2.0, 5.0])
def test_damped_oscillator_is_consistent(gamma):
    t = np.linspace(0.0, 10.0, 20001)
    r, v = damped_oscillator(1.0, 0.3, 1.0, 1.0, gamma, t)
    assert r[0] == pytest.approx(1.0) and v[0] == pytest.approx(0.3)
    assert np.max(np.abs(np.gradient(r, t, edge_order=2) - v)) < 1e-4
    acc = np.gradient(v, t, edge_order=2)
    assert np.max(np.abs(acc[1:-1] + r[1:-1] + gamma * v[1:-1])) < 1e-4


def test_escape_is_flagged():
    params = LangevinParams(gamma=0.0, kT=0.0, dt=0.01, t_final=10.0)
    series = run_classical_langevin(params, 3.0, 0.0, bounds=(-2.0, 2.0))
    assert series.meta["escaped"]
    series = run_classical_langevin(params, 1.0, 0.0, bounds=(-2.0, 2.0))
    assert not series.meta["escaped"]


@pytest.mark.slow
def test_equipartition():
    params = LangevinParams(gamma=0.1, kT=1.0, dt=0.01, t_final=200.0)
    spec = EnsembleSpec(
        "classical-langevin", params, trajectories=4000, base_seed=3, record_every=10, chunk_size=1000, grid=build_grid(-50.0, 50.0, 56)
    )
    series = run_ensemble(spec)
    ekin, _ = tail_mean(series, "Ekin", fraction=0.5)
    assert ekin == pytest.approx(0.5, abs=0.03)
