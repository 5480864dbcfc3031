from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from qlangevin.analysis import tail_mean
from qlangevin.classical import damped_oscillator
from qlangevin.config_io import parse_config, preset
from qlangevin.core import NoiseStream, Spinor, TimeSeries
from qlangevin.ensemble import EnsembleSpec, average_projectors, pairwise_reduce, run_ensemble
from qlangevin.errors import InvalidParameterError, ShapeError, SpillError
from qlangevin.experiments import run_config
from qlangevin.grid import LangevinParams, build_grid, thermal_reference
from qlangevin.two_level import TLS_CHANNELS, MixedInitial, TlsParams, sse_trajectory

TLS = TlsParams(0.2, 0.2, D=0.1)


def _tls_spec(**kwargs) -> EnsembleSpec:
    base = dict(job="tls-sse", params=TLS, dt=0.01, t_final=5.0, psi0=Spinor.lower(), record_every=10)
    base.update(kwargs)
    return EnsembleSpec(**base)


def _series(rho00, rho11, re=0.0, im=0.0, n=3) -> TimeSeries:
    t = np.arange(n) * 0.1
    values = dict(rho00=rho00, rho11=rho11, re_rho01=re, im_rho01=im)
    return TimeSeries(t, {name: np.full(n, values[name]) for name in TLS_CHANNELS})


def test_single_trajectory_ensemble_is_the_trajectory():
    series = run_ensemble(_tls_spec(trajectories=1, base_seed=17))
    single = sse_trajectory(Spinor.lower(), TLS, 0.01, 5.0, NoiseStream(17, 0), record_every=10)
    for name in TLS_CHANNELS:
        assert np.array_equal(series[name], single[name])
        assert np.all(series.stderr[name] == 0.0)
    assert np.allclose(series["purity"], 1.0, atol=1e-12)
    assert series.meta["trajectories"] == 1


def test_ensemble_is_deterministic():
    a = run_ensemble(_tls_spec(trajectories=20, chunk_size=7, base_seed=4))
    b = run_ensemble(_tls_spec(trajectories=20, chunk_size=7, base_seed=4))
    for name in a.names:
        assert np.array_equal(a[name], b[name])
    c = run_ensemble(_tls_spec(trajectories=20, chunk_size=7, base_seed=5))
    assert not np.array_equal(a["rho11"], c["rho11"])


def test_worker_count_does_not_change_results():
    params = LangevinParams(gamma=0.1, kT=0.1, dt=0.01, t_final=1.0)
    spec = dict(job="grid-langevin", params=params, trajectories=6, chunk_size=2, base_seed=8, record_every=10)
    serial = run_ensemble(EnsembleSpec(**spec, workers=1))
    parallel = run_ensemble(EnsembleSpec(**spec, workers=3))
    for name in serial.names:
        assert np.array_equal(serial[name], parallel[name])
        assert np.array_equal(serial.stderr[name], parallel.stderr[name])


def test_pairwise_reduce_matches_numpy():
    values = np.random.default_rng(0).normal(size=(37, 4))
    n, mean, m2 = pairwise_reduce([(1, row, np.zeros_like(row)) for row in values])
    assert n == 37
    assert np.allclose(mean, values.mean(axis=0))
    assert np.allclose(m2 / (n - 1), values.var(axis=0, ddof=1))


def test_stderr_shrinks_with_trajectory_count():
    def spread(count):
        series = run_ensemble(_tls_spec(trajectories=count, chunk_size=200, t_final=20.0, record_every=100))
        return float(np.mean(series.stderr["rho11"][1:]))

    small, medium, large = spread(100), spread(400), spread(1600)
    assert 1.5 < small / medium < 3.0
    assert 1.5 < medium / large < 3.0


def test_noise_streams_average_to_zero():
    count, steps = 100, 1000
    values = np.concatenate([NoiseStream(12, i).block(steps) for i in range(count)])
    assert abs(values.mean()) < 4 / math.sqrt(count * steps)


def test_mixed_initial_state_is_reproduced_on_average():
    mixed = MixedInitial(0.7, 0.3, math.pi / 4)
    series = run_ensemble(_tls_spec(trajectories=10_000, chunk_size=2500, t_final=0.0, mixed=mixed, psi0=None))
    target = mixed.density_matrix()
    assert len(series) == 1
    for name, value in (("rho00", target.rho00.real), ("rho11", target.rho11.real), ("re_rho01", target.rho01.real)):
        assert abs(series[name][0] - value) <= 4 * series.stderr[name][0] + 1e-12


def test_spill_truncates_the_ensemble():
    params = LangevinParams(gamma=0.0, kT=0.0, sigma_F_override=5.0, dt=0.01, t_final=10.0)
    series = run_ensemble(EnsembleSpec("grid-langevin", params, trajectories=4, chunk_size=2, q0=0.0))
    assert series.truncated
    assert series.meta["abort_time"] < 10.0
    assert series.meta["non_equilibrated"]
    assert np.all(np.isfinite(series["Etot"]))


def test_classical_escape_count():
    params = LangevinParams(gamma=0.0, kT=0.0, dt=0.01, t_final=10.0)
    spec = EnsembleSpec("classical-langevin", params, trajectories=3, q0=3.0, grid=build_grid(-2.0, 2.0, 56))
    assert run_ensemble(spec).meta["escaped"] == 3


def test_average_of_identical_projectors():
    series = _series(0.36, 0.64, 0.0, -0.48)
    mean = average_projectors([series, series, series])
    assert np.allclose(mean["rho11"], 0.64)
    assert np.all(mean.stderr["rho11"] == 0.0)
    assert np.allclose(mean["purity"], 1.0)


def test_average_of_orthogonal_halves_is_maximally_mixed():
    mean = average_projectors([_series(1.0, 0.0)] * 5 + [_series(0.0, 1.0)] * 5)
    assert np.allclose(mean["rho00"], 0.5)
    assert np.allclose(mean["rho11"], 0.5)
    assert np.allclose(mean["purity"], 0.5)


def test_average_rejects_mismatched_lengths():
    with pytest.raises(ShapeError):
        average_projectors([_series(1.0, 0.0, n=3), _series(1.0, 0.0, n=4)])
    with pytest.raises(ShapeError):
        average_projectors([])


def test_invalid_specs():
    with pytest.raises(InvalidParameterError):
        EnsembleSpec("tls-sse", LangevinParams())
    with pytest.raises(InvalidParameterError):
        EnsembleSpec("tls-sse", TLS, trajectories=0)
    with pytest.raises(InvalidParameterError):
        EnsembleSpec("lindblad", TLS)
    with pytest.raises(SpillError):
        EnsembleSpec("grid-langevin", LangevinParams(), q0=4.9)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["fig2.1", "fig2.2", "fig2.3", "fig2.4", "fig2.7"])
def test_sse_average_matches_lindblad(name):
    config = preset(name).model_copy(deep=True)
    config.run.t_final = min(config.run.t_final, 100.0)
    config.run.trajectories = 2000
    config.run.chunk_size = 500
    config.run.record_every = 10
    results = run_config(config)
    average, exact = results[""], results["exact"]
    for channel in TLS_CHANNELS:
        err = np.abs(average[channel] - exact[channel])
        assert np.all(err <= np.maximum(5 * average.stderr[channel], 1e-3)), channel
        assert err.max() <= 0.05, channel


@pytest.mark.slow
@pytest.mark.parametrize("kT", [0.0, 0.1, 0.3])
def test_thermalization_reaches_reference(kT):
    params = LangevinParams(gamma=0.1, kT=kT, dt=0.01, t_final=120.0)
    spec = EnsembleSpec(
        "grid-langevin", params, trajectories=200, base_seed=21, record_every=50, grid=build_grid(-8.0, 8.0, 90)
    )
    series = run_ensemble(spec)
    reference = thermal_reference(1.0, 1.0, kT)
    etot, _ = tail_mean(series, "Etot")
    ekin, _ = tail_mean(series, "Ekin")
    assert etot == pytest.approx(reference["Etot"], abs=0.06)
    assert ekin == pytest.approx(0.25 + kT / 2, abs=0.04)
    assert not series.truncated
    assert series.meta["non_equilibrated_reason"] is None


@pytest.mark.slow
def test_noise_without_friction_heats():
    params = LangevinParams(gamma=0.0, kT=0.1, sigma_F_override=0.1, dt=0.01, t_final=100.0)
    spec = EnsembleSpec(
        "grid-langevin", params, trajectories=200, base_seed=2, record_every=100, grid=build_grid(-8.0, 8.0, 90)
    )
    series = run_ensemble(spec)
    # per-step force 0.14/sqrt(dt), so the energy grows at 0.14**2 / 2 per unit time
    assert stats.linregress(series.t, series["Etot"]).slope == pytest.approx(0.14**2 / 2, rel=0.5)
    etot, _ = tail_mean(series, "Etot")
    assert 1.4 < etot < 2.6
    assert abs(np.mean(series["p"])) < 0.25
    assert not series.truncated
    assert series.meta["non_equilibrated"]
    assert series.meta["non_equilibrated_reason"] == "energy_trend"


@pytest.mark.slow
@pytest.mark.parametrize("name", ["fig3.1", "fig3.5", "fig3.6", "fig3.7"])
def test_langevin_presets_record_the_whole_run(name):
    config = preset(name).model_copy(deep=True)
    config.run.trajectories = 8
    config.run.record_every = 100
    series = run_config(config)[""]
    assert not series.truncated
    assert series.t[-1] == pytest.approx(config.run.t_final)


@pytest.mark.slow
def test_hot_preset_is_flagged_non_equilibrated():
    config = preset("fig3.8").model_copy(deep=True)
    config.run.trajectories = 16
    series = run_config(config)[""]
    assert series.meta["non_equilibrated"]
    assert series.meta["non_equilibrated_reason"] == "truncated"
    assert series.meta["abort_time"] < config.run.t_final


@pytest.mark.slow
def test_morse_run_is_flagged_non_equilibrated():
    config = parse_config(
        "mode = grid-langevin\nlangevin.potential = morse\nlangevin.De = 1.0\nlangevin.a = 1.0\n"
        "langevin.gamma = 0.1\nlangevin.kT = 0.1\nrun.t_final = 20.0\nrun.trajectories = 4\nrun.record_every = 10\n"
    )
    series = run_config(config)[""]
    assert series.meta["non_equilibrated"]
    assert series.meta["non_equilibrated_reason"] in ("truncated", "energy_trend")


@pytest.mark.slow
def test_damped_preset_follows_closed_form():
    results = run_config(preset("fig3.2"))
    series = results[""]
    _, v = damped_oscillator(1.0, 0.0, 1.0, 1.0, 0.5, series.t)
    assert np.max(np.abs(series["p"] - v)) < 2e-2
    assert series["Etot"][-1] == pytest.approx(0.5, abs=1e-3)
