"""Turn a validated RunConfig into simulation objects and run it."""
from __future__ import annotations

import logging
from typing import Dict

from schemas.config import RunConfig

from .core import Spinor, TimeSeries
from .ensemble import EnsembleSpec, run_ensemble
from .grid import Grid, LangevinParams, build_grid, potential_harmonic, potential_morse
from .two_level import MixedInitial, TlsParams, initial_density_matrix, propagate_bloch, propagate_lindblad

logger = logging.getLogger(__name__)

EXACT_SUFFIX = "exact"


def tls_params(config: RunConfig) -> TlsParams:
    tls = config.tls
    return TlsParams(tls.epsilon, tls.delta, tls.D, tls.xhat)


def initial_spinor(config: RunConfig) -> Spinor:
    return Spinor(*config.tls.amplitudes())


def mixed_initial(config: RunConfig) -> MixedInitial | None:
    mixed = config.tls.mixed
    return None if mixed is None else MixedInitial(mixed.w0, mixed.w1, mixed.alpha)


def grid_from(config: RunConfig) -> Grid:
    return build_grid(config.grid.qmin, config.grid.qmax, config.grid.ng)


def langevin_params(config: RunConfig) -> LangevinParams:
    lv = config.langevin
    if lv.potential == "morse":
        potential = potential_morse(lv.De, lv.a, lv.q0_morse)
    else:
        potential = potential_harmonic(lv.k)
    return LangevinParams(
        mu=lv.mu,
        k=lv.k,
        gamma=lv.gamma,
        kT=lv.kT,
        dt=config.run.dt,
        t_final=config.run.t_final,
        sigma_F_override=lv.sigma_F_override,
        potential=potential,
        add_bath_spring=lv.add_bath_spring,
        spill_threshold=lv.spill_threshold,
    )


def ensemble_spec(config: RunConfig) -> EnsembleSpec:
    job = config.mode
    params = tls_params(config) if job == "tls-sse" else langevin_params(config)
    return EnsembleSpec(
        job=job,
        params=params,
        trajectories=config.run.trajectories,
        base_seed=config.run.seed,
        dt=config.run.dt,
        t_final=config.run.t_final,
        psi0=initial_spinor(config),
        mixed=mixed_initial(config),
        grid=grid_from(config),
        q0=config.langevin.q0,
        sigma=config.langevin.sigma,
        v0=config.langevin.v0,
        record_every=config.run.record_every,
        chunk_size=config.run.chunk_size,
        workers=config.run.workers,
    )


def _exact(config: RunConfig, method: str) -> TimeSeries:
    rho0 = initial_density_matrix(initial_spinor(config), mixed_initial(config))
    kwargs = dict(dt=config.run.dt, t_final=config.run.t_final, method=method, record_every=config.run.record_every)
    if config.mode == "tls-bloch":
        return propagate_bloch(rho0, tls_params(config), **kwargs)
    return propagate_lindblad(rho0, tls_params(config), **kwargs)


def run_config(config: RunConfig) -> Dict[str, TimeSeries]:
    """Run one configuration; the key "" holds the main series, EXACT_SUFFIX the Lindblad reference of SSE runs."""
    logger.info("running mode %s", config.mode)
    if config.mode in {"tls-exact", "tls-bloch"}:
        return {"": _exact(config, config.method)}

    spec = ensemble_spec(config)
    if config.mode == "classical-langevin":
        logger.info("classical sigma_F = %.6g", spec.params.sigma_F)
    elif config.mode == "grid-langevin":
        logger.info(
            "quantum Langevin sigma_F = %.6g, box [%g, %g] x %d, dq = %.4g",
            spec.params.sigma_F,
            spec.box.qmin,
            spec.box.qmax,
            spec.box.ng,
            spec.box.dq,
        )
    results = {"": run_ensemble(spec)}
    if config.mode == "tls-sse":
        exact_config = config.model_copy(update={"mode": "tls-exact"})
        results[EXACT_SUFFIX] = _exact(exact_config, "rk4")
    return results
