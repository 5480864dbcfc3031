"""Classical Langevin reference: velocity Verlet with per-step frozen friction and noise."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import GaussianSource, TimeSeries, next_gaussian, white_noise_scale
from .errors import InvalidStateError, PropagationDivergedError
from .grid import LangevinParams

logger = logging.getLogger(__name__)

CLASSICAL_CHANNELS = ("r", "v", "Ekin", "Epot", "Etot")


@dataclass(frozen=True)
class ClassicalState:
    r: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and math.isfinite(self.v)):
            raise InvalidStateError(f"classical state must be finite, got r={self.r}, v={self.v}")


def _force(params: LangevinParams, r, v, noise):
    return -params.potential.derivative(r) - params.gamma * params.mu * v - noise


def _verlet(params: LangevinParams, r, v, noise):
    """One step on arrays; friction uses the step's starting velocity in both force evaluations."""
    dt, mu = params.dt, params.mu
    f_now = _force(params, r, v, noise)
    r_new = r + v * dt + dt * dt / (2.0 * mu) * f_now
    f_next = _force(params, r_new, v, noise)
    v_new = v + dt / (2.0 * mu) * (f_now + f_next)
    return r_new, v_new


def verlet_step(state: ClassicalState, params: LangevinParams, stream: GaussianSource) -> ClassicalState:
    noise = white_noise_scale(params.sigma_F, params.dt) * next_gaussian(stream)
    r, v = _verlet(params, np.float64(state.r), np.float64(state.v), noise)
    if not (np.isfinite(r) and np.isfinite(v)):
        raise PropagationDivergedError(f"classical step diverged from r={state.r}, v={state.v}")
    return ClassicalState(float(r), float(v))


def _energies(params: LangevinParams, r, v):
    ekin = 0.5 * params.mu * v**2
    epot = params.potential(r)
    return ekin, epot, ekin + epot


def verlet_batch(
    params: LangevinParams,
    r0: np.ndarray,
    v0: np.ndarray,
    etas: np.ndarray,
    record_every: int = 1,
) -> np.ndarray:
    """Rows of (r, v) driven by rows of `etas`; returns (rows, records, 5) in CLASSICAL_CHANNELS order."""
    r = np.array(r0, dtype=float)
    v = np.array(v0, dtype=float)
    n_rows, n_steps = etas.shape
    record_every = max(1, int(record_every))
    out = np.empty((n_rows, n_steps // record_every + 1, len(CLASSICAL_CHANNELS)))
    scale = white_noise_scale(params.sigma_F, params.dt)

    def record(index):
        out[:, index] = np.stack([r, v, *_energies(params, r, v)], axis=-1)

    record(0)
    for n in range(1, n_steps + 1):
        r, v = _verlet(params, r, v, scale * etas[:, n - 1])
        if n % record_every == 0:
            record(n // record_every)
    if not np.all(np.isfinite(out)):
        raise PropagationDivergedError("classical trajectory produced non-finite values; reduce dt")
    return out


def run_classical_langevin(
    params: LangevinParams,
    r0: float = 1.0,
    v0: float = 0.0,
    stream: GaussianSource = None,
    record_every: int = 1,
    bounds: Optional[Tuple[float, float]] = None,
) -> TimeSeries:
    """Single trajectory; leaving `bounds` sets meta['escaped'] instead of aborting."""
    ClassicalState(r0, v0)
    n_steps = params.n_steps
    etas = stream.block(n_steps)[None, :] if stream is not None else np.zeros((1, n_steps))
    values = verlet_batch(params, np.array([r0]), np.array([v0]), etas, record_every)[0]
    t = np.arange(values.shape[0]) * (params.dt * max(1, int(record_every)))
    series = TimeSeries(t, {name: values[:, i] for i, name in enumerate(CLASSICAL_CHANNELS)})
    if bounds is not None:
        lo, hi = bounds
        escaped = bool(np.any((series["r"] < lo) | (series["r"] > hi)))
        series.meta["escaped"] = escaped
        if escaped:
            logger.warning("classical trajectory left [%g, %g]", lo, hi)
    return series


def damped_oscillator(r0: float, v0: float, mu: float, k: float, gamma: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form r(t), v(t) of mu r'' = -k r - gamma mu r'."""
    t = np.asarray(t, dtype=float)
    beta = 0.5 * gamma
    w0_sq = k / mu
    decay = np.exp(-beta * t)
    a = v0 + beta * r0
    b = beta * v0 + w0_sq * r0
    gap = w0_sq - beta**2
    if math.isclose(gap, 0.0, abs_tol=1e-14):
        return decay * (r0 + a * t), decay * (v0 - b * t)
    if gap > 0:
        w = math.sqrt(gap)
        c, s = np.cos(w * t), np.sin(w * t)
        return decay * (r0 * c + a / w * s), decay * (v0 * c - b / w * s)
    w = math.sqrt(-gap)
    c, s = np.cosh(w * t), np.sinh(w * t)
    return decay * (r0 * c + a / w * s), decay * (v0 * c - b / w * s)
