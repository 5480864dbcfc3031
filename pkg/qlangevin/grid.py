"""Fourier-grid particle, Chebyshev short-time propagator and the mean-field quantum Langevin step."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Protocol, Tuple

import numpy as np
from scipy import fft
from scipy.special import erfc, jv

from .analysis import non_equilibrium_reason
from .core import GaussianSource, TimeSeries, next_gaussian, white_noise_scale
from .errors import (
    InvalidParameterError,
    NumericalInconsistencyError,
    SpectralBoundError,
    SpillError,
)

logger = logging.getLogger(__name__)

OBSERVABLES = ("q", "p", "Ekin", "Epot", "Etot")

CHEBYSHEV_TOLERANCE = 1e-14
CHEBYSHEV_MAX_TERMS = 20000
SPECTRAL_PADDING = 0.05
NORM_DRIFT_LIMIT = 1e-8
MOMENTUM_IMAG_LIMIT = 1e-8
BOUNDARY_POINTS = 2


# ---------------------------------------------------------------------------
# Grid and states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    qmin: float
    qmax: float
    ng: int

    @property
    def dq(self) -> float:
        return (self.qmax - self.qmin) / self.ng

    @property
    def length(self) -> float:
        return self.qmax - self.qmin

    @property
    def q(self) -> np.ndarray:
        return self.qmin + self.dq * np.arange(self.ng)

    @property
    def k_values(self) -> np.ndarray:
        """Momenta in discrete-Fourier order, spanning +-pi/dq."""
        return 2.0 * np.pi * fft.fftfreq(self.ng, d=self.dq)

    @property
    def kinetic_max(self) -> float:
        return float(np.max(self.k_values**2))


def build_grid(qmin: float = -5.0, qmax: float = 5.0, ng: int = 56) -> Grid:
    if not qmax > qmin:
        raise InvalidParameterError(f"grid bounds must satisfy qmax > qmin, got [{qmin}, {qmax}]")
    if int(ng) != ng or ng < 8:
        raise InvalidParameterError(f"grid needs an integer ng >= 8, got {ng}")
    return Grid(float(qmin), float(qmax), int(ng))


@dataclass
class GridState:
    psi: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (self.grid.ng,):
            raise InvalidParameterError(f"wavefunction has shape {self.psi.shape}, grid has {self.grid.ng} points")

    def norm(self) -> float:
        return float(norms(self.grid, self.psi[None, :])[0])

    def boundary_probability(self) -> float:
        return float(boundary_probabilities(self.grid, self.psi[None, :])[0])


def norms(grid: Grid, psi: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(psi) ** 2, axis=-1) * grid.dq


def boundary_probabilities(grid: Grid, psi: np.ndarray) -> np.ndarray:
    """Probability on the outermost BOUNDARY_POINTS points at each end, per row."""
    dens = np.abs(psi) ** 2
    edge = dens[..., :BOUNDARY_POINTS].sum(axis=-1) + dens[..., -BOUNDARY_POINTS:].sum(axis=-1)
    return edge * grid.dq


def gaussian_state(grid: Grid, q0: float = 1.0, sigma: float = 1.0, spill_threshold: float = 1e-4) -> GridState:
    """Normalized A exp(-(q - q0)^2 / (2 sigma^2)) sampled on the grid."""
    if sigma <= 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    # |psi|^2 is a normal density with standard deviation sigma / sqrt(2)
    outside = 0.5 * erfc((grid.qmax - q0) / sigma) + 0.5 * erfc((q0 - grid.qmin) / sigma)
    if outside > spill_threshold:
        raise SpillError(
            f"Gaussian at q0={q0}, sigma={sigma} puts {outside:.2e} of its mass outside [{grid.qmin}, {grid.qmax}]",
            time=0.0,
            boundary_probability=outside,
        )
    psi = np.exp(-((grid.q - q0) ** 2) / (2.0 * sigma**2)).astype(complex)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dq)
    return GridState(psi, grid)


# ---------------------------------------------------------------------------
# Potentials and parameters
# ---------------------------------------------------------------------------


class Potential(Protocol):
    def __call__(self, q: np.ndarray) -> np.ndarray: ...

    def derivative(self, q: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class HarmonicPotential:
    k: float

    def __call__(self, q):
        return 0.5 * self.k * np.asarray(q, dtype=float) ** 2

    def derivative(self, q):
        return self.k * np.asarray(q, dtype=float)


@dataclass(frozen=True)
class MorsePotential:
    De: float
    a: float
    q0: float = 0.0

    def __post_init__(self):
        if self.De <= 0 or self.a <= 0:
            raise InvalidParameterError(f"Morse potential needs De > 0 and a > 0, got De={self.De}, a={self.a}")

    def __call__(self, q):
        return self.De * (1.0 - np.exp(-self.a * (np.asarray(q, dtype=float) - self.q0))) ** 2

    def derivative(self, q):
        e = np.exp(-self.a * (np.asarray(q, dtype=float) - self.q0))
        return 2.0 * self.De * self.a * e * (1.0 - e)


def potential_harmonic(k: float) -> HarmonicPotential:
    return HarmonicPotential(k)


def potential_morse(De: float, a: float, q0: float = 0.0) -> MorsePotential:
    return MorsePotential(De, a, q0)


def sigma_f_from_fdt(kT: float, mu: float, gamma: float) -> float:
    """Force-fluctuation amplitude sigma_F = sqrt(kT mu gamma)."""
    if kT < 0 or mu < 0 or gamma < 0:
        raise InvalidParameterError(f"FDT inputs must be nonnegative, got kT={kT}, mu={mu}, gamma={gamma}")
    return math.sqrt(kT * mu * gamma)


def effective_spring_constant(mu: float, gamma: float, dt: float) -> float:
    """M Omega^2 = mu gamma / dt of the single effective bath mode."""
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    return mu * gamma / dt


def thermal_reference(mu: float, k: float, kT: float) -> Dict[str, float]:
    """Equilibrium energies E_gs + kT and E_k,gs + kT/2 of the quantum harmonic oscillator."""
    omega = math.sqrt(k / mu)
    return {"Etot": 0.5 * omega + kT, "Ekin": 0.25 * omega + 0.5 * kT, "Epot": 0.25 * omega + 0.5 * kT}


@dataclass(frozen=True)
class LangevinParams:
    mu: float = 1.0
    k: float = 1.0
    gamma: float = 0.0
    kT: float = 0.0
    dt: float = 0.01
    t_final: float = 100.0
    sigma_F_override: Optional[float] = None
    potential: Optional[Potential] = None
    add_bath_spring: bool = False
    spill_threshold: float = 1e-4

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidParameterError(f"mass mu must be positive, got {self.mu}")
        if self.gamma < 0 or self.kT < 0:
            raise InvalidParameterError(f"gamma and kT must be >= 0, got gamma={self.gamma}, kT={self.kT}")
        if self.dt <= 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0:
            raise InvalidParameterError(f"t_final must be >= 0, got {self.t_final}")
        if self.sigma_F_override is not None and self.sigma_F_override < 0:
            raise InvalidParameterError(f"sigma_F_override must be >= 0, got {self.sigma_F_override}")
        if self.potential is None:
            object.__setattr__(self, "potential", HarmonicPotential(self.k))

    @property
    def sigma_F(self) -> float:
        if self.sigma_F_override is not None:
            return self.sigma_F_override
        return sigma_f_from_fdt(self.kT, self.mu, self.gamma)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def system_potential(self, q: np.ndarray) -> np.ndarray:
        return self.potential(q)

    def dynamics_potential(self, q: np.ndarray) -> np.ndarray:
        """System potential plus, when enabled, the effective bath spring (1/2) M Omega^2 q^2."""
        v = self.potential(q)
        if self.add_bath_spring:
            v = v + 0.5 * effective_spring_constant(self.mu, self.gamma, self.dt) * np.asarray(q) ** 2
        return v


# ---------------------------------------------------------------------------
# Fourier-grid operators
# ---------------------------------------------------------------------------


def kinetic_apply(grid: Grid, psi: np.ndarray, mu: float) -> np.ndarray:
    """p^2 / (2 mu) applied in momentum space along the last axis."""
    return fft.ifft(grid.k_values**2 / (2.0 * mu) * fft.fft(psi, axis=-1), axis=-1)


def hamiltonian_apply(grid: Grid, psi: np.ndarray, potential: np.ndarray, mu: float) -> np.ndarray:
    return kinetic_apply(grid, psi, mu) + potential * psi


def momenta(grid: Grid, psi: np.ndarray) -> np.ndarray:
    """<p> per row from the momentum-space density; real by construction."""
    phi = fft.fft(psi, axis=-1)
    return np.sum(np.abs(phi) ** 2 * grid.k_values, axis=-1) * grid.dq / grid.ng


def observables_batch(grid: Grid, psi: np.ndarray, mu: float, potential: np.ndarray) -> Dict[str, np.ndarray]:
    dq = grid.dq
    dens = np.abs(psi) ** 2
    phi = fft.fft(psi, axis=-1)
    p_psi = fft.ifft(grid.k_values * phi, axis=-1)
    p_complex = np.sum(psi.conj() * p_psi, axis=-1) * dq
    residue = np.max(np.abs(p_complex.imag)) if p_complex.size else 0.0
    if residue > MOMENTUM_IMAG_LIMIT:
        raise NumericalInconsistencyError(f"<p> has imaginary residue {residue:.3e}")
    ekin = np.sum(np.abs(phi) ** 2 * grid.k_values**2, axis=-1) / (2.0 * mu) * dq / grid.ng
    epot = np.sum(dens * potential, axis=-1) * dq
    return {
        "q": np.sum(dens * grid.q, axis=-1) * dq,
        "p": p_complex.real,
        "Ekin": ekin,
        "Epot": epot,
        "Etot": ekin + epot,
    }


def expect_observables(state: GridState, params: LangevinParams) -> Dict[str, float]:
    values = observables_batch(state.grid, state.psi[None, :], params.mu, params.system_potential(state.grid.q))
    return {name: float(v[0]) for name, v in values.items()}


# ---------------------------------------------------------------------------
# Chebyshev propagator
# ---------------------------------------------------------------------------


def spectral_bounds(grid: Grid, potential: np.ndarray, mu: float) -> Tuple[np.ndarray, np.ndarray]:
    """Padded (E_min, E_max) per row of the frozen Hamiltonian T + V."""
    potential = np.atleast_2d(potential)
    vmin = potential.min(axis=-1)
    vmax = potential.max(axis=-1)
    emax = grid.kinetic_max / (2.0 * mu) + vmax
    pad = SPECTRAL_PADDING * (emax - vmin)
    return vmin - pad, emax + pad


def _chebyshev_coefficients(radius: np.ndarray, tol: float, max_terms: int) -> np.ndarray:
    """(rows, terms) coefficients (2 - delta_n0) (-i)^n J_n(R), zeroed past each row's own cutoff."""
    n_probe = int(2.0 * float(radius.max())) + 60
    if n_probe > max_terms:
        raise SpectralBoundError(f"spectral radius {radius.max():.1f} needs more than {max_terms} Chebyshev terms")
    orders = np.arange(n_probe)
    bessel = jv(orders[None, :], radius[:, None])
    small = (np.abs(bessel) < tol) & (orders[None, :] > radius[:, None])
    if not np.all(small.any(axis=1)):
        raise SpectralBoundError("Chebyshev expansion did not converge within the coefficient budget")
    cutoff = small.argmax(axis=1)
    coeffs = bessel * (-1j) ** orders[None, :]
    coeffs[:, 1:] *= 2.0
    coeffs[orders[None, :] >= cutoff[:, None]] = 0.0
    return coeffs[:, : int(cutoff.max())]


def chebyshev_propagate(
    grid: Grid,
    psi: np.ndarray,
    potential: np.ndarray,
    mu: float,
    dt: float,
    tol: float = CHEBYSHEV_TOLERANCE,
    max_terms: int = CHEBYSHEV_MAX_TERMS,
) -> np.ndarray:
    """exp(-i H dt) psi for each row, H = T + V with V frozen over the step."""
    if dt < 0:
        raise InvalidParameterError(f"dt must be >= 0, got {dt}")
    psi = np.atleast_2d(np.asarray(psi, dtype=complex))
    potential = np.broadcast_to(potential, psi.shape)
    if dt == 0:
        return psi.copy()
    emin, emax = spectral_bounds(grid, potential, mu)
    half_span = (0.5 * (emax - emin))[:, None]
    center = (0.5 * (emax + emin))[:, None]
    coeffs = _chebyshev_coefficients(half_span[:, 0] * dt, tol, max_terms)

    def scaled(phi):
        return (hamiltonian_apply(grid, phi, potential, mu) - center * phi) / half_span

    previous = psi
    current = scaled(psi)
    acc = coeffs[:, :1] * previous
    if coeffs.shape[1] > 1:
        acc = acc + coeffs[:, 1:2] * current
    for n in range(2, coeffs.shape[1]):
        previous, current = current, 2.0 * scaled(current) - previous
        acc = acc + coeffs[:, n : n + 1] * current
    return np.exp(-1j * center * dt) * acc


def chebyshev_step(state: GridState, frozen_potential: np.ndarray, mu: float, dt: float) -> GridState:
    before = state.norm()
    psi = chebyshev_propagate(state.grid, state.psi[None, :], frozen_potential[None, :], mu, dt)[0]
    after = float(norms(state.grid, psi[None, :])[0])
    if abs(after - before) > NORM_DRIFT_LIMIT:
        raise SpectralBoundError(f"norm drifted by {after - before:.2e} in one Chebyshev step")
    return GridState(psi, state.grid)


# ---------------------------------------------------------------------------
# Quantum Langevin dynamics
# ---------------------------------------------------------------------------


def step_potential(grid: Grid, params: LangevinParams, p_mean: np.ndarray, force: np.ndarray) -> np.ndarray:
    """V(q) + (gamma <p> + f) q per row; the bracket is frozen for the whole step."""
    linear = params.gamma * np.asarray(p_mean) + np.asarray(force)
    return params.dynamics_potential(grid.q)[None, :] + linear[:, None] * grid.q[None, :]


def langevin_step(state: GridState, params: LangevinParams, stream: GaussianSource) -> GridState:
    """One mean-field friction + random force step; raises SpillError when the box overflows."""
    p_mean = momenta(state.grid, state.psi[None, :])
    force = white_noise_scale(params.sigma_F, params.dt) * next_gaussian(stream)
    v_step = step_potential(state.grid, params, p_mean, np.array([force]))[0]
    new_state = chebyshev_step(state, v_step, params.mu, params.dt)
    edge = new_state.boundary_probability()
    if edge > params.spill_threshold:
        raise SpillError(f"boundary probability {edge:.2e} exceeds {params.spill_threshold:.1e}", boundary_probability=edge)
    return new_state


@dataclass
class BatchResult:
    """Observables of a batch of trajectories; records past a row's spill are NaN."""

    t: np.ndarray
    values: np.ndarray  # (rows, records, channels)
    valid_records: np.ndarray  # (rows,)
    channels: Tuple[str, ...]


def langevin_batch(
    grid: Grid,
    params: LangevinParams,
    psi0: np.ndarray,
    etas: np.ndarray,
    record_every: int = 1,
) -> BatchResult:
    """Propagate rows of psi0, each driven by its own row of standard-normal variates."""
    psi = np.array(np.atleast_2d(psi0), dtype=complex)
    n_rows, n_steps = etas.shape
    record_every = max(1, int(record_every))
    n_records = n_steps // record_every + 1
    scale = white_noise_scale(params.sigma_F, params.dt)
    v_system = params.system_potential(grid.q)

    values = np.full((n_rows, n_records, len(OBSERVABLES)), np.nan)
    valid = np.full(n_rows, n_records)
    alive = np.ones(n_rows, dtype=bool)

    def record(index):
        obs = observables_batch(grid, psi, params.mu, v_system)
        block = np.stack([obs[name] for name in OBSERVABLES], axis=-1)
        block[~alive] = np.nan
        values[:, index] = block

    record(0)
    for n in range(1, n_steps + 1):
        p_mean = momenta(grid, psi)
        v_step = step_potential(grid, params, p_mean, scale * etas[:, n - 1])
        before = norms(grid, psi)
        psi = chebyshev_propagate(grid, psi, v_step, params.mu, params.dt)
        drift = float(np.max(np.abs(norms(grid, psi) - before)[alive]))
        if drift > NORM_DRIFT_LIMIT:
            raise SpectralBoundError(f"norm drifted by {drift:.2e} in the Chebyshev step at t={n * params.dt:.3f}")
        spilled = alive & (boundary_probabilities(grid, psi) > params.spill_threshold)
        if spilled.any():
            valid[spilled] = (n - 1) // record_every + 1
            alive &= ~spilled
            psi[spilled] = 0.0
            logger.warning("%d trajectories spilled at t=%.3f", int(spilled.sum()), n * params.dt)
            if not alive.any():
                break
        if n % record_every == 0:
            record(n // record_every)
    t = np.arange(n_records) * (params.dt * record_every)
    return BatchResult(t, values, valid, OBSERVABLES)


def run_quantum_langevin(
    params: LangevinParams,
    psi0: GridState,
    stream: GaussianSource,
    record_every: int = 1,
) -> TimeSeries:
    """Single quantum Langevin trajectory; a spill cuts the series and marks it truncated."""
    etas = stream.block(params.n_steps)[None, :]
    result = langevin_batch(psi0.grid, params, psi0.psi[None, :], etas, record_every)
    n_valid = int(result.valid_records[0])
    series = TimeSeries(
        result.t,
        {name: result.values[0, :, i] for i, name in enumerate(result.channels)},
    ).head(n_valid)
    series.truncated = n_valid < len(result.t)
    if series.truncated:
        series.meta["abort_time"] = float(n_valid * params.dt * max(1, int(record_every)))
    reason = non_equilibrium_reason(series)
    series.meta["non_equilibrated"] = reason is not None
    series.meta["non_equilibrated_reason"] = reason
    return series
