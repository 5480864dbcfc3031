"""Two-level system: exact Lindblad propagation, Bloch representation and the stochastic unraveling."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from scipy.linalg import expm

from .core import (
    IDENTITY2,
    SIGMA_X,
    SIGMA_Z,
    DensityMatrix2,
    GaussianSource,
    NoiseStream,
    Spinor,
    TimeSeries,
    bloch_from_dm,
    min_eigenvalue,
    next_uniform,
    white_noise_scale,
)
from .errors import InvalidParameterError, PropagationDivergedError

logger = logging.getLogger(__name__)

XHAT_CHOICES = ("sigma_z", "sigma_x", "h0")
TLS_CHANNELS = ("rho00", "rho11", "re_rho01", "im_rho01")

POSITIVITY_TOLERANCE = 1e-6
TRACE_TOLERANCE = 1e-10


def sigma_f_from_D(D: float) -> float:
    """Noise amplitude of the unraveling, 2 sigma_f^2 = D."""
    if D < 0:
        raise InvalidParameterError(f"Lindblad coefficient D must be >= 0, got {D}")
    return math.sqrt(D / 2.0)


@dataclass(frozen=True)
class TlsParams:
    epsilon: float
    delta: float
    D: float = 0.0
    xhat: Literal["sigma_z", "sigma_x", "h0"] = "sigma_z"

    def __post_init__(self):
        if self.D < 0:
            raise InvalidParameterError(f"Lindblad coefficient D must be >= 0, got {self.D}")
        if self.xhat not in XHAT_CHOICES:
            raise InvalidParameterError(f"xhat must be one of {XHAT_CHOICES}, got {self.xhat!r}")

    @property
    def sigma_f(self) -> float:
        return sigma_f_from_D(self.D)


@dataclass(frozen=True)
class MixedInitial:
    """rho(0) = w0 |psi0><psi0| + w1 |psi1><psi1| with psi0 = (cos a, sin a), psi1 = (-sin a, cos a)."""

    w0: float
    w1: float
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.w0 <= 1.0 and 0.0 <= self.w1 <= 1.0) or abs(self.w0 + self.w1 - 1.0) > 1e-12:
            raise InvalidParameterError(f"weights must lie in [0,1] and sum to 1, got ({self.w0}, {self.w1})")

    def states(self) -> Tuple[Spinor, Spinor]:
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        return Spinor(complex(c), complex(s)), Spinor(complex(-s), complex(c))

    def density_matrix(self) -> DensityMatrix2:
        psi0, psi1 = (p.as_array() for p in self.states())
        rho = self.w0 * np.outer(psi0, psi0.conj()) + self.w1 * np.outer(psi1, psi1.conj())
        return DensityMatrix2.from_matrix(rho)


# ---------------------------------------------------------------------------
# Hamiltonian and generators
# ---------------------------------------------------------------------------


def tls_hamiltonian(epsilon: float, delta: float) -> np.ndarray:
    """H0 = (eps/2) sz + (Delta/2) sx."""
    return 0.5 * epsilon * SIGMA_Z + 0.5 * delta * SIGMA_X


def tls_eigenvalues(epsilon: float, delta: float) -> Tuple[float, float]:
    half = 0.5 * math.hypot(epsilon, delta)
    return -half, half


def coupling_operator(params: TlsParams) -> np.ndarray:
    if params.xhat == "sigma_z":
        return SIGMA_Z.copy()
    if params.xhat == "sigma_x":
        return SIGMA_X.copy()
    return tls_hamiltonian(params.epsilon, params.delta)


def lindblad_rhs(rho: DensityMatrix2, params: TlsParams) -> np.ndarray:
    """-i[H0, rho] - (D/2)[x, [x, rho]]."""
    h = tls_hamiltonian(params.epsilon, params.delta)
    x = coupling_operator(params)
    r = rho.to_matrix()
    inner = x @ r - r @ x
    return -1j * (h @ r - r @ h) - 0.5 * params.D * (x @ inner - inner @ x)


def lindblad_superoperator(params: TlsParams) -> np.ndarray:
    """4x4 generator acting on the row-major vec(rho) = (rho00, rho01, rho10, rho11)."""
    h = tls_hamiltonian(params.epsilon, params.delta)
    x = coupling_operator(params)
    x2 = x @ x
    unitary = -1j * (np.kron(h, IDENTITY2) - np.kron(IDENTITY2, h.T))
    dephasing = np.kron(x2, IDENTITY2) - 2.0 * np.kron(x, x.T) + np.kron(IDENTITY2, x2.T)
    return unitary - 0.5 * params.D * dephasing


def lindblad_decay_rate(params: TlsParams) -> float:
    """Slowest nonzero relaxation rate of the master equation (0 when nothing decays)."""
    rates = -np.linalg.eigvals(lindblad_superoperator(params)).real
    rates = rates[rates > 1e-12]
    return float(rates.min()) if rates.size else 0.0


def bloch_generator(params: TlsParams) -> np.ndarray:
    """G with d r/dt = G r for the half-Pauli Bloch vector; derived from the master equation with x = sz."""
    if params.xhat != "sigma_z":
        raise NotImplementedError(f"Bloch generator is only derived for xhat='sigma_z', not {params.xhat!r}")
    eps, delta, d2 = params.epsilon, params.delta, 2.0 * params.D
    return np.array(
        [
            [-d2, -eps, 0.0],
            [eps, -d2, -delta],
            [0.0, delta, 0.0],
        ]
    )


# ---------------------------------------------------------------------------
# Exact propagation
# ---------------------------------------------------------------------------


def _n_steps(dt: float, t_final: float) -> int:
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise InvalidParameterError(f"t_final must be >= 0, got {t_final}")
    return int(round(t_final / dt))


def _dm_series(t: np.ndarray, vecs: np.ndarray, **meta) -> TimeSeries:
    rho00, rho01, rho11 = vecs[:, 0].real, vecs[:, 1], vecs[:, 3].real
    purity = rho00**2 + rho11**2 + 2.0 * np.abs(rho01) ** 2
    return TimeSeries(
        t,
        {
            "rho00": rho00,
            "rho11": rho11,
            "re_rho01": rho01.real,
            "im_rho01": rho01.imag,
            "purity": purity,
        },
        meta=dict(meta),
    )


def _check_physical(t: np.ndarray, vecs: np.ndarray) -> None:
    trace = (vecs[:, 0] + vecs[:, 3]).real
    bad_trace = np.flatnonzero(np.abs(trace - 1.0) > TRACE_TOLERANCE)
    if bad_trace.size:
        i = bad_trace[0]
        raise PropagationDivergedError(f"trace drifted to {trace[i]:.12f} at t={t[i]:.4f}")
    lam = min_eigenvalue(vecs[:, 0].real, vecs[:, 3].real, vecs[:, 1])
    bad = np.flatnonzero(lam < -POSITIVITY_TOLERANCE)
    if bad.size:
        i = bad[0]
        raise PropagationDivergedError(
            f"density matrix lost positivity (eigenvalue {lam[i]:.3e}) at t={t[i]:.4f}; reduce dt"
        )


def propagate_lindblad(
    rho0: DensityMatrix2,
    params: TlsParams,
    dt: float = 0.001,
    t_final: float = 100.0,
    method: Literal["rk4", "euler"] = "rk4",
    record_every: int = 1,
) -> TimeSeries:
    """Integrate the master equation; `euler` is the first-order (1 - iL dt)^n scheme."""
    rho0.validate()
    n_steps = _n_steps(dt, t_final)
    hl = dt * lindblad_superoperator(params)
    if method == "rk4":
        step = np.eye(4, dtype=complex)
        term = np.eye(4, dtype=complex)
        for k in range(1, 5):
            term = term @ hl / k
            step = step + term
    elif method == "euler":
        step = np.eye(4, dtype=complex) + hl
    else:
        raise InvalidParameterError(f"unknown Lindblad method {method!r}")

    record_every = max(1, int(record_every))
    n_records = n_steps // record_every + 1
    vecs = np.empty((n_records, 4), dtype=complex)
    vec = rho0.to_matrix().reshape(4)
    vecs[0] = vec
    for n in range(1, n_steps + 1):
        vec = step @ vec
        if n % record_every == 0:
            vecs[n // record_every] = vec
    t = np.arange(n_records) * (dt * record_every)
    _check_physical(t, vecs)
    logger.debug("lindblad %s: %d steps, dt=%g", method, n_steps, dt)
    return _dm_series(t, vecs, method=method, dt=dt)


def propagate_bloch(
    rho0: DensityMatrix2,
    params: TlsParams,
    dt: float = 0.001,
    t_final: float = 100.0,
    method: Literal["expm", "euler"] = "expm",
    record_every: int = 1,
) -> TimeSeries:
    """Propagate the Bloch 3-vector; `expm` steps exactly, `euler` applies (1 + G dt) per step."""
    rho0.validate()
    n_steps = _n_steps(dt, t_final)
    g = bloch_generator(params)
    if method == "expm":
        step = expm(g * dt)
    elif method == "euler":
        step = np.eye(3) + g * dt
    else:
        raise InvalidParameterError(f"unknown Bloch method {method!r}")

    record_every = max(1, int(record_every))
    n_records = n_steps // record_every + 1
    rs = np.empty((n_records, 3))
    r = bloch_from_dm(rho0).as_array()
    rs[0] = r
    for n in range(1, n_steps + 1):
        r = step @ r
        if n % record_every == 0:
            rs[n // record_every] = r
    vecs = np.empty((n_records, 4), dtype=complex)
    vecs[:, 0] = 0.5 + rs[:, 2]
    vecs[:, 1] = rs[:, 0] - 1j * rs[:, 1]
    vecs[:, 2] = rs[:, 0] + 1j * rs[:, 1]
    vecs[:, 3] = 0.5 - rs[:, 2]
    t = np.arange(n_records) * (dt * record_every)
    _check_physical(t, vecs)
    return _dm_series(t, vecs, method=f"bloch-{method}", dt=dt)


def pure_dephasing_coherence(rho01_0: complex, epsilon: float, D: float, t) -> np.ndarray:
    """Closed-form rho01(t) for x = H0 and Delta = 0."""
    t = np.asarray(t, dtype=float)
    return rho01_0 * np.exp(-1j * epsilon * t - 0.5 * D * epsilon**2 * t)


def exact_unitary_populations(psi0: Spinor, params: TlsParams, t) -> Tuple[np.ndarray, np.ndarray]:
    """|c0(t)|^2, |c1(t)|^2 for the closed system, via the eigendecomposition of H0."""
    energies, vectors = np.linalg.eigh(tls_hamiltonian(params.epsilon, params.delta))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    amplitudes = vectors.conj().T @ psi0.as_array()
    phases = np.exp(-1j * np.outer(t, energies)) * amplitudes
    psi_t = phases @ vectors.T
    return np.abs(psi_t[:, 0]) ** 2, np.abs(psi_t[:, 1]) ** 2


def rabi_populations(epsilon: float, omega_drive: float, rabi_omega: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """Driven two-level populations starting in state 1; oscillation argument is Omega_R t / 2."""
    detuning = omega_drive - epsilon
    omega_r_sq = rabi_omega**2 + detuning**2
    t = np.asarray(t, dtype=float)
    if omega_r_sq == 0.0:
        return np.ones_like(t), np.zeros_like(t)
    omega_r = math.sqrt(omega_r_sq)
    transfer = rabi_omega**2 / omega_r_sq * np.sin(0.5 * omega_r * t) ** 2
    return 1.0 - transfer, transfer


# ---------------------------------------------------------------------------
# Stochastic Schroedinger unraveling
# ---------------------------------------------------------------------------


def _coupling_vector(params: TlsParams) -> Tuple[float, float]:
    """(x-component, z-component) of the coupling operator in the Pauli basis."""
    if params.xhat == "sigma_z":
        return 0.0, 1.0
    if params.xhat == "sigma_x":
        return 1.0, 0.0
    return 0.5 * params.delta, 0.5 * params.epsilon


def sse_step_batch(psi: np.ndarray, params: TlsParams, delta_t: float, f_values: np.ndarray) -> np.ndarray:
    """One split step U = A B A for every row of `psi` (shape (n, 2)), each with its own frozen f."""
    f_values = np.asarray(f_values, dtype=float)
    theta = 0.25 * params.delta * delta_t
    ca, sa = math.cos(theta), math.sin(theta)

    def half(p0, p1):
        return ca * p0 - 1j * sa * p1, -1j * sa * p0 + ca * p1

    p0, p1 = half(psi[:, 0], psi[:, 1])
    nx, nz = _coupling_vector(params)
    if nx == 0.0:
        phase = np.exp(-1j * (0.5 * params.epsilon + f_values * nz) * delta_t)
        p0, p1 = phase * p0, p1 / phase
    else:
        cx = f_values * nx
        cz = 0.5 * params.epsilon + f_values * nz
        size = np.hypot(cx, cz)
        angle = size * delta_t
        cos_a = np.cos(angle)
        # sin(|c| dt)/|c|, finite as |c| -> 0
        sinc = delta_t * np.sinc(angle / np.pi)
        q0 = (cos_a - 1j * sinc * cz) * p0 - 1j * sinc * cx * p1
        q1 = -1j * sinc * cx * p0 + (cos_a + 1j * sinc * cz) * p1
        p0, p1 = q0, q1
    p0, p1 = half(p0, p1)
    return np.stack([p0, p1], axis=-1)


def sse_step(psi: Spinor, params: TlsParams, delta_t: float, f_value: float) -> Spinor:
    out = sse_step_batch(psi.as_array()[None, :], params, delta_t, np.array([f_value]))
    return Spinor.from_array(out[0])


def projector_entries(psi: np.ndarray) -> np.ndarray:
    """(..., 4) array of rho00, rho11, Re rho01, Im rho01 of |psi><psi|."""
    c0, c1 = psi[..., 0], psi[..., 1]
    rho01 = c0 * c1.conj()
    return np.stack([np.abs(c0) ** 2, np.abs(c1) ** 2, rho01.real, rho01.imag], axis=-1)


def sse_batch(
    psi0: np.ndarray,
    params: TlsParams,
    delta_t: float,
    n_steps: int,
    etas: np.ndarray,
    record_every: int = 1,
) -> np.ndarray:
    """Propagate rows of `psi0` with per-row variates `etas` (n, n_steps); returns (n, n_records, 4)."""
    scale = white_noise_scale(params.sigma_f, delta_t)
    record_every = max(1, int(record_every))
    n_records = n_steps // record_every + 1
    psi = np.array(psi0, dtype=complex)
    out = np.empty((psi.shape[0], n_records, 4))
    out[:, 0] = projector_entries(psi)
    for n in range(1, n_steps + 1):
        psi = sse_step_batch(psi, params, delta_t, scale * etas[:, n - 1])
        if n % record_every == 0:
            out[:, n // record_every] = projector_entries(psi)
    return out


def sse_trajectory(
    psi0: Spinor,
    params: TlsParams,
    delta_t: float,
    t_final: float,
    stream: GaussianSource,
    record_every: int = 1,
) -> TimeSeries:
    """Single unraveled trajectory; channels are the projector entries."""
    psi0.validate()
    n_steps = _n_steps(delta_t, t_final)
    etas = stream.block(n_steps)[None, :]
    entries = sse_batch(psi0.as_array()[None, :], params, delta_t, n_steps, etas, record_every)[0]
    t = np.arange(entries.shape[0]) * (delta_t * max(1, int(record_every)))
    return TimeSeries(t, {name: entries[:, i] for i, name in enumerate(TLS_CHANNELS)})


def sample_mixed_batch(m: MixedInitial, uniforms: np.ndarray) -> np.ndarray:
    """Rows are psi0 where u < w0 and psi1 otherwise."""
    psi0, psi1 = (s.as_array() for s in m.states())
    pick = (np.asarray(uniforms) < m.w0)[:, None]
    return np.where(pick, psi0[None, :], psi1[None, :])


def sample_mixed_initial(m: MixedInitial, stream: NoiseStream) -> Spinor:
    return Spinor.from_array(sample_mixed_batch(m, np.array([next_uniform(stream)]))[0])


def initial_density_matrix(psi0: Spinor | None = None, mixed: MixedInitial | None = None) -> DensityMatrix2:
    if mixed is not None:
        return mixed.density_matrix()
    psi = (psi0 or Spinor.lower()).as_array()
    return DensityMatrix2.from_matrix(np.outer(psi, psi.conj()))

