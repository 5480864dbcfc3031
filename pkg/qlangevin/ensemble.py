"""Trajectory ensembles: chunked execution, fixed-order pairwise reduction, projector averages."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import non_equilibrium_reason
from .classical import CLASSICAL_CHANNELS, verlet_batch
from .core import NoiseStream, Spinor, TimeSeries, min_eigenvalue
from .errors import InvalidParameterError, InvalidStateError, ShapeError
from .grid import OBSERVABLES, Grid, LangevinParams, build_grid, gaussian_state, langevin_batch
from .two_level import TLS_CHANNELS, MixedInitial, TlsParams, sample_mixed_batch, sse_batch

logger = logging.getLogger(__name__)

JOBS = ("tls-sse", "grid-langevin", "classical-langevin")
DM_POSITIVITY_TOLERANCE = 1e-10

# (count, mean, M2) per time point and channel
Moments = Tuple[int, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class EnsembleSpec:
    job: Literal["tls-sse", "grid-langevin", "classical-langevin"]
    params: Union[TlsParams, LangevinParams]
    trajectories: int = 1000
    base_seed: int = 0
    dt: float = 0.01
    t_final: float = 100.0
    psi0: Optional[Spinor] = None
    mixed: Optional[MixedInitial] = None
    grid: Optional[Grid] = None
    q0: float = 1.0
    sigma: float = 1.0
    v0: float = 0.0
    record_every: int = 1
    chunk_size: int = 64
    workers: int = 1

    def __post_init__(self):
        if self.job not in JOBS:
            raise InvalidParameterError(f"unknown ensemble job {self.job!r}; expected one of {', '.join(JOBS)}")
        if self.trajectories < 1:
            raise InvalidParameterError(f"need at least one trajectory, got {self.trajectories}")
        if self.chunk_size < 1 or self.workers < 1 or self.record_every < 1:
            raise InvalidParameterError("chunk_size, workers and record_every must be >= 1")
        wants_tls = self.job == "tls-sse"
        if wants_tls != isinstance(self.params, TlsParams):
            raise InvalidParameterError(f"job {self.job!r} got {type(self.params).__name__}")
        if wants_tls:
            if self.dt <= 0 or self.t_final < 0:
                raise InvalidParameterError(f"need dt > 0 and t_final >= 0, got dt={self.dt}, t_final={self.t_final}")
            if self.psi0 is not None:
                self.psi0.validate()
        if self.job == "grid-langevin":
            # a Gaussian that does not fit the box is rejected before any worker starts
            gaussian_state(self.box, self.q0, self.sigma, self.params.spill_threshold)

    @property
    def box(self) -> Grid:
        return self.grid if self.grid is not None else build_grid()

    @property
    def step(self) -> float:
        return self.dt if self.job == "tls-sse" else self.params.dt

    @property
    def n_steps(self) -> int:
        if self.job == "tls-sse":
            return int(round(self.t_final / self.dt))
        return self.params.n_steps

    @property
    def channels(self) -> Tuple[str, ...]:
        return {"tls-sse": TLS_CHANNELS, "grid-langevin": OBSERVABLES, "classical-langevin": CLASSICAL_CHANNELS}[self.job]

    def chunks(self) -> List[Tuple[int, int]]:
        """Work units; they depend on chunk_size only, never on the worker count."""
        return [
            (start, min(start + self.chunk_size, self.trajectories))
            for start in range(0, self.trajectories, self.chunk_size)
        ]


# ---------------------------------------------------------------------------
# Reduction
# ---------------------------------------------------------------------------


def _merge(a: Moments, b: Moments) -> Moments:
    na, mean_a, m2_a = a
    nb, mean_b, m2_b = b
    n = na + nb
    delta = mean_b - mean_a
    return n, mean_a + delta * (nb / n), m2_a + m2_b + delta * delta * (na * nb / n)


def pairwise_reduce(items: Sequence[Moments]) -> Moments:
    """Merge moments with a fixed balanced tree over the given order."""
    if len(items) == 1:
        return items[0]
    mid = len(items) // 2
    return _merge(pairwise_reduce(items[:mid]), pairwise_reduce(items[mid:]))


def _row_moments(values: np.ndarray) -> Moments:
    return pairwise_reduce([(1, row, np.zeros_like(row)) for row in values])


def _stderr(moments: Moments) -> np.ndarray:
    n, _, m2 = moments
    if n < 2:
        return np.zeros_like(m2)
    return np.sqrt(m2 / (n - 1)) / np.sqrt(n)


# ---------------------------------------------------------------------------
# Work units
# ---------------------------------------------------------------------------


def _streams(spec: EnsembleSpec, start: int, stop: int) -> List[NoiseStream]:
    return [NoiseStream(spec.base_seed, i) for i in range(start, stop)]


def _trajectory_values(spec: EnsembleSpec, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-trajectory records (rows, records, channels) and each row's count of valid records."""
    streams = _streams(spec, start, stop)
    n_steps = spec.n_steps
    etas = np.stack([s.block(n_steps) for s in streams]) if n_steps else np.zeros((len(streams), 0))
    rows = stop - start

    if spec.job == "tls-sse":
        if spec.mixed is not None:
            uniforms = np.array([s.sampling().uniform_block(1)[0] for s in streams])
            psi0 = sample_mixed_batch(spec.mixed, uniforms)
        else:
            psi0 = np.tile((spec.psi0 or Spinor.lower()).as_array(), (rows, 1))
        values = sse_batch(psi0, spec.params, spec.dt, n_steps, etas, spec.record_every)
        return values, np.full(rows, values.shape[1])

    if spec.job == "grid-langevin":
        state = gaussian_state(spec.box, spec.q0, spec.sigma, spec.params.spill_threshold)
        result = langevin_batch(spec.box, spec.params, np.tile(state.psi, (rows, 1)), etas, spec.record_every)
        return result.values, result.valid_records

    values = verlet_batch(spec.params, np.full(rows, spec.q0), np.full(rows, spec.v0), etas, spec.record_every)
    return values, np.full(rows, values.shape[1])


def run_chunk(spec: EnsembleSpec, bounds: Tuple[int, int]) -> Tuple[Moments, int, int]:
    """Moments of one chunk, its smallest valid-record count and how many classical rows left the box."""
    start, stop = bounds
    values, valid = _trajectory_values(spec, start, stop)
    escaped = 0
    if spec.job == "classical-langevin" and spec.grid is not None:
        r = values[:, :, 0]
        escaped = int(np.any((r < spec.grid.qmin) | (r > spec.grid.qmax), axis=1).sum())
    logger.info("%s: trajectories %d-%d done", spec.job, start, stop - 1)
    return _row_moments(values), int(valid.min()), escaped


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def _with_purity(channels: dict) -> dict:
    r00, r11 = channels["rho00"], channels["rho11"]
    coh_sq = channels["re_rho01"] ** 2 + channels["im_rho01"] ** 2
    return {**channels, "purity": r00**2 + r11**2 + 2.0 * coh_sq}


def _check_positive(channels: dict) -> None:
    rho01 = channels["re_rho01"] + 1j * channels["im_rho01"]
    lam = min_eigenvalue(channels["rho00"], channels["rho11"], rho01)
    if lam.size and lam.min() < -DM_POSITIVITY_TOLERANCE:
        raise InvalidStateError(f"averaged density matrix has eigenvalue {lam.min():.3e}")


def run_ensemble(spec: EnsembleSpec) -> TimeSeries:
    """Average I trajectories with trajectory i on stream (base_seed, i)."""
    chunks = spec.chunks()
    logger.info(
        "%s: %d trajectories in %d chunks on %d worker(s)", spec.job, spec.trajectories, len(chunks), spec.workers
    )
    if spec.workers == 1 or len(chunks) == 1:
        results = [run_chunk(spec, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(run_chunk, [spec] * len(chunks), chunks))

    moments = pairwise_reduce([m for m, _, _ in results])
    n_valid = min(v for _, v, _ in results)
    escaped = sum(e for _, _, e in results)
    _, mean, _ = moments
    stderr = _stderr(moments)
    t = np.arange(mean.shape[0]) * (spec.step * spec.record_every)

    channels = {name: mean[:, i] for i, name in enumerate(spec.channels)}
    errors = {name: stderr[:, i] for i, name in enumerate(spec.channels)}
    if spec.job == "tls-sse":
        _check_positive(channels)
        channels = _with_purity(channels)

    series = TimeSeries(t, channels, errors, meta={"trajectories": spec.trajectories, "job": spec.job})
    if n_valid < len(t):
        series = series.head(n_valid)
        series.truncated = True
        series.meta["abort_time"] = float(n_valid * spec.step * spec.record_every)
        logger.warning("%s ensemble truncated at t=%.3f by a spilled trajectory", spec.job, series.meta["abort_time"])
    if spec.job == "grid-langevin":
        reason = non_equilibrium_reason(series)
        series.meta["non_equilibrated"] = reason is not None
        series.meta["non_equilibrated_reason"] = reason
    if spec.job == "classical-langevin":
        series.meta["escaped"] = escaped
        if escaped:
            logger.warning("%d classical trajectories left the box", escaped)
    return series


def average_projectors(trajectories: Sequence[TimeSeries]) -> TimeSeries:
    """Entrywise mean of per-trajectory projector entries, with stderr and purity."""
    if not trajectories:
        raise ShapeError("no trajectories to average")
    reference = trajectories[0]
    for series in trajectories[1:]:
        if len(series) != len(reference) or not np.array_equal(series.t, reference.t):
            raise ShapeError(f"trajectory has {len(series)} samples, expected {len(reference)} on the same times")
    stacked = np.stack([np.stack([s[name] for name in TLS_CHANNELS], axis=-1) for s in trajectories])
    moments = _row_moments(stacked)
    _, mean, _ = moments
    stderr = _stderr(moments)
    channels = {name: mean[:, i] for i, name in enumerate(TLS_CHANNELS)}
    _check_positive(channels)
    errors = {name: stderr[:, i] for i, name in enumerate(TLS_CHANNELS)}
    return TimeSeries(reference.t, _with_purity(channels), errors, meta={"trajectories": len(trajectories)})
