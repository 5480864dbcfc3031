"""Shared value types, counter-based noise streams and representation conversions.

All quantities are dimensionless with hbar = 1.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Protocol

import numpy as np

from .errors import InvalidParameterError, InvalidStateError, QLangevinError

logger = logging.getLogger(__name__)

UINT64_MAX = 2**64 - 1
DYNAMICS_CHANNEL = 0
SAMPLING_CHANNEL = 1

_TWO_POW_M53 = 2.0**-53

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


def white_noise_scale(sigma: float, dt: float) -> float:
    """Per-step factor turning a standard normal into a white-noise force of amplitude sigma.

    The discrete force is f = sigma * eta * sqrt(2 / dt), so <f_n f_m> = 2 sigma^2 delta_nm / dt.
    """
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    return sigma * math.sqrt(2.0 / dt)


# ---------------------------------------------------------------------------
# Two-level value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spinor:
    c0: complex
    c1: complex

    @classmethod
    def lower(cls) -> "Spinor":
        return cls(0j, 1 + 0j)

    @classmethod
    def upper(cls) -> "Spinor":
        return cls(1 + 0j, 0j)

    @classmethod
    def from_array(cls, psi: np.ndarray) -> "Spinor":
        return cls(complex(psi[0]), complex(psi[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1], dtype=complex)

    def norm(self) -> float:
        return math.sqrt(abs(self.c0) ** 2 + abs(self.c1) ** 2)

    def validate(self, tol: float = 1e-10) -> "Spinor":
        if abs(self.norm() - 1.0) > tol:
            raise InvalidStateError(f"spinor norm {self.norm():.3e} differs from 1")
        return self


@dataclass(frozen=True)
class DensityMatrix2:
    rho00: complex
    rho01: complex
    rho10: complex
    rho11: complex

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "DensityMatrix2":
        m = np.asarray(m, dtype=complex)
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix2":
        return cls(0.5 + 0j, 0j, 0j, 0.5 + 0j)

    def to_matrix(self) -> np.ndarray:
        return np.array([[self.rho00, self.rho01], [self.rho10, self.rho11]], dtype=complex)

    def trace(self) -> float:
        return (self.rho00 + self.rho11).real

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.to_matrix())

    def validate(self, hermitian_tol: float = 1e-12, trace_tol: float = 1e-10, psd_tol: float = 1e-10) -> "DensityMatrix2":
        if abs(self.rho10 - self.rho01.conjugate()) > hermitian_tol:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(self.rho00.imag) > hermitian_tol or abs(self.rho11.imag) > hermitian_tol:
            raise InvalidStateError("density matrix has complex populations")
        if abs(self.trace() - 1.0) > trace_tol:
            raise InvalidStateError(f"density matrix trace {self.trace():.12f} differs from 1")
        if min_eigenvalue(self.rho00.real, self.rho11.real, self.rho01) < -psd_tol:
            raise InvalidStateError("density matrix is not positive semidefinite")
        return self


@dataclass(frozen=True)
class BlochVector:
    rx: float
    ry: float
    rz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz], dtype=float)

    def length(self) -> float:
        return math.sqrt(self.rx**2 + self.ry**2 + self.rz**2)


def min_eigenvalue(rho00, rho11, rho01):
    """Smallest eigenvalue of a Hermitian 2x2 matrix; works elementwise on arrays."""
    half_gap = np.sqrt(((rho00 - rho11) / 2.0) ** 2 + np.abs(rho01) ** 2)
    return (rho00 + rho11) / 2.0 - half_gap


def bloch_from_dm(rho: DensityMatrix2) -> BlochVector:
    rx = 0.5 * (rho.rho01 + rho.rho10)
    ry = 0.5j * (rho.rho01 - rho.rho10)
    rz = 0.5 * (rho.rho00 - rho.rho11)
    return BlochVector(rx.real, ry.real, rz.real)


def dm_from_bloch(b: BlochVector, tol: float = 1e-10) -> DensityMatrix2:
    """Inverse of `bloch_from_dm`: rho = I/2 + rx sx + ry sy + rz sz."""
    if b.length() ** 2 > 0.25 + tol:
        raise InvalidStateError(f"Bloch vector length {b.length():.6f} exceeds 1/2")
    return DensityMatrix2(
        0.5 + b.rz + 0j,
        complex(b.rx, -b.ry),
        complex(b.rx, b.ry),
        0.5 - b.rz + 0j,
    )


def projector(psi: Spinor) -> DensityMatrix2:
    c0, c1 = psi.c0, psi.c1
    return DensityMatrix2(
        complex(abs(c0) ** 2),
        c0 * c1.conjugate(),
        c1 * c0.conjugate(),
        complex(abs(c1) ** 2),
    )


def purity(rho: DensityMatrix2) -> float:
    """tr(rho^2); equals 1 for a pure state and 1/2 for the maximally mixed one."""
    return float((rho.rho00.real**2 + rho.rho11.real**2 + 2 * abs(rho.rho01) ** 2))


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


class GaussianSource(Protocol):
    """Anything that hands out consecutive standard-normal variates."""

    base_seed: int
    stream_id: int

    def block(self, count: int) -> np.ndarray: ...


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value <= UINT64_MAX:
        raise InvalidParameterError(f"{name} must fit in an unsigned 64-bit integer, got {value}")
    return value


@dataclass
class NoiseStream:
    """Counter-based Gaussian stream keyed by (base_seed, stream_id).

    Variate number n of a channel is a pure function of (base_seed, stream_id, channel, n):
    one Philox block per variate, Box-Muller on its first two words.
    """

    base_seed: int
    stream_id: int
    counter: int = 0
    channel: int = DYNAMICS_CHANNEL

    def __post_init__(self):
        self.base_seed = _check_u64("base_seed", self.base_seed)
        self.stream_id = _check_u64("stream_id", self.stream_id)
        self.counter = _check_u64("counter", self.counter)

    def _words(self, start: int, count: int) -> np.ndarray:
        bitgen = np.random.Philox(
            key=np.array([self.base_seed, self.stream_id], dtype=np.uint64),
            counter=np.array([start, self.channel, 0, 0], dtype=np.uint64),
        )
        return bitgen.random_raw(4 * count).reshape(count, 4)

    def gaussians_at(self, start: int, count: int) -> np.ndarray:
        """Variates start .. start+count-1 without touching the counter."""
        if count <= 0:
            return np.empty(0)
        words = self._words(start, count)
        u1 = ((words[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53
        u2 = (words[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def uniforms_at(self, start: int, count: int) -> np.ndarray:
        if count <= 0:
            return np.empty(0)
        words = self._words(start, count)
        return (words[:, 0] >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def block(self, count: int) -> np.ndarray:
        values = self.gaussians_at(self.counter, count)
        self.counter += count
        return values

    def uniform_block(self, count: int) -> np.ndarray:
        values = self.uniforms_at(self.counter, count)
        self.counter += count
        return values

    def sampling(self) -> "NoiseStream":
        """Independent stream of the same trajectory reserved for initial-state sampling."""
        return replace(self, counter=0, channel=SAMPLING_CHANNEL)


def next_gaussian(stream: GaussianSource) -> float:
    return float(stream.block(1)[0])


def next_uniform(stream: NoiseStream) -> float:
    return float(stream.uniform_block(1)[0])


@dataclass
class RecordedNoise:
    """A noise realization replayed from memory or from a dump file."""

    base_seed: int
    stream_id: int
    values: np.ndarray
    counter: int = 0

    def block(self, count: int) -> np.ndarray:
        end = self.counter + count
        if end > len(self.values):
            raise QLangevinError(
                f"recorded noise exhausted: need {end} variates, file holds {len(self.values)}"
            )
        out = np.array(self.values[self.counter:end], dtype=float)
        self.counter = end
        return out

    def rewind(self) -> "RecordedNoise":
        return replace(self, counter=0)

    def write(self, path: str | Path) -> None:
        lines = [f"# seed={self.base_seed} stream={self.stream_id}"]
        lines.extend(repr(float(v)) for v in self.values)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_noise_dump(path: str | Path, noise: RecordedNoise) -> None:
    """One variate per line after a `# seed=<u64> stream=<u64>` header."""
    try:
        noise.write(path)
    except OSError as exc:
        raise OSError(f"could not write noise dump {path}: {exc.strerror or exc}") from exc


def record_noise(stream: NoiseStream, count: int) -> RecordedNoise:
    """Draw `count` variates from `stream` and keep them for replay."""
    return RecordedNoise(stream.base_seed, stream.stream_id, stream.block(count))


def read_noise_dump(path: str | Path) -> RecordedNoise:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("#"):
        raise QLangevinError(f"{path}: missing '# seed=<u64> stream=<u64>' header")
    fields: Dict[str, int] = {}
    for token in text[0].lstrip("#").split():
        key, _, value = token.partition("=")
        fields[key] = int(value)
    if "seed" not in fields or "stream" not in fields:
        raise QLangevinError(f"{path}: header must name seed and stream")
    values = np.array([float(line) for line in text[1:] if line.strip()], dtype=float)
    logger.debug("read %d recorded variates from %s", len(values), path)
    return RecordedNoise(fields["seed"], fields["stream"], values)


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------


@dataclass
class TimeSeries:
    """Uniformly sampled observables. `stderr` is present only for ensemble averages."""

    t: np.ndarray
    channels: Dict[str, np.ndarray]
    stderr: Optional[Dict[str, np.ndarray]] = None
    truncated: bool = False
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.channels = {name: np.asarray(v, dtype=float) for name, v in self.channels.items()}
        if self.stderr is not None:
            self.stderr = {name: np.asarray(v, dtype=float) for name, v in self.stderr.items()}
        n = len(self.t)
        if n >= 2:
            steps = np.diff(self.t)
            if np.any(steps <= 0):
                raise InvalidStateError("time axis must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise InvalidStateError("time axis must have constant spacing")
        for name, values in {**self.channels, **(self.stderr or {})}.items():
            if len(values) != n:
                raise InvalidStateError(f"channel '{name}' has {len(values)} samples, time axis has {n}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __len__(self) -> int:
        return len(self.t)

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    def head(self, n: int) -> "TimeSeries":
        """First n samples, keeping flags and metadata."""
        return TimeSeries(
            self.t[:n],
            {k: v[:n] for k, v in self.channels.items()},
            None if self.stderr is None else {k: v[:n] for k, v in self.stderr.items()},
            truncated=self.truncated,
            meta=dict(self.meta),
        )

    def density_matrices(self) -> list[DensityMatrix2]:
        """Rebuild DMs from the rho00/rho11/re_rho01/im_rho01 channels."""
        out = []
        for r00, r11, re, im in zip(self["rho00"], self["rho11"], self["re_rho01"], self["im_rho01"]):
            c = complex(re, im)
            out.append(DensityMatrix2(complex(r00), c, c.conjugate(), complex(r11)))
        return out
