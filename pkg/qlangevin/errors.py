"""Exception hierarchy shared by the simulation modules and the CLI."""
from __future__ import annotations


class QLangevinError(Exception):
    """Base class for every error raised by qlangevin."""


class InvalidStateError(QLangevinError):
    """A density matrix, Bloch vector or wavefunction violates its invariants."""


class InvalidParameterError(QLangevinError, ValueError):
    """A physical or numerical parameter is out of its allowed range."""


class PropagationDivergedError(QLangevinError):
    """The propagated state left the physical set (dt too large for the scheme)."""


class SpectralBoundError(QLangevinError):
    """The Chebyshev expansion did not converge for the supplied spectral range."""


class SpillError(QLangevinError):
    """Probability reached the grid boundary; the box no longer holds the state."""

    def __init__(self, message: str, time: float | None = None, boundary_probability: float | None = None):
        super().__init__(message)
        self.time = time
        self.boundary_probability = boundary_probability


class NumericalInconsistencyError(QLangevinError):
    """A quantity that must be real came out with a significant imaginary part."""


class ShapeError(QLangevinError):
    """Trajectory outputs do not share a common time axis."""


class ConfigError(QLangevinError):
    """A configuration key is unknown, unparsable or violates a constraint."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
