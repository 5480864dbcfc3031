from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MODES = ("tls-exact", "tls-bloch", "tls-sse", "grid-langevin", "classical-langevin")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MixedConfig(_Section):
    w0: float = Field(ge=0.0, le=1.0)
    w1: float = Field(ge=0.0, le=1.0)
    alpha: float = 0.0

    @model_validator(mode="after")
    def _weights_sum_to_one(self):
        if abs(self.w0 + self.w1 - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {self.w0} + {self.w1}")
        return self


class TlsConfig(_Section):
    epsilon: float = 0.2
    delta: float = 0.2
    D: float = Field(default=0.0, ge=0.0)
    xhat: Literal["sigma_z", "sigma_x", "h0"] = "sigma_z"
    psi0: str = "lower"
    mixed: Optional[MixedConfig] = None

    @field_validator("psi0")
    @classmethod
    def _spinor_literal(cls, value: str) -> str:
        value = value.strip()
        if value in {"lower", "upper"}:
            return value
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != 2:
            raise ValueError("expected 'lower', 'upper' or two comma-separated complex amplitudes")
        c0, c1 = (complex(p.replace(" ", "")) for p in parts)
        norm = abs(c0) ** 2 + abs(c1) ** 2
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"spinor must be normalized, |c0|^2 + |c1|^2 = {norm}")
        return value

    def amplitudes(self) -> tuple[complex, complex]:
        if self.psi0 == "lower":
            return 0j, 1 + 0j
        if self.psi0 == "upper":
            return 1 + 0j, 0j
        c0, c1 = (complex(p.strip().replace(" ", "")) for p in self.psi0.split(","))
        return c0, c1


class GridConfig(_Section):
    qmin: float = -5.0
    qmax: float = 5.0
    ng: int = Field(default=56, ge=8)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.qmax > self.qmin:
            raise ValueError(f"qmax must exceed qmin, got [{self.qmin}, {self.qmax}]")
        return self


class LangevinConfig(_Section):
    mu: float = Field(default=1.0, gt=0.0)
    k: float = Field(default=1.0, ge=0.0)
    gamma: float = Field(default=0.0, ge=0.0)
    kT: float = Field(default=0.0, ge=0.0)
    sigma_F_override: Optional[float] = Field(default=None, ge=0.0)
    potential: Literal["harmonic", "morse"] = "harmonic"
    De: float = Field(default=1.0, gt=0.0)
    a: float = Field(default=1.0, gt=0.0)
    q0_morse: float = 0.0
    q0: float = 1.0
    sigma: float = Field(default=1.0, gt=0.0)
    v0: float = 0.0
    add_bath_spring: bool = False
    spill_threshold: float = Field(default=1e-4, gt=0.0, lt=1.0)


class RunSection(_Section):
    dt: float = Field(default=0.01, gt=0.0)
    t_final: float = Field(default=100.0, ge=0.0)
    trajectories: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0, le=2**64 - 1)
    method: Optional[Literal["rk4", "euler", "expm"]] = None
    record_every: int = Field(default=1, ge=1)
    workers: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=64, ge=1)

    @field_validator("dt", "t_final")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class OutConfig(_Section):
    path: Optional[str] = None


class RunConfig(_Section):
    mode: Literal["tls-exact", "tls-bloch", "tls-sse", "grid-langevin", "classical-langevin"] = "tls-sse"
    tls: TlsConfig = Field(default_factory=TlsConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    langevin: LangevinConfig = Field(default_factory=LangevinConfig)
    run: RunSection = Field(default_factory=RunSection)
    out: OutConfig = Field(default_factory=OutConfig)

    @model_validator(mode="after")
    def _method_matches_mode(self):
        allowed = {"tls-exact": {"rk4", "euler"}, "tls-bloch": {"expm", "euler"}}
        if self.run.method is not None and self.mode in allowed and self.run.method not in allowed[self.mode]:
            raise ValueError(f"run.method={self.run.method} is not available for mode {self.mode}")
        return self

    @property
    def method(self) -> str:
        """Integrator for the exact modes, defaulting to rk4 (Lindblad) or expm (Bloch)."""
        if self.run.method is not None:
            return self.run.method
        return "expm" if self.mode == "tls-bloch" else "rk4"
