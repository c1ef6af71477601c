"""Shared phase-space value types used by the variational and flow layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

Array = np.ndarray

#: relative tolerance of the energy-shell membership invariant
SHELL_RTOL = 1e-9


@dataclass(frozen=True)
class EnergyShellState:
    """A point (q, v) of the fixed-energy shell 1/2|v|^2_g + V(q) = h."""

    q: Array
    v: Array

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    def reversed(self) -> "EnergyShellState":
        """Velocity reversal J(q, v) = (q, -v)."""
        return EnergyShellState(self.q, -self.v)

    def as_vector(self) -> Array:
        return np.concatenate([self.q, self.v])


@dataclass(frozen=True)
class CrossingEvent:
    """A transversal signed crossing of a section segment."""

    time: float
    segment_index: int          # 1-based
    sign: int                   # +1 or -1
    point: Array

    @property
    def symbol(self) -> int:
        return self.sign * self.segment_index


@dataclass
class Trajectory:
    """Time-parametrized solution samples plus recorded section crossings."""

    times: Array                # (n,)
    positions: Array            # (n, 2)
    velocities: Array           # (n, 2)
    events: list[CrossingEvent] = field(default_factory=list)
    status: str = "completed"   # completed | left_disk | collision_proximity | time_limit

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def state_at(self, k: int) -> EnergyShellState:
        return EnergyShellState(self.positions[k], self.velocities[k])

    def energy_errors(self, field) -> Array:
        """Per-sample deviation of 1/2|v|^2_g + V from the field energy."""
        from .geometry import conformal_factor
        from .potential import evaluate_V
        errs = np.empty(self.n_samples)
        for k in range(self.n_samples):
            w = conformal_factor(field.metric, self.positions[k])
            e = 0.5 * w * float(self.velocities[k] @ self.velocities[k])
            errs[k] = e + evaluate_V(field, self.positions[k]) - field.h
        return errs
