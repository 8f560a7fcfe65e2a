"""Diffusion-strength schedules sigma_k for the SDE integrator.

Four kinds: constant, piecewise constant over time intervals, the
power-law decay alpha / ((k+1) dt)^(1 / (2 (n_eff - 1))) used by the
per-cycle diminishing diffusion, and the classical simulated-annealing
decay c / sqrt(log(t + 2)).  Every schedule produces finite values >= 0.
"""

import math
from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class Constant:
    sigma0: float

    def __post_init__(self):
        if not (self.sigma0 >= 0.0 and math.isfinite(self.sigma0)):
            raise ConfigurationError("sigma0 must be finite and >= 0")

    def sigma(self, k: int) -> float:
        return self.sigma0

    @property
    def is_null(self) -> bool:
        return self.sigma0 == 0.0


@dataclass(frozen=True)
class PiecewiseConstant:
    """sigma(t) = sigma_i on [S_i, S_i + T_i); pieces are (sigma_i, T_i)."""

    pieces: tuple
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple((float(s), float(T)) for s, T in self.pieces))
        if not self.pieces:
            raise ConfigurationError("need at least one (sigma, T) piece")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        for s, T in self.pieces:
            if not (s >= 0.0 and math.isfinite(s)) or T <= 0:
                raise ConfigurationError("pieces need sigma >= 0 and T > 0")

    def sigma(self, k: int) -> float:
        t = k * self.dt
        start = 0.0
        for s, T in self.pieces:
            if t < start + T:
                return s
            start += T
        return self.pieces[-1][0]

    @property
    def is_null(self) -> bool:
        return all(s == 0.0 for s, _ in self.pieces)


@dataclass(frozen=True)
class PowerLaw:
    """sigma_k = alpha / ((k+1) dt)^(1 / (2 (n_eff - 1))), 1-based index."""

    alpha: float
    dt: float
    n_eff: int

    def __post_init__(self):
        if self.n_eff < 2:
            raise ConfigurationError("power-law schedule needs n_eff >= 2")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise ConfigurationError("alpha must be finite and >= 0")

    def sigma(self, k: int) -> float:
        return self.alpha / ((k + 1) * self.dt) ** (1.0 / (2.0 * (self.n_eff - 1)))

    @property
    def is_null(self) -> bool:
        return self.alpha == 0.0


@dataclass(frozen=True)
class CDD:
    """Continuous diminishing diffusion sigma(t) = c / sqrt(log(t + 2))."""

    c: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        if not (self.c >= 0.0 and math.isfinite(self.c)):
            raise ConfigurationError("c must be finite and >= 0")

    def sigma(self, k: int) -> float:
        return self.c / math.sqrt(math.log(k * self.dt + 2.0))

    @property
    def is_null(self) -> bool:
        return self.c == 0.0


def schedule_sigma(schedule, k: int) -> float:
    """Value of the schedule at step index k >= 0."""
    if k < 0:
        raise ConfigurationError("step index must be >= 0")
    return schedule.sigma(k)
