"""Shared cloud attenuation process."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CloudParams:
    """Daily clearness regime plus hourly AR(1) perturbation.

    The unclipped day level is ``day_mean + day_scale * z_d`` with ``z_d`` a
    unit-variance AR(1) over days; hours add ``hour_scale * x_t`` with ``x_t``
    a unit-variance AR(1) over hours. The sum is clipped to ``[0, 1]``.
    """

    day_mean: float = 1.05
    day_scale: float = 0.35
    day_phi: float = 0.6
    hour_scale: float = 0.08
    hour_phi: float = 0.85

    def __post_init__(self):
        if not (0 <= self.day_phi < 1 and 0 < self.hour_phi < 1):
            raise ValueError("AR(1) coefficients must lie in [0, 1)")
        if self.day_scale < 0 or self.hour_scale < 0:
            raise ValueError("cloud scales must be nonnegative")


# broad mix of overcast, broken and clear days for regression training data
TRAINING_CLOUDS = CloudParams(day_mean=0.6, day_scale=0.45, day_phi=0.3, hour_scale=0.1)


@dataclass(frozen=True)
class CloudField:
    """Hourly attenuation factors in ``[0, 1]`` shared by every array."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or np.any(vals < 0) or np.any(vals > 1):
            raise ValueError("cloud attenuation must be a 1-D series within [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    @classmethod
    def clear(cls, n_hours: int) -> "CloudField":
        return cls(np.ones(n_hours))

    def clear_days(self, start_hour: int = 0) -> np.ndarray:
        """Boolean per whole day: attenuation is exactly 1 over its daylight-capable hours (6-19)."""
        n_days = (start_hour + len(self)) // 24
        hours = start_hour + np.arange(len(self))
        out = np.zeros(n_days, dtype=bool)
        for d in range(n_days):
            sel = (hours // 24 == d) & np.isin(hours % 24, np.arange(6, 20))
            out[d] = bool(np.all(self.values[sel] == 1.0)) and sel.any()
        return out


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    eps = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = eps[0]
    innov = np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + innov * eps[t]
    return x


def simulate_clouds(rng: np.random.Generator, n_hours: int, params: CloudParams, start_hour: int = 0) -> CloudField:
    n_days = (start_hour + n_hours + 23) // 24
    day_level = params.day_mean + params.day_scale * _ar1(rng, n_days, params.day_phi)
    hourly = params.hour_scale * _ar1(rng, n_hours, params.hour_phi)
    day_of = (start_hour + np.arange(n_hours)) // 24
    return CloudField(np.clip(day_level[day_of] + hourly, 0.0, 1.0))
