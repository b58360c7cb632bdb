"""Daytime error metrics, empirical-CDF tables and the measurement-noise model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .series import MeterPanel

PROBS = (0.1, 0.2, 0.5, 0.7, 0.9)
CV_EPS = 1e-12


def _errors(est, truth, day_mask) -> np.ndarray:
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {truth.shape}")
    day = np.asarray(day_mask, dtype=bool)
    if day.shape != est.shape[:1]:
        raise ValueError("day mask must match series length")
    return est[day] - truth[day]


def mape(est, truth, peak_norm: float, day_mask) -> float:
    """Mean absolute daytime error as a percentage of ``peak_norm``."""
    if not peak_norm > 0:
        raise ValueError(f"normalizing peak must be positive, got {peak_norm}")
    err = _errors(est, truth, day_mask)
    if err.size == 0:
        raise ValueError("no daytime hours to evaluate")
    return float(100.0 * np.mean(np.abs(err / peak_norm)))


def mse(est, truth, day_mask) -> float:
    err = _errors(est, truth, day_mask)
    if err.size < 2:
        raise ValueError("need at least two daytime hours")
    return float(np.mean(err * err))


def cv(est, truth, day_mask, ddof: int = 1) -> float:
    """Coefficient of variation of the daytime errors; NaN when the mean error vanishes.

    ``ddof=1`` is the aggregate convention, ``ddof=0`` the per-customer one.
    """
    err = _errors(est, truth, day_mask)
    if err.size < 2:
        raise ValueError("need at least two daytime hours")
    mu = float(np.mean(err))
    if abs(mu) < CV_EPS:
        return float("nan")
    return float(np.std(err, ddof=ddof) / mu)


@dataclass(frozen=True)
class MetricSet:
    target: str  # "G" or "P"
    scope: str  # "aggregate" or a customer id
    mape: float
    mse: float
    cv: float

    @property
    def cv_defined(self) -> bool:
        return not np.isnan(self.cv)


def metric_set(est, truth, day_mask, target: str, scope: str = "aggregate", unify_divisor: bool = False) -> MetricSet:
    """All three metrics normalized by the true peak over the evaluated span."""
    peak = float(np.max(truth))
    ddof = 1 if scope == "aggregate" or unify_divisor else 0
    return MetricSet(
        target, scope, mape(est, truth, peak, day_mask), mse(est, truth, day_mask), cv(est, truth, day_mask, ddof)
    )


def percentile_table(values: Iterable[float], probs: Sequence[float] = PROBS) -> dict:
    """Inverse empirical CDF ``min{x : F(x) >= p}``; NaNs (undefined CV) are skipped."""
    arr = np.sort(np.asarray([v for v in values if not np.isnan(v)], dtype=float))
    if arr.size == 0:
        raise ValueError("no values to tabulate")
    n = arr.size
    out = {}
    for p in probs:
        if not 0 < p <= 1:
            raise ValueError(f"probability {p} outside (0, 1]")
        # round before ceil so that e.g. 0.7 * 10 does not land on rank 8
        k = int(np.ceil(round(p * n, 9))) - 1
        out[p] = float(arr[max(k, 0)])
    return out


@dataclass(frozen=True)
class NoiseSpec:
    """Packet loss (readings forced to exactly zero) plus uniform multiplicative meter error."""

    packet_loss_rate: float = 0.0
    measurement_error: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.packet_loss_rate <= 1:
            raise ValueError("packet loss rate must lie in [0, 1]")
        if not 0 <= self.measurement_error <= 1:
            raise ValueError("measurement error must lie in [0, 1]")


NOISE_CASES = {k: NoiseSpec(k / 100.0, 0.005) for k in range(1, 6)}


def apply_noise(panel: MeterPanel, spec: NoiseSpec) -> MeterPanel:
    """Corrupt every metered reading of both groups; ground truth is left untouched."""
    if spec.packet_loss_rate == 0 and spec.measurement_error == 0:
        return panel
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 31]))
    observed = np.hstack([panel.net, panel.native_o])
    flat = observed.ravel().copy()
    n = flat.size
    factor = rng.uniform(1.0 - spec.measurement_error, 1.0 + spec.measurement_error, n)
    flat *= factor
    n_lost = int(round(spec.packet_loss_rate * n))
    if n_lost:
        flat[rng.choice(n, size=n_lost, replace=False)] = 0.0
    noisy = flat.reshape(observed.shape)
    n_w = panel.net.shape[1]
    return panel.replace(net=noisy[:, :n_w], native_o=noisy[:, n_w:])
