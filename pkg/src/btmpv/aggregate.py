"""Aggregate layer: split the PV group's summed net demand into native demand and generation.

The non-PV group's aggregate native demand is scaled by the ratio of the two
groups' nocturnal consumption (no PV output at night), giving the PV group's
native demand; generation is what remains after subtracting the metered net.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .series import (
    MIN_WINDOW_HOURS,
    DayNightMask,
    HourlySeries,
    MeterPanel,
    Window,
    make_windows,
)


class RatioError(ValueError):
    """Nocturnal ratio cannot be formed; ``window_index`` is set by the layer runner."""

    def __init__(self, message: str, window_index: int | None = None):
        super().__init__(message)
        self.window_index = window_index


@dataclass(frozen=True)
class AggregateEstimate:
    r_hat: float
    P_w_hat: HourlySeries
    G_w_hat: HourlySeries
    window: Window


def _night_sums(P_w_prime: np.ndarray, P_o: np.ndarray, night: np.ndarray) -> tuple[float, float]:
    return float(P_w_prime[night].sum()), float(P_o[night].sum())


def estimate_ratio(
    P_w_prime: HourlySeries, P_o: HourlySeries, mask: DayNightMask, window: Window | None = None
) -> float:
    """Ratio of nocturnal aggregate net demand of the PV group to that of the non-PV group."""
    if P_w_prime.start != P_o.start or len(P_w_prime) != len(P_o):
        raise ValueError("group aggregates are misaligned")
    if window is None:
        window = Window(0, len(P_o))
    window.check_within(len(P_o))
    night = mask.night_index(P_o.start.hour + window.start, window.length)
    if night.size == 0:
        raise RatioError("window contains no nocturnal hours")
    sl = slice(window.start, window.stop)
    num, den = _night_sums(P_w_prime.values[sl], P_o.values[sl], night)
    if not den > 0:
        raise RatioError(f"non-PV group has nonpositive nocturnal demand ({den:g} kW)")
    r = num / den
    if r <= 0:
        raise RatioError(
            f"nocturnal net demand of the PV group is nonpositive (ratio {r:g}); "
            "data contradicts zero generation at night"
        )
    return r


def estimate_aggregate_native(P_o: HourlySeries, r_hat: float) -> HourlySeries:
    if not r_hat > 0:
        raise ValueError(f"ratio must be positive, got {r_hat}")
    return P_o.with_values(P_o.values * r_hat)


def estimate_aggregate_generation(P_w_hat: HourlySeries, P_w_prime: HourlySeries) -> HourlySeries:
    # no clipping: negative hours are estimation error and must stay visible
    if P_w_hat.start != P_w_prime.start or len(P_w_hat) != len(P_w_prime):
        raise ValueError("series are misaligned")
    return P_w_hat.with_values(P_w_hat.values - P_w_prime.values)


def run_aggregate_layer(
    panel: MeterPanel,
    mask: DayNightMask | None = None,
    windows: Sequence[Window] | None = None,
) -> list[AggregateEstimate]:
    """One estimate per window, each with its own nocturnal ratio."""
    mask = mask or DayNightMask()
    if windows is None:
        windows = make_windows(panel.n_hours)
    P_w_prime = panel.aggregate_net()
    P_o = panel.aggregate_nonpv()
    out = []
    for k, w in enumerate(windows):
        if w.length < MIN_WINDOW_HOURS:
            raise RatioError(f"window {k} is {w.length} h long, shorter than one week", k)
        try:
            r = estimate_ratio(P_w_prime, P_o, mask, w)
        except RatioError as exc:
            raise RatioError(f"window {k}: {exc}", k) from exc
        net_w = P_w_prime.slice(w)
        P_w_hat = estimate_aggregate_native(P_o.slice(w), r)
        out.append(AggregateEstimate(r, P_w_hat, estimate_aggregate_generation(P_w_hat, net_w), w))
    return out


def concatenate(estimates: Sequence[AggregateEstimate]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stitch per-window estimates into full-span ``(P_w_hat, G_w_hat, r_hat_per_hour)`` arrays."""
    P = np.concatenate([e.P_w_hat.values for e in estimates])
    G = np.concatenate([e.G_w_hat.values for e in estimates])
    r = np.concatenate([np.full(e.window.length, e.r_hat) for e in estimates])
    return P, G, r
