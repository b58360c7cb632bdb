"""Hourly time-series model, calendar partitions and group aggregation.

Everything downstream speaks in hourly kW arrays aligned to a common
hour-aligned, timezone-naive start timestamp. Series objects are frozen and
their value arrays are read-only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

DEFAULT_NIGHT_HOURS = frozenset({21, 22, 23, 0, 1, 2, 3, 4})
DEFAULT_WINDOW_HOURS = 720
MIN_WINDOW_HOURS = 168


class AlignmentError(ValueError):
    """Series do not share start and length."""


class DegenerateSeriesError(ValueError):
    """A series cannot support the requested operation (empty partition, nonpositive peak)."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("hourly series values must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HourlySeries:
    """Gap-free hourly power readings in kW."""

    start: datetime
    values: np.ndarray

    def __post_init__(self):
        if not isinstance(self.start, datetime):
            raise TypeError("start must be a datetime")
        if self.start.minute or self.start.second or self.start.microsecond:
            raise ValueError(f"start {self.start} is not hour-aligned")
        if self.start.tzinfo is not None:
            raise ValueError("timestamps are timezone-naive local hours")
        vals = _frozen(self.values)
        if vals.size < 24:
            raise ValueError(f"hourly series needs at least 24 readings, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("hourly series contains non-finite readings")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    @property
    def hours(self) -> np.ndarray:
        """Local hour-of-day (0-23) of every reading."""
        return (self.start.hour + np.arange(len(self))) % 24

    @property
    def days_of_year(self) -> np.ndarray:
        return day_of_year(self.start, len(self))

    def timestamps(self) -> np.ndarray:
        return hourly_index(self.start, len(self))

    def with_values(self, values) -> "HourlySeries":
        return HourlySeries(self.start, values)

    def slice(self, window: "Window") -> "HourlySeries":
        window.check_within(len(self))
        return HourlySeries(
            self.start + timedelta(hours=window.start), self.values[window.start : window.stop]
        )


def hourly_index(start: datetime, n: int) -> np.ndarray:
    return np.datetime64(start, "h") + np.arange(n)


def day_of_year(start: datetime, n: int) -> np.ndarray:
    stamps = hourly_index(start, n)
    days = stamps.astype("datetime64[D]")
    years = stamps.astype("datetime64[Y]")
    return (days - years.astype("datetime64[D]")).astype(int) + 1


@dataclass(frozen=True)
class DayNightMask:
    """Hour-of-day based night/day split; night is 21:00-04:59 by default."""

    nocturnal_hours: frozenset = DEFAULT_NIGHT_HOURS

    def __post_init__(self):
        hours = frozenset(int(h) for h in self.nocturnal_hours)
        if not hours:
            raise ValueError("nocturnal hour set must be nonempty")
        if not all(0 <= h < 24 for h in hours):
            raise ValueError("nocturnal hours must lie in 0..23")
        if len(hours) == 24:
            raise ValueError("at least one hour must be diurnal")
        object.__setattr__(self, "nocturnal_hours", hours)

    def is_night(self, hours: np.ndarray) -> np.ndarray:
        return np.isin(hours, sorted(self.nocturnal_hours))

    def night_index(self, start_hour: int, n: int) -> np.ndarray:
        """Indices in ``I_n`` for ``n`` readings starting at ``start_hour``."""
        return np.flatnonzero(self.is_night((start_hour + np.arange(n)) % 24))

    def day_index(self, start_hour: int, n: int) -> np.ndarray:
        return np.flatnonzero(~self.is_night((start_hour + np.arange(n)) % 24))


@dataclass(frozen=True)
class Window:
    """Half-open hour range ``[start, start + length)`` over a panel."""

    start: int
    length: int = DEFAULT_WINDOW_HOURS

    def __post_init__(self):
        if self.start < 0 or self.length <= 0:
            raise ValueError(f"invalid window start={self.start} length={self.length}")

    @property
    def stop(self) -> int:
        return self.start + self.length

    def check_within(self, n: int) -> None:
        if self.stop > n:
            raise ValueError(f"window [{self.start}, {self.stop}) exceeds series length {n}")


def make_windows(n_hours: int, length: int = DEFAULT_WINDOW_HOURS) -> list[Window]:
    """Tile ``n_hours`` with non-overlapping windows of ``length`` hours.

    A trailing remainder shorter than one week is merged into the preceding
    window; a whole span shorter than one week is rejected.
    """
    if length < MIN_WINDOW_HOURS:
        raise ValueError(f"window length {length} h is shorter than one week")
    if n_hours < MIN_WINDOW_HOURS:
        raise ValueError(f"span of {n_hours} h is shorter than one week")
    starts = list(range(0, n_hours, length))
    windows = [Window(s, min(length, n_hours - s)) for s in starts]
    if len(windows) > 1 and windows[-1].length < MIN_WINDOW_HOURS:
        tail = windows.pop()
        prev = windows.pop()
        windows.append(Window(prev.start, prev.length + tail.length))
    return windows


def aggregate_group(series_list: Sequence[HourlySeries]) -> HourlySeries:
    """Elementwise sum of aligned series."""
    if not series_list:
        raise ValueError("cannot aggregate an empty group")
    first = series_list[0]
    for s in series_list[1:]:
        if s.start != first.start or len(s) != len(first):
            raise AlignmentError(
                f"series starting {s.start} (len {len(s)}) misaligned with "
                f"{first.start} (len {len(first)})"
            )
    total = np.sum(np.vstack([s.values for s in series_list]), axis=0)
    return first.with_values(total)


def split_day_night(
    series: HourlySeries, mask: DayNightMask, window: Window | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(night_values, day_values)`` of the window."""
    if window is None:
        window = Window(0, len(series))
    window.check_within(len(series))
    vals = series.values[window.start : window.stop]
    night = mask.is_night((series.start.hour + window.start + np.arange(window.length)) % 24)
    if night.all() or not night.any():
        raise DegenerateSeriesError(
            f"window [{window.start}, {window.stop}) lacks either night or day hours"
        )
    return vals[night], vals[~night]


def normalize_to_peak(series: HourlySeries) -> tuple[HourlySeries, float]:
    peak = float(np.max(series.values))
    if not peak > 0:
        raise DegenerateSeriesError(f"cannot normalize a series with peak {peak}")
    return series.with_values(series.values / peak), peak


def _frozen_matrix(values, ncols: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != ncols:
        raise ValueError(f"{name} must be a (T, {ncols}) matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MeterPanel:
    """All metered series of a feeder.

    ``net`` holds the PV group's net demand column-per-customer and
    ``native_o`` the non-PV group's native demand. Ground truth, when present,
    is the PV group's native demand and generation with ``net = native - gen``.
    """

    start: datetime
    pv_ids: tuple
    net: np.ndarray
    nonpv_ids: tuple
    native_o: np.ndarray
    true_native: np.ndarray | None = None
    true_gen: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pv_ids", tuple(str(i) for i in self.pv_ids))
        object.__setattr__(self, "nonpv_ids", tuple(str(i) for i in self.nonpv_ids))
        if not self.pv_ids or not self.nonpv_ids:
            raise ValueError("both customer groups need at least one member")
        net = _frozen_matrix(self.net, len(self.pv_ids), "net")
        native_o = _frozen_matrix(self.native_o, len(self.nonpv_ids), "native_o")
        if net.shape[0] != native_o.shape[0]:
            raise AlignmentError("groups differ in length")
        if net.shape[0] < 24:
            raise ValueError("panel needs at least 24 hours")
        object.__setattr__(self, "net", net)
        object.__setattr__(self, "native_o", native_o)
        if (self.true_native is None) != (self.true_gen is None):
            raise ValueError("ground truth needs both native demand and generation")
        if self.true_native is not None:
            tn = _frozen_matrix(self.true_native, len(self.pv_ids), "true_native")
            tg = _frozen_matrix(self.true_gen, len(self.pv_ids), "true_gen")
            if tn.shape != net.shape or tg.shape != net.shape:
                raise AlignmentError("ground truth misaligned with net demand")
            object.__setattr__(self, "true_native", tn)
            object.__setattr__(self, "true_gen", tg)

    @property
    def n_hours(self) -> int:
        return self.net.shape[0]

    @property
    def has_truth(self) -> bool:
        return self.true_gen is not None

    @property
    def start_hour(self) -> int:
        return self.start.hour

    def hours(self) -> np.ndarray:
        return (self.start.hour + np.arange(self.n_hours)) % 24

    def timestamps(self) -> np.ndarray:
        return hourly_index(self.start, self.n_hours)

    def days_of_year(self) -> np.ndarray:
        return day_of_year(self.start, self.n_hours)

    def net_series(self, i: int) -> HourlySeries:
        return HourlySeries(self.start, self.net[:, i])

    def nonpv_series(self, j: int) -> HourlySeries:
        return HourlySeries(self.start, self.native_o[:, j])

    def customers_with_pv(self) -> list[tuple[str, HourlySeries]]:
        return [(cid, self.net_series(i)) for i, cid in enumerate(self.pv_ids)]

    def customers_without_pv(self) -> list[tuple[str, HourlySeries]]:
        return [(cid, self.nonpv_series(j)) for j, cid in enumerate(self.nonpv_ids)]

    def aggregate_net(self) -> HourlySeries:
        return HourlySeries(self.start, self.net.sum(axis=1))

    def aggregate_nonpv(self) -> HourlySeries:
        return HourlySeries(self.start, self.native_o.sum(axis=1))

    def replace(self, **changes) -> "MeterPanel":
        fields = dict(
            start=self.start,
            pv_ids=self.pv_ids,
            net=self.net,
            nonpv_ids=self.nonpv_ids,
            native_o=self.native_o,
            true_native=self.true_native,
            true_gen=self.true_gen,
            meta=self.meta,
        )
        fields.update(changes)
        return MeterPanel(**fields)


def check_identity(net: np.ndarray, native: np.ndarray, gen: np.ndarray, tol: float = 1e-9) -> bool:
    """``net == native - gen`` up to ``tol`` relative to the native scale."""
    scale = max(1.0, float(np.max(np.abs(native))) if native.size else 1.0)
    return bool(np.max(np.abs(net - (native - gen))) <= tol * scale)


def parse_start(value: str | datetime) -> datetime:
    if isinstance(value, datetime):
        return value
    return datetime.fromisoformat(value)


def months_to_hours(months: float) -> int:
    return int(math.floor(months * DEFAULT_WINDOW_HOURS))

