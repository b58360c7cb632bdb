"""Seeded synthetic feeder: native demand, rooftop PV and net demand with ground truth."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from functools import lru_cache

import numpy as np

from ..series import HourlySeries, MeterPanel, day_of_year, normalize_to_peak, parse_start
from .solar import STC_IRRADIANCE, SolarModel
from .weather import TRAINING_CLOUDS, CloudField, CloudParams, simulate_clouds

# RNG stream labels
_SHARED, _CUSTOMER, _CLOUD, _FLEET, _TRAINING = 11, 13, 17, 19, 23

# weekday hourly template, 00:00..23:00; low midday (occupants away), evening peak
LOAD_TEMPLATE = (
    0.55, 0.50, 0.48, 0.47, 0.48, 0.55, 0.75, 0.95, 0.85, 0.70, 0.62, 0.60,
    0.60, 0.60, 0.62, 0.68, 0.80, 1.05, 1.30, 1.40, 1.35, 1.15, 0.90, 0.70,
)

DEFAULT_AZIMUTH_MIX = ((180.0, 0.8), (135.0, 0.05), (225.0, 0.05), (90.0, 0.05), (270.0, 0.05))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 2019
    latitude: float = 30.3
    longitude: float = -97.7
    tz_meridian: float = -90.0
    n_with_pv: int = 100
    n_without_pv: int = 115
    days: int = 365
    start: str = "2019-01-01T00:00"
    capacity_range: tuple = (3.0, 9.0)
    pv_capacities: tuple | None = None
    azimuth_mix: tuple = DEFAULT_AZIMUTH_MIX
    azimuths: tuple | None = None
    tilt: float = 25.0
    base_load: float = 1.5
    weekend_factor: float = 1.08
    seasonal_amplitude: float = 0.3
    daily_weather_sigma: float = 0.06
    scale_sigma: float = 0.35
    load_noise: float = 0.25
    day_noise: float = 0.4
    clouds: CloudParams = field(default_factory=CloudParams)

    def __post_init__(self):
        if self.days < 7:
            raise ValueError(f"scenario needs at least 7 days, got {self.days}")
        if self.n_with_pv < 1 or self.n_without_pv < 1:
            raise ValueError("both customer groups need at least one member")
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not 0 <= self.tilt <= 90:
            raise ValueError(f"tilt {self.tilt} out of range")
        if self.base_load <= 0:
            raise ValueError("base load must be positive")
        if self.load_noise < 0 or self.scale_sigma < 0 or self.day_noise < 0:
            raise ValueError("noise levels must be nonnegative")
        lo, hi = self.capacity_range
        if self.pv_capacities is None and not 0 < lo <= hi:
            raise ValueError(f"invalid capacity range {self.capacity_range}")
        if self.pv_capacities is not None:
            if len(self.pv_capacities) != self.n_with_pv:
                raise ValueError("pv_capacities must list one capacity per PV customer")
            if any(c < 0 for c in self.pv_capacities):
                raise ValueError("PV capacities must be nonnegative")
        if self.azimuths is not None:
            if len(self.azimuths) != self.n_with_pv:
                raise ValueError("azimuths must list one azimuth per PV customer")
            bad = [a for a in self.azimuths if not 0 <= a <= 360]
            if bad:
                raise ValueError(f"azimuths out of [0, 360]: {bad}")
        if any(not 0 <= a <= 360 for a, _ in self.azimuth_mix):
            raise ValueError("azimuth mix entries must lie in [0, 360]")
        parse_start(self.start)
        if isinstance(self.clouds, dict):
            object.__setattr__(self, "clouds", CloudParams(**self.clouds))
        for name in ("capacity_range", "pv_capacities", "azimuths"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in val))
        object.__setattr__(
            self, "azimuth_mix", tuple((float(a), float(w)) for a, w in self.azimuth_mix)
        )

    @property
    def n_hours(self) -> int:
        return 24 * self.days

    @property
    def start_time(self) -> datetime:
        return parse_start(self.start)

    @property
    def solar(self) -> SolarModel:
        return SolarModel(self.latitude, self.longitude, self.tz_meridian)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        if "azimuth_mix" in data:
            data["azimuth_mix"] = tuple(tuple(x) for x in data["azimuth_mix"])
        if isinstance(data.get("clouds"), dict):
            data["clouds"] = CloudParams(**data["clouds"])
        return cls(**data)


def _rng(config: ScenarioConfig, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, *stream]))


def _calendar(config: ScenarioConfig, n_hours: int | None = None):
    n = config.n_hours if n_hours is None else n_hours
    start = config.start_time
    hours = (start.hour + np.arange(n)) % 24
    return start, hours, day_of_year(start, n)


def scenario_clouds(config: ScenarioConfig) -> CloudField:
    """The scenario's shared weather."""
    start = config.start_time
    return simulate_clouds(_rng(config, _CLOUD), config.n_hours, config.clouds, start.hour)


def training_clouds(config: ScenarioConfig, n_hours: int) -> CloudField:
    """Independent weather year used only to produce regression training curves."""
    return simulate_clouds(_rng(config, _TRAINING), n_hours, TRAINING_CLOUDS, config.start_time.hour)


def _clear_sky_shape(config: ScenarioConfig, azimuth: float, n_hours: int) -> np.ndarray:
    _, hours, doy = _calendar(config, n_hours)
    poa = config.solar.poa_irradiance(doy, hours + 0.5, config.tilt, azimuth)
    return poa / STC_IRRADIANCE


def simulate_pv(config: ScenarioConfig, capacity: float, azimuth: float, cloud: CloudField | None = None) -> HourlySeries:
    """Hourly AC output (kW) of one array under the shared cloud field."""
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    if not 0 <= azimuth <= 360:
        raise ValueError(f"azimuth {azimuth} out of [0, 360]")
    n = config.n_hours if cloud is None else len(cloud)
    shape = _clear_sky_shape(config, azimuth, n)
    if cloud is not None:
        shape = shape * cloud.values
    return HourlySeries(config.start_time, capacity * shape)


@lru_cache(maxsize=16)
def _shared_load_shape(config: ScenarioConfig) -> np.ndarray:
    """Population-wide demand shape with unit mean over the scenario span."""
    start, hours, doy = _calendar(config)
    template = np.asarray(LOAD_TEMPLATE)[hours]
    weekday = (np.datetime64(start, "h") + np.arange(config.n_hours)).astype("datetime64[D]")
    # numpy weekday: 1970-01-01 was a Thursday
    dow = (weekday.astype(int) + 3) % 7
    weekly = np.where(dow >= 5, config.weekend_factor, 1.0)
    seasonal = 1.0 + config.seasonal_amplitude * np.cos(2 * np.pi * (doy - 200) / 365.0) ** 2 * (
        np.abs(doy - 200) < 92
    )
    rng = _rng(config, _SHARED)
    daily = np.exp(config.daily_weather_sigma * rng.standard_normal(config.days + 1))
    day_idx = (start.hour + np.arange(config.n_hours)) // 24
    shape = template * weekly * seasonal * daily[day_idx]
    shape = shape / shape.mean()
    shape.setflags(write=False)
    return shape


def customer_scale(config: ScenarioConfig, customer_index: int) -> float:
    return float(_lognormal(_rng(config, _CUSTOMER, customer_index), config.scale_sigma))


def _lognormal(rng: np.random.Generator, sigma: float, size=None):
    return np.exp(sigma * rng.standard_normal(size) - 0.5 * sigma * sigma)


def simulate_native_load(config: ScenarioConfig, customer_index: int) -> HourlySeries:
    """Native demand of one customer.

    Shared shape x customer scale x per-day activity x per-hour noise, the
    last three lognormal with unit mean.
    """
    shape = _shared_load_shape(config)
    rng = _rng(config, _CUSTOMER, customer_index)
    scale = _lognormal(rng, config.scale_sigma)
    day_idx = (config.start_time.hour + np.arange(shape.size)) // 24
    activity = _lognormal(rng, config.day_noise, day_idx[-1] + 1)[day_idx]
    noise = _lognormal(rng, config.load_noise, shape.size)
    return HourlySeries(config.start_time, config.base_load * scale * shape * activity * noise)


def fleet(config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-PV ``(capacities_kw, azimuths_deg)``."""
    rng = _rng(config, _FLEET)
    n = config.n_with_pv
    if config.pv_capacities is not None:
        caps = np.asarray(config.pv_capacities, dtype=float)
    else:
        lo, hi = config.capacity_range
        caps = np.round(rng.uniform(lo, hi, n), 2)
    if config.azimuths is not None:
        az = np.asarray(config.azimuths, dtype=float)
    else:
        choices = np.array([a for a, _ in config.azimuth_mix])
        w = np.array([w for _, w in config.azimuth_mix])
        counts = np.floor(w / w.sum() * n).astype(int)
        # largest remainders fill the rest so the mix is hit as closely as possible
        rem = w / w.sum() * n - counts
        for k in np.argsort(-rem, kind="stable")[: n - counts.sum()]:
            counts[k] += 1
        az = rng.permutation(np.repeat(choices, counts))
    return caps, az


def pv_ids(config: ScenarioConfig) -> list[str]:
    return [f"pv{i:03d}" for i in range(config.n_with_pv)]


def nonpv_ids(config: ScenarioConfig) -> list[str]:
    return [f"npv{j:03d}" for j in range(config.n_without_pv)]


def build_panel(config: ScenarioConfig) -> MeterPanel:
    cloud = scenario_clouds(config)
    caps, az = fleet(config)
    nw = config.n_with_pv
    native = np.column_stack([simulate_native_load(config, i).values for i in range(nw)])
    gen = np.column_stack(
        [simulate_pv(config, caps[i], az[i], cloud).values for i in range(nw)]
    )
    native_o = np.column_stack(
        [simulate_native_load(config, nw + j).values for j in range(config.n_without_pv)]
    )
    return MeterPanel(
        start=config.start_time,
        pv_ids=pv_ids(config),
        net=native - gen,
        nonpv_ids=nonpv_ids(config),
        native_o=native_o,
        true_native=native,
        true_gen=gen,
        meta={"capacities": caps.tolist(), "azimuths": az.tolist()},
    )


def pvwatts_surrogate(azimuth: float, config: ScenarioConfig, cloud: CloudField | None = None) -> HourlySeries:
    """Peak-normalized generation curve for one azimuth.

    Cloud-free by default. Pass a cloud field to emulate weather-year output
    for regression training.
    """
    series, _ = normalize_to_peak(simulate_pv(config, 1.0, azimuth, cloud))
    return series
