"""Low-precision solar geometry and a clear-sky plane-of-array model.

Declination/hour-angle geometry with an equation-of-time correction, evaluated
at the middle of each local hour. Accuracy is a fraction of a degree, which is
plenty for producing azimuth-dependent hourly generation shapes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# top-of-atmosphere-ish beam scale; keeps POA below 1000 W/m2 so PV output stays under capacity
BEAM_SCALE = 1200.0
DIFFUSE_FRACTION = 0.1
STC_IRRADIANCE = 1000.0


def declination(doy: np.ndarray) -> np.ndarray:
    """Solar declination in radians (Cooper)."""
    return np.radians(23.45) * np.sin(2.0 * np.pi * (284.0 + doy) / 365.0)


def equation_of_time(doy: np.ndarray) -> np.ndarray:
    """Equation of time in minutes."""
    b = 2.0 * np.pi * (doy - 81.0) / 364.0
    return 9.87 * np.sin(2 * b) - 7.53 * np.cos(b) - 1.5 * np.sin(b)


@dataclass(frozen=True)
class SolarModel:
    latitude: float
    longitude: float = -97.7
    tz_meridian: float = -90.0

    def hour_angle(self, doy: np.ndarray, local_hour: np.ndarray) -> np.ndarray:
        solar_time = (
            local_hour
            + (self.longitude - self.tz_meridian) / 15.0
            + equation_of_time(doy) / 60.0
        )
        return np.radians(15.0 * (solar_time - 12.0))

    def sun_vector(self, doy, local_hour):
        """Unit vector towards the sun as ``(east, north, up)`` arrays."""
        doy = np.asarray(doy, dtype=float)
        local_hour = np.asarray(local_hour, dtype=float)
        phi = np.radians(self.latitude)
        delta = declination(doy)
        omega = self.hour_angle(doy, local_hour)
        up = np.sin(phi) * np.sin(delta) + np.cos(phi) * np.cos(delta) * np.cos(omega)
        east = -np.cos(delta) * np.sin(omega)
        north = np.sin(delta) * np.cos(phi) - np.cos(delta) * np.sin(phi) * np.cos(omega)
        return east, north, up

    def zenith_azimuth(self, doy, local_hour):
        """Zenith and azimuth (clockwise from north), both in degrees."""
        east, north, up = self.sun_vector(doy, local_hour)
        zenith = np.degrees(np.arccos(np.clip(up, -1.0, 1.0)))
        azimuth = np.degrees(np.arctan2(east, north)) % 360.0
        return zenith, azimuth

    def clear_sky_ghi(self, doy, local_hour) -> np.ndarray:
        _, _, up = self.sun_vector(doy, local_hour)
        return np.where(up > 0, _beam(up) * up + DIFFUSE_FRACTION * _beam(up), 0.0)

    def poa_irradiance(self, doy, local_hour, tilt: float, azimuth: float) -> np.ndarray:
        """Clear-sky plane-of-array irradiance in W/m2; exactly zero with the sun down."""
        east, north, up = self.sun_vector(doy, local_hour)
        beta = np.radians(tilt)
        a = np.radians(azimuth)
        cos_inc = (
            east * np.sin(beta) * np.sin(a) + north * np.sin(beta) * np.cos(a) + up * np.cos(beta)
        )
        dni = _beam(up)
        poa = dni * np.maximum(cos_inc, 0.0) + DIFFUSE_FRACTION * dni * (1.0 + np.cos(beta)) / 2.0
        return np.where(up > 0, poa, 0.0)


def _beam(cos_zenith: np.ndarray) -> np.ndarray:
    """Direct normal irradiance from relative air mass (Meinel)."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        air_mass = 1.0 / np.where(cos_zenith > 1e-6, cos_zenith, 1e-6)
        return BEAM_SCALE * np.power(0.7, np.power(air_mass, 0.678))
