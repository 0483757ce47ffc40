"""Scaled numeric inputs for the context networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import GeoLocation, SampleRecord, TimeOfCapture

# WGS84
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
WGS84_B_OVER_A = 1.0 - WGS84_F


@dataclass(frozen=True, eq=False)
class ContextInputs:
    time_vec: np.ndarray
    loc_vec: np.ndarray
    overhead: np.ndarray


def encode_time_arrays(month, hour) -> np.ndarray:
    """Vectorized month/hour scaling, returns shape ``(..., 2)``.

    Linear min-max onto [-1, 1]. December and January end up at opposite
    ends; there is no cyclic wraparound.
    """
    month = np.asarray(month, dtype=float)
    hour = np.asarray(hour, dtype=float)
    return np.stack([2.0 * (month - 1.0) / 11.0 - 1.0, 2.0 * hour / 23.0 - 1.0], axis=-1)


def encode_time(time: TimeOfCapture) -> np.ndarray:
    return encode_time_arrays(time.month, time.hour)


def encode_location_arrays(lat_deg, lon_deg) -> np.ndarray:
    """WGS84 ECEF at zero height divided by the semi-major axis, shape ``(..., 3)``."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    sin_lat = np.sin(lat)
    # N / a
    n = 1.0 / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    x = n * np.cos(lat) * np.cos(lon)
    y = n * np.cos(lat) * np.sin(lon)
    z = n * (1.0 - WGS84_E2) * sin_lat
    return np.stack([x, y, z], axis=-1)


def encode_location(location: GeoLocation) -> np.ndarray:
    return encode_location_arrays(location.lat_deg, location.lon_deg)


def build_context_inputs(record: SampleRecord) -> ContextInputs:
    return ContextInputs(
        time_vec=encode_time(record.time),
        loc_vec=encode_location(record.location),
        overhead=record.overhead,
    )
