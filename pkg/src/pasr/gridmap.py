"""Uniform G x G grid over the bounding box of the dataset's locations."""

from dataclasses import dataclass

import numpy as np

DEGENERATE_EPS = 1e-9


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RegionBounds:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise GridError(f"empty region {self}")

    def as_tuple(self):
        return (self.lat_min, self.lat_max, self.lon_min, self.lon_max)


def fit_bounds(lat, lon):
    """Componentwise min/max; a zero-extent axis is widened by ``DEGENERATE_EPS``."""
    lat = np.asarray(lat, dtype=np.float64).ravel()
    lon = np.asarray(lon, dtype=np.float64).ravel()
    if lat.size == 0:
        raise GridError("cannot fit bounds to an empty collection")
    lat_min, lat_max = float(lat.min()), float(lat.max())
    lon_min, lon_max = float(lon.min()), float(lon.max())
    if lat_min == lat_max:
        lat_min, lat_max = lat_min - DEGENERATE_EPS, lat_max + DEGENERATE_EPS
    if lon_min == lon_max:
        lon_min, lon_max = lon_min - DEGENERATE_EPS, lon_max + DEGENERATE_EPS
    return RegionBounds(lat_min, lat_max, lon_min, lon_max)


def _axis_index(x, lo, hi, g):
    idx = np.floor((np.asarray(x, dtype=np.float64) - lo) / (hi - lo) * g)
    return np.clip(idx, 0, g - 1).astype(np.int64)


def map_to_cell(lat, lon, bounds, g):
    """(row, col) cell ids; out-of-region coordinates clamp to the edge cells."""
    if g < 1:
        raise GridError(f"interval count must be >= 1, got {g}")
    rows = _axis_index(lat, bounds.lat_min, bounds.lat_max, g)
    cols = _axis_index(lon, bounds.lon_min, bounds.lon_max, g)
    if np.ndim(rows) == 0:
        return int(rows), int(cols)
    return rows, cols
