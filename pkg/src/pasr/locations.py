"""Dense location table shared by the model, the samplers and the pipeline.

Dense ids run ``1..Q``; id ``0`` is the padding slot. Every per-location
array is indexed directly by dense id, so its length is ``Q + 1``.
"""

from dataclasses import dataclass

import numpy as np

from . import geocode, gridmap

PAD = 0


@dataclass
class LocationTable:
    raw_ids: np.ndarray  # (Q,) raw id of dense id i+1
    lat: np.ndarray  # (Q+1,)
    lon: np.ndarray  # (Q+1,)
    counts: np.ndarray  # (Q+1,) check-ins per location in the training data

    @classmethod
    def from_arrays(cls, raw_ids, lat, lon, counts=None):
        raw_ids = np.asarray(raw_ids)
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        if len(raw_ids) == 0:
            raise ValueError("location table needs at least one location")
        if counts is None:
            counts = np.zeros(len(raw_ids), dtype=np.int64)
        pad_lat = (lat.min() + lat.max()) / 2.0
        pad_lon = (lon.min() + lon.max()) / 2.0
        return cls(
            raw_ids=raw_ids,
            lat=np.concatenate([[pad_lat], lat]),
            lon=np.concatenate([[pad_lon], lon]),
            counts=np.concatenate([[0], np.asarray(counts, dtype=np.int64)]),
        )

    @property
    def n_locations(self):
        return len(self.raw_ids)

    def dense_ids(self, raw):
        """Map raw ids to dense ids (``raw_ids`` must be sorted)."""
        raw = np.asarray(raw)
        pos = np.searchsorted(self.raw_ids, raw)
        pos = np.minimum(pos, len(self.raw_ids) - 1)
        if np.any(self.raw_ids[pos] != raw):
            raise KeyError("unknown raw location id")
        return pos + 1

    def bounds(self):
        return gridmap.fit_bounds(self.lat[1:], self.lon[1:])


@dataclass
class LocationFeatures:
    """Per-location model inputs derived from coordinates."""

    geo_tokens: np.ndarray  # (Q+1, geohash_len - ngram + 1)
    rows: np.ndarray  # (Q+1,)
    cols: np.ndarray  # (Q+1,)

    @classmethod
    def build(cls, table, bounds, cfg):
        digits = geocode.geohash_digits(table.lat, table.lon, cfg.geohash_len)
        tokens = geocode.ngram_ids(digits, cfg.ngram)
        rows, cols = gridmap.map_to_cell(table.lat, table.lon, bounds, cfg.grid_intervals)
        return cls(tokens, np.asarray(rows), np.asarray(cols))
