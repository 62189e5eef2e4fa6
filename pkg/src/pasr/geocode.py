"""Geohash codec and n-gram tokenisation of geohash strings."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_DECODE = {c: i for i, c in enumerate(BASE32)}
MAX_PRECISION = 16

# Largest doubles strictly inside the half-open encoding intervals.
_LAT_TOP = math.nextafter(90.0, 0.0)
_LON_TOP = math.nextafter(180.0, 0.0)


class GeocodeError(ValueError):
    pass


@dataclass(frozen=True)
class GeoCoordinate:
    latitude: float
    longitude: float

    def __post_init__(self):
        lat, lon = float(self.latitude), float(self.longitude)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise GeocodeError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise GeocodeError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise GeocodeError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)


@dataclass(frozen=True)
class GeohashBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def contains(self, lat, lon):
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    @property
    def center(self):
        return (self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0


def _check_precision(length):
    if not 1 <= int(length) <= MAX_PRECISION:
        raise GeocodeError(f"geohash length must be in [1, {MAX_PRECISION}], got {length}")
    return int(length)


def _clamp_arrays(lat, lon):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise GeocodeError("non-finite coordinate")
    if np.any(np.abs(lat) > 90.0) or np.any(np.abs(lon) > 180.0):
        raise GeocodeError("coordinate out of range")
    # the top edge is excluded from the encoding interval
    return np.minimum(lat, _LAT_TOP), np.minimum(lon, _LON_TOP)


def geohash_digits(lat, lon, length):
    """Base-32 digit matrix ``(n, length)`` for arrays of coordinates."""
    length = _check_precision(length)
    lat, lon = _clamp_arrays(np.atleast_1d(lat), np.atleast_1d(lon))
    return kernels.geohash_digits(lat, lon, length)


def digits_to_string(row):
    return "".join(BASE32[int(d)] for d in row)


def encode_geohash(coord, length=12):
    """Standard geohash of ``coord`` (a :class:`GeoCoordinate` or ``(lat, lon)``)."""
    if not isinstance(coord, GeoCoordinate):
        coord = GeoCoordinate(*coord)
    return digits_to_string(geohash_digits(coord.latitude, coord.longitude, length)[0])


def encode_many(lat, lon, length=12):
    return [digits_to_string(r) for r in geohash_digits(lat, lon, length)]


def decode_geohash(geohash):
    """Bounding box of the cell named by ``geohash``."""
    if not geohash:
        raise GeocodeError("empty geohash")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for ch in geohash:
        try:
            val = _DECODE[ch]
        except KeyError:
            raise GeocodeError(f"invalid geohash character {ch!r}") from None
        for shift in range(4, -1, -1):
            bit = (val >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2.0
                if bit:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2.0
                if bit:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return GeohashBox(lat_lo, lat_hi, lon_lo, lon_hi)


def cell_size(length):
    """(lat_height, lon_width) in degrees of a geohash cell of ``length`` characters."""
    bits = 5 * _check_precision(length)
    lon_bits = (bits + 1) // 2
    lat_bits = bits // 2
    return 180.0 / 2**lat_bits, 360.0 / 2**lon_bits


def ngram_ids(digits, n):
    """Sliding-window n-gram ids over a digit matrix ``(..., L)`` -> ``(..., L-n+1)``.

    The id of a window is its base-32 place value, so ids lie in ``[0, 32**n)``.
    """
    digits = np.asarray(digits, dtype=np.int64)
    length = digits.shape[-1]
    if n < 1:
        raise GeocodeError(f"gram order must be >= 1, got {n}")
    if length < n:
        raise GeocodeError(f"geohash of length {length} is shorter than gram order {n}")
    width = length - n + 1
    ids = np.zeros(digits.shape[:-1] + (width,), dtype=np.int64)
    for k in range(n):
        ids = ids * 32 + digits[..., k:k + width]
    return ids


def ngram_tokenize(geohash, n):
    digits = [_DECODE.get(c, -1) for c in geohash]
    if any(d < 0 for d in digits):
        raise GeocodeError(f"invalid geohash {geohash!r}")
    return [int(t) for t in ngram_ids(np.array(digits, dtype=np.int64), n)]


def detokenize(token, n):
    chars = []
    for _ in range(n):
        token, d = divmod(int(token), 32)
        chars.append(BASE32[d])
    if token:
        raise GeocodeError(f"token id out of range for n={n}")
    return "".join(reversed(chars))
