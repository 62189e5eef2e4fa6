"""Hot numeric kernels with a numba path and a pure-numpy path.

Every public kernel here has two implementations, ``*_numba`` and
``*_numpy``, that must agree exactly; the module-level name picks one
according to :data:`pasr._accel.USE_NUMBA`.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

EARTH_RADIUS_KM = 6371.0088

LAT_RANGE = (-90.0, 90.0)
LON_RANGE = (-180.0, 180.0)


# --------------------------------------------------------------------------
# geohash bit interleaving
# --------------------------------------------------------------------------

@njit
def _geohash_digits_loop(lat, lon, length):
    n = lat.shape[0]
    out = np.empty((n, length), dtype=np.int64)
    for p in range(n):
        lat_lo, lat_hi = -90.0, 90.0
        lon_lo, lon_hi = -180.0, 180.0
        even = True
        for c in range(length):
            digit = 0
            for _ in range(5):
                digit <<= 1
                if even:
                    mid = (lon_lo + lon_hi) / 2.0
                    if lon[p] >= mid:
                        digit |= 1
                        lon_lo = mid
                    else:
                        lon_hi = mid
                else:
                    mid = (lat_lo + lat_hi) / 2.0
                    if lat[p] >= mid:
                        digit |= 1
                        lat_lo = mid
                    else:
                        lat_hi = mid
                even = not even
            out[p, c] = digit
    return out


def geohash_digits_numba(lat, lon, length):
    lat = np.ascontiguousarray(lat, dtype=np.float64)
    lon = np.ascontiguousarray(lon, dtype=np.float64)
    return _geohash_digits_loop(lat, lon, int(length))


def geohash_digits_numpy(lat, lon, length):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    n = lat.shape[0]
    lo = np.array([LON_RANGE[0], LAT_RANGE[0]])[:, None].repeat(n, axis=1)
    hi = np.array([LON_RANGE[1], LAT_RANGE[1]])[:, None].repeat(n, axis=1)
    vals = np.stack([lon, lat])
    out = np.zeros((n, length), dtype=np.int64)
    axis = 0
    for c in range(length):
        for _ in range(5):
            mid = (lo[axis] + hi[axis]) / 2.0
            bit = vals[axis] >= mid
            out[:, c] = (out[:, c] << 1) | bit
            lo[axis] = np.where(bit, mid, lo[axis])
            hi[axis] = np.where(bit, hi[axis], mid)
            axis ^= 1
    return out


# --------------------------------------------------------------------------
# exhaustive haversine k-nearest neighbours
# --------------------------------------------------------------------------

@njit
def _haversine_row(lat0, lon0, lat, lon, out):
    p0 = math.radians(lat0)
    c0 = math.cos(p0)
    for j in range(lat.shape[0]):
        p1 = math.radians(lat[j])
        dphi = p1 - p0
        dlmb = math.radians(lon[j] - lon0)
        a = math.sin(dphi / 2.0) ** 2 + c0 * math.cos(p1) * math.sin(dlmb / 2.0) ** 2
        if a > 1.0:
            a = 1.0
        out[j] = 2.0 * math.asin(math.sqrt(a))


@njit
def _knn_brute_loop(lat, lon, k):
    n = lat.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in range(n):
        _haversine_row(lat[i], lon[i], lat, lon, dist)
        dist[i] = np.inf
        # mergesort is stable, so equal distances keep ascending index order
        order = np.argsort(dist, kind="mergesort")
        out[i, :] = order[:k]
    return out


def knn_brute_numba(lat, lon, k):
    lat = np.ascontiguousarray(lat, dtype=np.float64)
    lon = np.ascontiguousarray(lon, dtype=np.float64)
    return _knn_brute_loop(lat, lon, int(k))


def haversine_numpy(lat0, lon0, lat1, lon1):
    """Central angle (radians) between broadcastable coordinate arrays."""
    p0 = np.radians(lat0)
    p1 = np.radians(lat1)
    dphi = p1 - p0
    dlmb = np.radians(np.asarray(lon1, dtype=np.float64) - lon0)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p0) * np.cos(p1) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def knn_brute_numpy(lat, lon, k, chunk=256):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    n = lat.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d = haversine_numpy(lat[start:stop, None], lon[start:stop, None], lat[None, :], lon[None, :])
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


# --------------------------------------------------------------------------
# inverse-CDF draws from per-row cumulative weights
# --------------------------------------------------------------------------

@njit
def _cumulative_draw_loop(cum, rows, u):
    n = rows.shape[0]
    width = cum.shape[1]
    out = np.empty(n, dtype=np.int64)
    for t in range(n):
        r = rows[t]
        x = u[t] * cum[r, width - 1]
        lo, hi = 0, width - 1
        # first index with cum > x
        while lo < hi:
            mid = (lo + hi) // 2
            if cum[r, mid] > x:
                hi = mid
            else:
                lo = mid + 1
        out[t] = lo
    return out


def cumulative_draw_numba(cum, rows, u):
    return _cumulative_draw_loop(
        np.ascontiguousarray(cum, dtype=np.float64),
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(u, dtype=np.float64),
    )


def cumulative_draw_numpy(cum, rows, u):
    sub = cum[rows]
    x = u * sub[:, -1]
    idx = (sub <= x[:, None]).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1).astype(np.int64)


if USE_NUMBA:
    geohash_digits = geohash_digits_numba
    knn_brute = knn_brute_numba
    cumulative_draw = cumulative_draw_numba
else:
    geohash_digits = geohash_digits_numpy
    knn_brute = knn_brute_numpy
    cumulative_draw = cumulative_draw_numpy
