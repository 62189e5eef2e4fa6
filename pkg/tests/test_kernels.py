import os
import subprocess
import sys

import numpy as np
import pytest

from pasr import kernels


def test_geohash_backends_agree(rng):
    lat = np.concatenate([rng.uniform(-90, 90, 2000), [0.0, -0.005, 90 - 1e-12]])
    lon = np.concatenate([rng.uniform(-180, 180, 2000), [0.0, 90.0, 180 - 1e-12]])
    for length in (1, 6, 12):
        a = kernels.geohash_digits_numba(lat, lon, length)
        b = kernels.geohash_digits_numpy(lat, lon, length)
        assert np.array_equal(a, b)


def test_knn_backends_agree(rng):
    lat = 40.6 + 0.3 * rng.random(300)
    lon = -74.0 + 0.3 * rng.random(300)
    lat[10] = lat[11]
    lon[10] = lon[11]  # duplicate point: ties resolved by id
    assert np.array_equal(kernels.knn_brute_numba(lat, lon, 15), kernels.knn_brute_numpy(lat, lon, 15))


def test_cumulative_draw_backends_agree(rng):
    w = rng.random((20, 7))
    w[3] = [0, 0, 1, 0, 0, 0, 0]
    cum = np.cumsum(w, axis=1)
    rows = rng.integers(0, 20, 5000)
    u = rng.random(5000)
    u[:3] = 0.0
    a = kernels.cumulative_draw_numba(cum, rows, u)
    b = kernels.cumulative_draw_numpy(cum, rows, u)
    assert np.array_equal(a, b)
    assert np.all(a[rows == 3] == 2)


def test_haversine_known_distance():
    # one degree of latitude along a meridian
    d = kernels.haversine_numpy(0.0, 0.0, 1.0, 0.0) * kernels.EARTH_RADIUS_KM
    assert d == pytest.approx(111.195, abs=1e-3)


@pytest.mark.parametrize("flag,want", [("1", "numpy"), ("0", None)])
def test_env_flag_selects_backend(flag, want):
    env = dict(os.environ, PASR_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import pasr; print(pasr.backend())"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    if want is None:
        try:
            import numba  # noqa: F401
            want = "numba"
        except ImportError:
            want = "numpy"
    assert out == want
