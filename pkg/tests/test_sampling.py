import math

import numpy as np
import pytest

from pasr import kernels
from pasr.locations import PAD
from pasr.sampling import (KnnIndex, NegativeSampler, SamplingError, build_knn_index, dataset_hash,
                           popularity_weights, sample_negatives, steps_negatives)


def _padded(lat, lon):
    # per-dense-id arrays with the padding slot in front
    return np.concatenate([[0.0], lat]), np.concatenate([[0.0], lon])


def _oracle(lat, lon, k):
    """Exhaustive pairwise distances, ties by ascending id."""
    n = len(lat)
    out = []
    for i in range(n):
        d = [(kernels.haversine_numpy(lat[i], lon[i], lat[j], lon[j]), j) for j in range(n) if j != i]
        out.append([j for _, j in sorted(d)[:k]])
    return np.array(out) + 1


def test_collinear_points():
    lat, lon = _padded(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.0, 2.0]))
    idx = build_knn_index(lat, lon, 1)
    assert idx.neighbors[1].tolist() == [2]
    assert idx.neighbors[3].tolist() == [2]


def test_saturation():
    lat, lon = _padded(np.arange(5.0), np.zeros(5))
    idx = build_knn_index(lat, lon, 50)
    assert idx.k == 4
    for i in range(1, 6):
        assert sorted(idx.neighbors[i]) == [j for j in range(1, 6) if j != i]


@pytest.mark.parametrize("method", ["brute", "kdtree"])
def test_index_matches_oracle(rng, method):
    lat = 40.5 + 0.5 * rng.random(500)
    lon = -74.3 + 0.6 * rng.random(500)
    idx = build_knn_index(*_padded(lat, lon), 10, method=method)
    assert np.array_equal(idx.neighbors[1:], _oracle(lat, lon, 10))


def test_kdtree_breaks_ties_by_id():
    # a ring of equidistant points around the centre plus duplicates
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    lat = np.concatenate([[0.0], 0.01 * np.sin(ang), [0.0]])
    lon = np.concatenate([[0.0], 0.01 * np.cos(ang), [0.0]])
    a = build_knn_index(*_padded(lat, lon), 5, method="kdtree")
    b = build_knn_index(*_padded(lat, lon), 5, method="brute")
    assert np.array_equal(a.neighbors, b.neighbors)


def test_needs_two_locations():
    with pytest.raises(SamplingError):
        build_knn_index(*_padded(np.array([1.0]), np.array([1.0])), 3)


def test_index_sidecar_roundtrip(tmp_path, rng):
    lat, lon = _padded(rng.random(30), rng.random(30))
    idx = build_knn_index(lat, lon, 4)
    h = dataset_hash(lat, lon)
    idx.save(tmp_path / "i.idx", h)
    back = KnnIndex.load(tmp_path / "i.idx", h, 4)
    assert np.array_equal(back.neighbors, idx.neighbors)
    with pytest.raises(SamplingError):
        KnnIndex.load(tmp_path / "i.idx", "other", 4)
    with pytest.raises(SamplingError):
        KnnIndex.load(tmp_path / "i.idx", h, 5)


def _two_point_index():
    # location 1 and 2 are each other's only neighbours; 3 sees {1, 2}
    nb = np.array([[-1, -1], [2, 3], [1, 3], [1, 2]])
    return KnnIndex(nb, 2)


def test_knn_uniform_symmetry():
    s = NegativeSampler("knn_uniform", 3, _two_point_index())
    ids, log_q = s.draw(np.array([3]), 10000, np.random.default_rng(0))
    assert abs(np.mean(ids == 1) - 0.5) < 0.02
    assert np.all(log_q == -math.log(2))


@pytest.mark.parametrize("count_a,ratio", [
    (1.0, 2.0 / math.log(2.0)),  # ln(e^2) / ln 2
    (math.e - 1.0, 2.0),  # ln(e^2) / ln e
])
def test_knn_popularity_ratio(count_a, ratio):
    counts = np.array([0, count_a, math.e ** 2 - 1, 5.0])
    s = NegativeSampler("knn_popularity", 3, _two_point_index(), counts)
    n = 100_000
    ids, log_q = s.draw(np.full(n, 3), 1, np.random.default_rng(1))
    p = ratio / (1.0 + ratio)
    pb = np.mean(ids == 2)
    assert abs(pb - p) < 3 * math.sqrt(p * (1 - p) / n)
    assert np.allclose(log_q[ids == 2], math.log(2.0))
    assert np.allclose(log_q[ids == 1], math.log(math.log(count_a + 1.0)))


def test_popularity_weights():
    assert popularity_weights([0])[0] == 0.0
    assert popularity_weights([1])[0] == pytest.approx(0.693147, abs=1e-6)


def test_zero_count_never_sampled():
    counts = np.array([0, 0, 4, 4])
    s = NegativeSampler("knn_popularity", 3, _two_point_index(), counts)
    ids, _ = s.draw(np.full(2000, 3), 3, np.random.default_rng(2))
    assert not np.any(ids == 1)


def test_empty_pool():
    counts = np.array([0, 0, 0, 4])
    s = NegativeSampler("knn_popularity", 3, _two_point_index(), counts)
    with pytest.raises(SamplingError):
        s.draw(np.array([3]), 1, np.random.default_rng(0))
    with pytest.raises(SamplingError):
        NegativeSampler("uniform", 1).draw(np.array([1]), 1, np.random.default_rng(0))


@pytest.mark.parametrize("strategy", ["uniform", "knn_uniform", "knn_popularity"])
def test_draws_exclude_target_and_stay_in_pool(rng, strategy):
    lat, lon = _padded(rng.random(40), rng.random(40))
    idx = build_knn_index(lat, lon, 6)
    counts = np.concatenate([[0], rng.integers(1, 50, 40)])
    targets = rng.integers(1, 41, 300)
    s = NegativeSampler(strategy, 40, idx, counts)
    ids, log_q = s.draw(targets, 5, rng)
    assert not np.any(ids == targets[:, None])
    assert np.all((ids >= 1) & (ids <= 40))
    assert np.all(np.isfinite(log_q))
    if strategy != "uniform":
        for t, row in zip(targets, ids):
            assert set(row) <= set(idx.neighbors[t])
    else:
        assert np.all(log_q == -math.log(40))


def test_seeded_determinism(rng):
    lat, lon = _padded(rng.random(40), rng.random(40))
    idx = build_knn_index(lat, lon, 6)
    a = sample_negatives("knn_uniform", 7, 20, np.random.default_rng(9), index=idx)
    b = sample_negatives("knn_uniform", 7, 20, np.random.default_rng(9), index=idx)
    assert a == b
    assert all(d.location_id != 7 for d in a)


def test_steps_negatives_pads_and_current_anchor(rng):
    lat, lon = _padded(rng.random(20), rng.random(20))
    idx = build_knn_index(lat, lon, 4)
    s = NegativeSampler("knn_uniform", 20, idx)
    inputs = np.array([[3, 5, 7, PAD]])
    targets = np.array([[5, 7, PAD, PAD]])
    for anchor in ("next", "current"):
        ids, log_q = steps_negatives(s, inputs, targets, 3, rng, anchor)
        assert np.all(ids[0, 2:] == PAD)
        assert not np.any(ids[0, :2] == targets[0, :2, None])
        pool = idx.neighbors[inputs[0, :2]] if anchor == "current" else idx.neighbors[targets[0, :2]]
        for row, allowed in zip(ids[0, :2], pool):
            assert set(row) <= set(allowed)
