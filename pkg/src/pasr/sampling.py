"""Spatial k-nearest-neighbour index and negative samplers.

Samplers exclude only the positive target, not every location the user has
visited; proposal masses are returned as unnormalised log values.
"""

import hashlib
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .locations import PAD

BRUTE_FORCE_LIMIT = 2000
INDEX_MAGIC = b"PASRKNN\x00"
INDEX_VERSION = 1


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class NegativeDraw:
    location_id: int
    log_q: float


@dataclass
class KnnIndex:
    """Neighbour lists by dense id; row ``PAD`` is unused and filled with -1."""

    neighbors: np.ndarray  # (Q+1, K') dense ids, nearest first
    k: int

    def neighbors_of(self, location_id):
        return self.neighbors[location_id]

    def save(self, path, dataset_hash):
        header = json.dumps({"version": INDEX_VERSION, "dataset_hash": dataset_hash, "k": self.k,
                             "shape": list(self.neighbors.shape)}).encode()
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(len(header).to_bytes(4, "little"))
            fh.write(header)
            fh.write(self.neighbors.astype("<i8").tobytes())

    @classmethod
    def load(cls, path, dataset_hash, k):
        with open(path, "rb") as fh:
            if fh.read(len(INDEX_MAGIC)) != INDEX_MAGIC:
                raise SamplingError(f"{path} is not a neighbour index file")
            header = json.loads(fh.read(int.from_bytes(fh.read(4), "little")))
            if header["version"] != INDEX_VERSION:
                raise SamplingError(f"unsupported index version {header['version']}")
            if header["dataset_hash"] != dataset_hash or header["k"] != k:
                raise SamplingError("index was built for a different dataset or K")
            data = np.frombuffer(fh.read(), dtype="<i8").reshape(header["shape"])
        return cls(data.astype(np.int64), k)


def index_sidecar_name(dataset_hash, k):
    return f"knn-{dataset_hash[:16]}-k{k}.idx"


def _unit_vectors(lat, lon):
    phi, lam = np.radians(lat), np.radians(lon)
    return np.column_stack([np.cos(phi) * np.cos(lam), np.cos(phi) * np.sin(lam), np.sin(phi)])


def _knn_kdtree(lat, lon, k):
    """k-d tree over unit vectors (chord length is monotone in arc length)."""
    n = lat.shape[0]
    tree = cKDTree(_unit_vectors(lat, lon))
    want = min(n, k + 1 + 8)
    out = np.empty((n, k), dtype=np.int64)
    _, cand = tree.query(_unit_vectors(lat, lon), k=want)
    cand = np.atleast_2d(cand)
    for i in range(n):
        c = cand[i][cand[i] != i]
        d = kernels.haversine_numpy(lat[i], lon[i], lat[c], lon[c])
        order = np.lexsort((c, d))
        # the slack must cover every tie at the K-th distance
        if want < n and np.sum(d <= d[order[k - 1]]) >= len(c):
            c = np.arange(n)[np.arange(n) != i]
            d = kernels.haversine_numpy(lat[i], lon[i], lat[c], lon[c])
            order = np.lexsort((c, d))
        out[i] = c[order[:k]]
    return out


def build_knn_index(lat, lon, k, method="auto"):
    """K nearest locations (haversine, ties by ascending id) of every location.

    ``lat``/``lon`` are per-dense-id arrays including the padding slot 0,
    e.g. ``table.lat``/``table.lon``.
    """
    lat = np.asarray(lat, dtype=np.float64)[1:]
    lon = np.asarray(lon, dtype=np.float64)[1:]
    n = lat.shape[0]
    if n < 2:
        raise SamplingError("a neighbour index needs at least two locations")
    kk = min(int(k), n - 1)
    if method == "auto":
        method = "brute" if n < BRUTE_FORCE_LIMIT else "kdtree"
    if method == "brute":
        nb = kernels.knn_brute(lat, lon, kk)
    elif method == "kdtree":
        nb = _knn_kdtree(lat, lon, kk)
    else:
        raise ValueError(f"unknown kNN method {method!r}")
    neighbors = np.full((n + 1, kk), -1, dtype=np.int64)
    neighbors[1:] = nb + 1
    return KnnIndex(neighbors, kk)


def popularity_weights(counts):
    """Unnormalised proposal ln(c + 1) per location."""
    return np.log(np.asarray(counts, dtype=np.float64) + 1.0)


class NegativeSampler:
    """Draws negatives for arrays of positive targets.

    ``uniform`` draws from every location except the target; the kNN
    strategies draw from the target's neighbour list, uniformly or in
    proportion to ln(count + 1).
    """

    def __init__(self, strategy, n_locations, index=None, counts=None):
        if strategy not in ("uniform", "knn_uniform", "knn_popularity"):
            raise SamplingError(f"unknown sampler {strategy!r}")
        if strategy != "uniform" and index is None:
            raise SamplingError(f"{strategy} needs a neighbour index")
        self.strategy = strategy
        self.n_locations = int(n_locations)
        self.index = index
        if strategy == "knn_popularity":
            if counts is None:
                raise SamplingError("knn_popularity needs location counts")
            pop = popularity_weights(counts)
            nb = index.neighbors
            w = np.where(nb >= 0, pop[np.maximum(nb, 0)], 0.0)
            self._cum = np.cumsum(w, axis=1)
            with np.errstate(divide="ignore"):
                self._log_q = np.log(pop)

    def draw(self, targets, count, rng):
        """``(ids, log_q)`` arrays of shape ``targets.shape + (count,)``."""
        targets = np.asarray(targets, dtype=np.int64)
        if count < 1:
            raise SamplingError("count must be >= 1")
        flat = targets.ravel()
        if np.any(flat < 1) or np.any(flat > self.n_locations):
            raise SamplingError("target id outside the location table")
        n = flat.size
        if self.strategy == "uniform":
            if self.n_locations < 2:
                raise SamplingError("empty candidate pool")
            r = rng.integers(1, self.n_locations, size=(n, count))
            ids = r + (r >= flat[:, None])
            log_q = np.full(ids.shape, -np.log(self.n_locations))
        elif self.strategy == "knn_uniform":
            pool = self.index.neighbors.shape[1]
            if pool < 1:
                raise SamplingError("empty candidate pool")
            pos = rng.integers(0, pool, size=(n, count))
            ids = self.index.neighbors[flat[:, None], pos]
            log_q = np.full(ids.shape, -np.log(pool))
        else:
            if np.any(self._cum[flat, -1] <= 0):
                raise SamplingError("empty candidate pool: every neighbour has zero count")
            rows = np.repeat(flat, count)
            pos = kernels.cumulative_draw(self._cum, rows, rng.random(n * count))
            ids = self.index.neighbors[rows, pos].reshape(n, count)
            log_q = self._log_q[ids]
        shape = targets.shape + (count,)
        return ids.reshape(shape), log_q.reshape(shape)


def sample_negatives(strategy, target, count, rng, n_locations=None, index=None, counts=None,
                     sampler=None):
    """Negatives for one target as a list of :class:`NegativeDraw`."""
    if sampler is None:
        if n_locations is None:
            n_locations = index.neighbors.shape[0] - 1
        sampler = NegativeSampler(strategy, n_locations, index, counts)
    ids, log_q = sampler.draw(np.array([target]), count, rng)
    return [NegativeDraw(int(i), float(q)) for i, q in zip(ids[0], log_q[0])]


def steps_negatives(sampler, inputs, targets, count, rng, anchor="next"):
    """Per-step negatives for a batch; padded steps get ``PAD`` ids.

    ``anchor`` picks which location the kNN pool is centred on: the positive
    (``next``) or the current input (``current``). The positive target is
    always excluded.
    """
    valid = targets != PAD
    anchors = targets if anchor == "next" else inputs
    ids = np.full(targets.shape + (count,), PAD, dtype=np.int64)
    log_q = np.zeros(ids.shape)
    if not valid.any():
        return ids, log_q
    a = anchors[valid]
    t = targets[valid]
    if anchor == "next" or sampler.strategy == "uniform":
        got, lq = sampler.draw(t if sampler.strategy == "uniform" else a, count, rng)
    else:
        got, lq = sampler.draw(a, count, rng)
        # the anchor's pool may contain the positive: redraw those slots
        bad = got == t[:, None]
        for _ in range(100):
            if not bad.any():
                break
            rows = np.nonzero(bad)[0]
            g2, q2 = sampler.draw(a[rows], 1, rng)
            got[bad], lq[bad] = g2[:, 0], q2[:, 0]
            bad = got == t[:, None]
        else:
            raise SamplingError("anchor pool contains only the positive target")
    ids[valid] = got
    log_q[valid] = lq
    return ids, log_q


def dataset_hash(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(a), allow_pickle=False)
        h.update(buf.getvalue())
    return h.hexdigest()
