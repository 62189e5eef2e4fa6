"""Clustered synthetic check-ins with planted transitions.

Locations sit in spatial clusters. Inside a cluster every location has a
planted successor (the next location going round the cluster centre), and
every location also has a planted jump partner in another cluster. A walk
stays in its cluster with probability ``locality``; the planted move is taken
with probability ``pair_strength`` and a random move otherwise.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import CheckInDataset

KM_PER_DEG = 111.32


class SyntheticSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 100
    n_locations: int = 200
    n_clusters: int = 10
    locality: float = 0.9
    pair_strength: float = 1.0
    checkins_per_user: int = 250
    cluster_radius_km: float = 1.0
    region: tuple = (40.55, 40.95, -74.25, -73.70)  # lat_min, lat_max, lon_min, lon_max
    start_time: float = 1577836800.0  # 2020-01-01T00:00:00Z

    def validate(self):
        if self.n_users < 1 or self.checkins_per_user < 2:
            raise SyntheticSpecError("need at least one user with two check-ins")
        if self.n_clusters < 1 or self.n_locations < 2 * self.n_clusters:
            raise SyntheticSpecError("every cluster needs at least two locations")
        if not (0.0 <= self.locality <= 1.0 and 0.0 <= self.pair_strength <= 1.0):
            raise SyntheticSpecError("locality and pair_strength must lie in [0, 1]")
        if self.n_clusters == 1 and self.locality < 1.0:
            raise SyntheticSpecError("jumps between clusters need at least two clusters")


@dataclass
class SyntheticWorld:
    lat: np.ndarray
    lon: np.ndarray
    cluster: np.ndarray
    successor: np.ndarray
    jump_partner: np.ndarray


def build_world(spec, rng):
    spec.validate()
    lat0, lat1, lon0, lon1 = spec.region
    q, c = spec.n_locations, spec.n_clusters
    centers = np.column_stack([rng.uniform(lat0, lat1, c), rng.uniform(lon0, lon1, c)])
    cluster = np.arange(q) % c
    sigma_lat = spec.cluster_radius_km / KM_PER_DEG
    sigma_lon = sigma_lat / np.cos(np.radians(centers[:, 0]))
    lat = centers[cluster, 0] + rng.normal(0.0, sigma_lat, q)
    lon = centers[cluster, 1] + rng.normal(0.0, sigma_lon[cluster], q)

    successor = np.empty(q, dtype=np.int64)
    for k in range(c):
        members = np.flatnonzero(cluster == k)
        angle = np.arctan2(lat[members] - centers[k, 0], lon[members] - centers[k, 1])
        ring = members[np.argsort(angle, kind="stable")]
        successor[ring] = np.roll(ring, -1)

    jump_partner = np.empty(q, dtype=np.int64)
    for l in range(q):
        others = np.flatnonzero(cluster != cluster[l]) if c > 1 else np.flatnonzero(np.arange(q) != l)
        jump_partner[l] = others[rng.integers(len(others))]
    return SyntheticWorld(lat, lon, cluster, successor, jump_partner)


def _walk(world, spec, rng, start, length):
    q = len(world.lat)
    path = np.empty(length, dtype=np.int64)
    path[0] = start
    members = [np.flatnonzero(world.cluster == k) for k in range(spec.n_clusters)]
    for t in range(1, length):
        cur = path[t - 1]
        planted = rng.random() < spec.pair_strength
        if rng.random() < spec.locality:
            if planted:
                nxt = world.successor[cur]
            else:
                pool = members[world.cluster[cur]]
                pool = pool[pool != cur]
                nxt = pool[rng.integers(len(pool))]
        elif planted:
            nxt = world.jump_partner[cur]
        else:
            nxt = rng.integers(q)
        path[t] = nxt
    return path


def generate_synthetic(spec=None, seed=0, return_world=False):
    """Synthetic :class:`CheckInDataset`; identical for identical ``(spec, seed)``."""
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(seed)
    world = build_world(spec, rng)
    users, times, locs = [], [], []
    for u in range(spec.n_users):
        path = _walk(world, spec, rng, int(rng.integers(spec.n_locations)), spec.checkins_per_user)
        gaps = rng.uniform(1800.0, 7200.0, spec.checkins_per_user)
        users.append(np.full(spec.checkins_per_user, u, dtype=np.int64))
        times.append(spec.start_time + np.round(np.cumsum(gaps)))
        locs.append(path)
    loc = np.concatenate(locs)
    ds = CheckInDataset.from_columns(np.concatenate(users), np.concatenate(times),
                                     world.lat[loc], world.lon[loc], loc)
    return (ds, world) if return_world else ds
