"""Check-in datasets: parsing, filtering and summaries."""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from ..locations import LocationTable

log = logging.getLogger(__name__)

FORMATS = ("auto", "iso", "epoch")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class CheckIn:
    user: object
    location: object
    latitude: float
    longitude: float
    timestamp: float


@dataclass
class CheckInDataset:
    """Columns sorted by (user, timestamp); ties keep their input order."""

    user: np.ndarray
    time: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    loc: np.ndarray
    malformed: int = 0
    _hash: str = field(default=None, repr=False)

    @classmethod
    def from_columns(cls, user, time, lat, lon, loc, malformed=0):
        user = np.asarray(user)
        time = np.asarray(time, dtype=np.float64)
        order = np.lexsort((time, user))
        return cls(user[order], time[order], np.asarray(lat, dtype=np.float64)[order],
                   np.asarray(lon, dtype=np.float64)[order], np.asarray(loc)[order], malformed)

    def __len__(self):
        return len(self.user)

    @property
    def n_users(self):
        return len(np.unique(self.user))

    @property
    def n_locations(self):
        return len(np.unique(self.loc))

    def subset(self, keep):
        return CheckInDataset(self.user[keep], self.time[keep], self.lat[keep], self.lon[keep],
                              self.loc[keep], self.malformed)

    def user_slices(self):
        """``(user, slice)`` per user in sorted user order."""
        if len(self) == 0:
            return
        starts = np.flatnonzero(np.r_[True, self.user[1:] != self.user[:-1]])
        ends = np.r_[starts[1:], len(self)]
        for s, e in zip(starts, ends):
            yield self.user[s], slice(int(s), int(e))

    def checkins(self):
        for i in range(len(self)):
            yield CheckIn(self.user[i].item(), self.loc[i].item(), float(self.lat[i]),
                          float(self.lon[i]), float(self.time[i]))

    def provenance_hash(self):
        if self._hash is None:
            h = hashlib.sha256()
            for col in (self.user, self.loc):
                h.update("\x1f".join(map(str, col.tolist())).encode())
            for col in (self.time, self.lat, self.lon):
                h.update(np.ascontiguousarray(col, dtype="<f8").tobytes())
            self._hash = h.hexdigest()
        return self._hash

    def location_table(self, count_mask=None):
        """Dense table over every location; counts over rows in ``count_mask``."""
        raw, first, inverse = np.unique(self.loc, return_index=True, return_inverse=True)
        mask = np.ones(len(self), dtype=bool) if count_mask is None else count_mask
        counts = np.bincount(inverse[mask], minlength=len(raw))
        return LocationTable.from_arrays(raw, self.lat[first], self.lon[first], counts)

    def summary(self):
        return {"locations": self.n_locations, "users": self.n_users, "checkins": len(self)}


def _parse_time(raw, fmt):
    if fmt in ("epoch", "auto"):
        try:
            t = float(raw)
            if math.isfinite(t):
                return t
        except ValueError:
            if fmt == "epoch":
                raise
    text = raw.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _as_ids(values):
    try:
        return np.array([int(v) for v in values], dtype=np.int64)
    except ValueError:
        return np.array(values, dtype=object).astype(str)


def parse_lines(lines, fmt="auto"):
    if fmt not in FORMATS:
        raise DatasetError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    users, times, lats, lons, locs = [], [], [], [], []
    malformed = 0
    for line in lines:
        if not line.strip():
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 5:
            parts = line.split()
        try:
            if len(parts) != 5:
                raise ValueError("expected 5 fields")
            u, ts, la, lo, loc = parts
            t = _parse_time(ts, fmt)
            la, lo = float(la), float(lo)
            if not (-90.0 <= la <= 90.0 and -180.0 <= lo <= 180.0):
                raise ValueError("coordinate out of range")
        except ValueError:
            malformed += 1
            continue
        users.append(u.strip())
        times.append(t)
        lats.append(la)
        lons.append(lo)
        locs.append(loc.strip())
    if not users:
        raise DatasetError("no valid check-in rows")
    return CheckInDataset.from_columns(_as_ids(users), times, lats, lons, _as_ids(locs), malformed)


def ingest(path, fmt="auto"):
    """Read a tab-separated ``user  time  lat  lon  location`` file."""
    try:
        with open(path, encoding="utf-8") as fh:
            ds = parse_lines(fh, fmt)
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if ds.malformed:
        log.warning("%s: skipped %d malformed rows", path, ds.malformed)
    return ds


def write_checkins(ds, path, fmt="iso"):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(ds)):
            if fmt == "epoch":
                ts = repr(float(ds.time[i]))  # plain float, never "np.float64(...)"
            else:
                ts = datetime.fromtimestamp(ds.time[i], tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            fh.write(f"{ds.user[i]}\t{ts}\t{float(ds.lat[i])!r}\t{float(ds.lon[i])!r}\t{ds.loc[i]}\n")


def filter_dataset(ds, min_user_checkins=20, min_loc_visits=10):
    """Drop rare locations, then (once) users left with too few check-ins."""
    _, loc_inv, loc_counts = np.unique(ds.loc, return_inverse=True, return_counts=True)
    keep = loc_counts[loc_inv] >= min_loc_visits
    ds = ds.subset(keep)
    if len(ds):
        _, user_inv, user_counts = np.unique(ds.user, return_inverse=True, return_counts=True)
        ds = ds.subset(user_counts[user_inv] >= min_user_checkins)
    if len(ds) == 0:
        raise DatasetError("filtering removed every check-in")
    return ds


def format_summary(summary):
    return "\n".join(f"{k}\t{v}" for k, v in summary.items())
