"""Leave-one-out splitting and fixed-length training sequences."""

import logging
from dataclasses import dataclass

import numpy as np

from ..locations import PAD

log = logging.getLogger(__name__)


@dataclass
class TrainingSequences:
    """Right-padded chunks of dense ids; ``lengths`` counts real check-ins.

    ``targets[s, i]`` is the check-in following ``ids[s, i]``: inside the
    chunk it is the next row entry, and at the chunk's last entry it is the
    first check-in of the following chunk (``PAD`` for the user's final chunk).
    """

    ids: np.ndarray  # (S, m)
    targets: np.ndarray  # (S, m)
    lengths: np.ndarray  # (S,)
    users: np.ndarray  # (S,) row index into EvalSplit.users

    def __len__(self):
        return len(self.lengths)

    def inputs_targets(self, rows=None):
        """Inputs, next-step targets and the supervised-step mask for ``rows``."""
        rows = slice(None) if rows is None else rows
        targets = self.targets[rows]
        return self.ids[rows], targets, targets != PAD

    def unpadded(self, row):
        return self.ids[row, : self.lengths[row]]


@dataclass
class EvalSplit:
    """Per user: history (most recent ``m`` check-ins), target and candidates.

    ``candidates[:, 0]`` is the target; the remaining columns are negatives.
    """

    users: np.ndarray
    histories: list
    targets: np.ndarray
    candidates: np.ndarray

    def __len__(self):
        return len(self.targets)


@dataclass
class Prepared:
    table: object
    bounds: object
    train: TrainingSequences
    test: EvalSplit
    probe: EvalSplit  # last training transition of each user, same protocol as ``test``
    prefixes: list  # full training prefix (dense ids) per user


def eval_target_index(seq):
    """Index of the last check-in at a location not seen earlier in ``seq``."""
    seen = set()
    last = -1
    for i, loc in enumerate(seq.tolist()):
        if loc not in seen:
            last = i
            seen.add(loc)
    return last


def chunk_right_to_left(n, m):
    """``(start, stop)`` spans of non-overlapping chunks counted from the right."""
    spans = []
    stop = n
    while stop > 0:
        start = max(0, stop - m)
        spans.append((start, stop))
        stop = start
    return spans[::-1]


def sample_candidates(target, n_locations, count, rng):
    """``count`` distinct ids uniformly from ``1..Q`` without ``target``."""
    if count > n_locations - 1:
        raise ValueError(f"cannot draw {count} negatives from {n_locations - 1} locations")
    draw = rng.choice(n_locations - 1, size=count, replace=False) + 1
    draw = draw + (draw >= target)
    return draw


def _split(users, histories, targets, n_locations, count, rng):
    cands = np.empty((len(targets), count + 1), dtype=np.int64)
    for r, t in enumerate(targets):
        cands[r, 0] = t
        cands[r, 1:] = sample_candidates(t, n_locations, count, rng)
    return EvalSplit(np.asarray(users), histories, np.asarray(targets, dtype=np.int64), cands)


def build_sequences(ds, m=50, eval_negatives=100, seed=0):
    """Chunks for training plus the held-out and probe evaluation splits."""
    table_all = ds.location_table()
    dense = table_all.dense_ids(ds.loc)
    users, prefixes, test_hist, test_t = [], [], [], []
    count_mask = np.zeros(len(ds), dtype=bool)
    for user, sl in ds.user_slices():
        seq = dense[sl]
        t = eval_target_index(seq)
        if t < 2:
            log.warning("user %s skipped: fewer than 2 check-ins before the held-out target", user)
            continue
        prefix = seq[:t]
        count_mask[sl.start: sl.start + t] = True
        users.append(user)
        prefixes.append(prefix)
        test_hist.append(prefix[-m:])
        test_t.append(seq[t])
    if not users:
        raise ValueError("no user has a usable training prefix")
    table = ds.location_table(count_mask)

    rows, nexts, lengths, owners = [], [], [], []
    for u, prefix in enumerate(prefixes):
        for start, stop in chunk_right_to_left(len(prefix), m):
            if stop - start < 2:
                continue
            row = np.full(m, PAD, dtype=np.int64)
            row[: stop - start] = prefix[start:stop]
            nxt = np.full(m, PAD, dtype=np.int64)
            follow = prefix[start + 1: stop + 1]
            nxt[: len(follow)] = follow
            rows.append(row)
            nexts.append(nxt)
            lengths.append(stop - start)
            owners.append(u)
    train = TrainingSequences(np.array(rows), np.array(nexts), np.array(lengths), np.array(owners))

    rng = np.random.default_rng(seed)
    q = table.n_locations
    test = _split(users, test_hist, test_t, q, eval_negatives, rng)
    probe_hist = [p[:-1][-m:] for p in prefixes]
    probe = _split(users, probe_hist, [p[-1] for p in prefixes], q, eval_negatives, rng)
    return Prepared(table, table.bounds(), train, test, probe, prefixes)
