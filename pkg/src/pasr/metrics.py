"""HR@k / NDCG@k over the 1-target + sampled-negatives ranking protocol."""

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RankOutcome:
    user: object
    rank: int


def target_ranks(scores, candidates, target_col=0):
    """1-based rank of ``candidates[:, target_col]`` when sorting by descending
    score with ties broken by ascending candidate id."""
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.asarray(candidates)
    rows = np.arange(len(scores))
    ts = scores[rows, target_col][:, None]
    tid = candidates[rows, target_col][:, None]
    ahead = (scores > ts) | ((scores == ts) & (candidates < tid))
    return 1 + ahead.sum(axis=1)


def _ranks(outcomes):
    ranks = np.array([o.rank if isinstance(o, RankOutcome) else o for o in outcomes], dtype=np.int64)
    if ranks.size == 0:
        raise MetricError("no outcomes")
    if np.any(ranks < 1):
        raise MetricError("ranks are 1-based")
    return ranks


def hit_rate_at_k(outcomes, k):
    if k < 1:
        raise MetricError("k must be >= 1")
    return float(np.mean(_ranks(outcomes) <= k))


def ndcg_at_k(outcomes, k):
    """Mean DCG/IDCG with a single relevant item: 1/log2(rank+1) inside the top k."""
    if k < 1:
        raise MetricError("k must be >= 1")
    r = _ranks(outcomes)
    return float(np.mean(np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0)))


def metric_table(outcomes, ks=(5, 10)):
    table = {}
    for k in ks:
        table[f"HR@{k}"] = hit_rate_at_k(outcomes, k)
        table[f"NDCG@{k}"] = ndcg_at_k(outcomes, k)
    return table


def evaluate(model, split, ks=(5, 10), batch_size=256):
    """Rank every user's candidates with ``model``; returns (metrics, ranks)."""
    if split.candidates.shape[1] < 2:
        raise MetricError("split has no negative candidates")
    ranks = np.empty(len(split), dtype=np.int64)
    for start in range(0, len(split), batch_size):
        stop = min(len(split), start + batch_size)
        scores = model.score_candidates(split.histories[start:stop], split.candidates[start:stop])
        ranks[start:stop] = target_ranks(scores, split.candidates[start:stop])
    return metric_table(ranks, ks), ranks


def format_table(rows, columns=None):
    """Tab-separated table: one row per ``(name, metrics)`` pair."""
    rows = list(rows)
    columns = columns or list(rows[0][1])
    lines = ["variant\t" + "\t".join(columns)]
    for name, metrics in rows:
        lines.append(name + "\t" + "\t".join(f"{metrics[c]:.4f}" for c in columns))
    return "\n".join(lines) + "\n"


def format_kv(metrics):
    return "".join(f"{k}={v!r}\n" for k, v in metrics.items())


def format_comparison(results, metrics=("HR@5", "NDCG@5", "HR@10", "NDCG@10")):
    """One column per variant (in insertion order), one row per metric."""
    names = list(results)
    lines = ["metric\t" + "\t".join(names)]
    for m in metrics:
        lines.append(m + "\t" + "\t".join(f"{results[n][m]:.4f}" for n in names))
    return "\n".join(lines) + "\n"
