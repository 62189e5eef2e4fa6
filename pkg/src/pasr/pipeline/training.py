"""Mini-batch training loop."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..model import PASR
from ..objective import weighted_bce_loss
from ..sampling import NegativeSampler, build_knn_index, steps_negatives

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class SequenceBatch:
    inputs: np.ndarray  # (B, m)
    targets: np.ndarray  # (B, m)
    step_mask: np.ndarray  # (B, m) supervised steps
    negatives: np.ndarray  # (B, m, k)
    log_q: np.ndarray  # (B, m, k)

    @property
    def candidates(self):
        return np.concatenate([self.targets[..., None], self.negatives], axis=-1)


@dataclass
class TrainResult:
    model: PASR
    epoch_losses: list = field(default_factory=list)
    log_lines: list = field(default_factory=list)  # "epoch<TAB>mean loss<TAB>wall seconds"
    epoch_seconds: list = field(default_factory=list)


def make_sampler(cfg, table, index=None):
    if cfg.sampler != "uniform" and index is None:
        index = build_knn_index(table.lat, table.lon, cfg.knn)
    return NegativeSampler(cfg.sampler, table.n_locations, index, table.counts)


def make_batch(train, rows, sampler, cfg, rng):
    inputs, targets, mask = train.inputs_targets(rows)
    neg, log_q = steps_negatives(sampler, inputs, targets, cfg.neg_count, rng, cfg.knn_anchor)
    return SequenceBatch(inputs, targets, mask, neg, log_q)


def batch_loss(model, batch, weights=None):
    cfg = model.cfg
    y = model.forward(batch.inputs, batch.candidates)
    return weighted_bce_loss(y[..., 0], y[..., 1:], batch.log_q, batch.step_mask,
                             temperature=cfg.temperature, weighted=cfg.weighted_loss,
                             propagate_weights=cfg.propagate_weights, weights=weights)


def train(cfg, prepared, index=None, on_epoch=None):
    """Train a fresh model on ``prepared.train`` with Adam.

    Each epoch reshuffles the chunks and draws fresh negatives. The result
    is a pure function of ``cfg`` (including ``cfg.seed``) and the data.
    """
    init_rng, order_rng, neg_rng = (np.random.default_rng(s)
                                    for s in np.random.SeedSequence(cfg.seed).spawn(3))
    model = PASR(cfg.model_config(), prepared.table, prepared.bounds, rng=init_rng)
    sampler = make_sampler(cfg, prepared.table, index)
    opt = ad.Adam(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    result = TrainResult(model)
    seqs = prepared.train
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(seqs))
        total, steps = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = make_batch(seqs, order[start:start + cfg.batch_size], sampler, cfg, neg_rng)
            model.params.zero_grad()
            try:
                loss = batch_loss(model, batch)
                loss.backward()
                opt.step()
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch at {start}: {exc}") from exc
            total += loss.item()
            steps += int(batch.step_mask.sum())
        mean_loss = total / max(steps, 1)
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(f"epoch {epoch}: loss is {mean_loss}")
        seconds = time.perf_counter() - t0
        line = f"{epoch}\t{mean_loss!r}\t{seconds:.3f}"
        result.epoch_losses.append(mean_loss)
        result.epoch_seconds.append(seconds)
        result.log_lines.append(line)
        log.info("epoch %s", line)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, model)
    return result
