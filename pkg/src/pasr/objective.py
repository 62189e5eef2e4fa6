"""Binary cross-entropy with importance-weighted negatives."""

import numpy as np

from . import autodiff as ad


def importance_weights(y_neg, log_q, temperature=1.0):
    """softmax(y / T - ln Q~) over the last axis, max-shifted for overflow safety."""
    z = np.asarray(y_neg, dtype=np.float64) / temperature - np.asarray(log_q, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _weights_tensor(y_neg, log_q, temperature):
    z = ad.add(ad.mul(y_neg, 1.0 / temperature), -np.asarray(log_q, dtype=np.float64))
    return ad.softmax(z)


def weighted_bce_loss(y_pos, y_neg, log_q, step_mask=None, temperature=1.0,
                      weighted=True, propagate_weights=False, weights=None):
    """-sum over supervised steps of log s(y+) + sum_l w_l log(1 - s(y_l)).

    ``y_pos`` has shape ``S`` and ``y_neg``/``log_q`` shape ``S + (k,)``; steps
    where ``step_mask`` is False contribute nothing. With ``weighted=False``
    every negative carries weight 1 (plain BCE). Weights are constants for
    differentiation unless ``propagate_weights`` is set; passing ``weights``
    uses those constants instead of recomputing them.
    """
    y_pos, y_neg = ad.as_tensor(y_pos), ad.as_tensor(y_neg)
    neg_terms = ad.log_sigmoid(ad.neg(y_neg))
    if weighted:
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
        elif propagate_weights:
            w = _weights_tensor(y_neg, log_q, temperature)
        else:
            w = importance_weights(y_neg.data, log_q, temperature)
        neg_terms = ad.mul(neg_terms, w)
    per_step = ad.add(ad.log_sigmoid(y_pos), ad.sum(neg_terms, axis=-1))
    if step_mask is not None:
        per_step = ad.mul(per_step, np.asarray(step_mask, dtype=np.float64))
    return ad.neg(ad.sum(per_step))


def temperature_limit_check(y_neg, log_q, temperature=1e6):
    """Largest deviation of the importance weights from uniform 1/k."""
    if temperature < 1e6:
        raise ValueError("the limit check expects a temperature of at least 1e6")
    w = importance_weights(y_neg, log_q, temperature)
    return float(np.max(np.abs(w - 1.0 / w.shape[-1])))
