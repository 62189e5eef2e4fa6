"""The recommender network.

Location representation = concat(location id embedding, geography-encoder
vector, grid-row embedding, grid-column embedding) + learned position
embedding. A causal self-attention encoder turns the input sequence into
``F``; a target-aware decoder lets every candidate attend over ``F`` before a
dot-product score.
"""

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .locations import PAD, LocationFeatures


class ModelError(ValueError):
    pass


def _block_param_names(prefix):
    return [f"{prefix}.{n}" for n in (
        "wq", "wk", "wv", "ln1.g", "ln1.b", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln2.g", "ln2.b")]


def _add_block(params, prefix, width, hidden, rng):
    s = 1.0 / math.sqrt(width)
    for name in ("wq", "wk", "wv"):
        params.add(f"{prefix}.{name}", rng.normal(0.0, s, (width, width)))
    params.add(f"{prefix}.ln1.g", np.ones(width))
    params.add(f"{prefix}.ln1.b", np.zeros(width))
    params.add(f"{prefix}.ffn.w1", rng.normal(0.0, s, (width, hidden)))
    params.add(f"{prefix}.ffn.b1", np.zeros(hidden))
    params.add(f"{prefix}.ffn.w2", rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, width)))
    params.add(f"{prefix}.ffn.b2", np.zeros(width))
    params.add(f"{prefix}.ln2.g", np.ones(width))
    params.add(f"{prefix}.ln2.b", np.zeros(width))


def block_param_count(width, hidden):
    return 3 * width * width + 4 * width + width * hidden + hidden + hidden * width + width


def expected_param_count(cfg, n_locations):
    """Closed-form parameter count for a configuration (used to check ablations)."""
    d, w = cfg.d, cfg.width
    total = (n_locations + 1) * d + cfg.m * w
    total += cfg.n_layers * block_param_count(w, cfg.d_h)
    if cfg.use_geo_encoder:
        tokens = cfg.geohash_len - cfg.ngram + 1
        total += 32 ** cfg.ngram * d + cfg.n_layers * block_param_count(d, cfg.d_h)
        if cfg.geo_positional:
            total += tokens * d
    if cfg.use_grid_mapper:
        total += 2 * cfg.grid_intervals * d
    if cfg.use_target_decoder:
        total += w * w
    return total


def init_params(cfg, n_locations, rng):
    d, w = cfg.d, cfg.width
    params = ad.ParamSet()
    loc = rng.normal(0.0, 1.0 / math.sqrt(d), (n_locations + 1, d))
    loc[PAD] = 0.0
    params.add("loc_emb", loc)
    if cfg.use_geo_encoder:
        params.add("geo.tok_emb", rng.normal(0.0, 1.0 / math.sqrt(d), (32 ** cfg.ngram, d)))
        if cfg.geo_positional:
            tokens = cfg.geohash_len - cfg.ngram + 1
            params.add("geo.pos_emb", rng.normal(0.0, 1.0 / math.sqrt(d), (tokens, d)))
        for layer in range(cfg.n_layers):
            _add_block(params, f"geo.{layer}", d, cfg.d_h, rng)
    if cfg.use_grid_mapper:
        params.add("row_emb", rng.normal(0.0, 1.0 / math.sqrt(d), (cfg.grid_intervals, d)))
        params.add("col_emb", rng.normal(0.0, 1.0 / math.sqrt(d), (cfg.grid_intervals, d)))
    params.add("pos_emb", rng.normal(0.0, 1.0 / math.sqrt(w), (cfg.m, w)))
    for layer in range(cfg.n_layers):
        _add_block(params, f"enc.{layer}", w, cfg.d_h, rng)
    if cfg.use_target_decoder:
        params.add("dec.w", rng.normal(0.0, 1.0 / math.sqrt(w), (w, w)))
    return params


def attention_block(x, p, prefix, mask=None):
    """S = X + LN(SA(X)); F = S + LN(FFN(S))."""
    sa = ad.attention(x @ p[f"{prefix}.wq"], x @ p[f"{prefix}.wk"], x @ p[f"{prefix}.wv"], mask)
    s = x + ad.layer_norm(sa, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    f = ad.ffn(s, p[f"{prefix}.ffn.w1"], p[f"{prefix}.ffn.b1"], p[f"{prefix}.ffn.w2"], p[f"{prefix}.ffn.b2"])
    return s + ad.layer_norm(f, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])


def _key_mask(valid):
    """Additive ``(B, 1, m)`` mask hiding keys where ``valid`` is False."""
    return np.where(valid, 0.0, -np.inf)[:, None, :]


class PASR:
    def __init__(self, cfg, table, bounds, params=None, rng=None):
        self.cfg = cfg
        self.table = table
        self.bounds = bounds
        self.features = LocationFeatures.build(table, bounds, cfg)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = init_params(cfg, table.n_locations, rng)
        self.params = params

    @property
    def n_locations(self):
        return self.table.n_locations

    # ---------------------------------------------------------------- parts

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() > self.n_locations):
            raise ModelError(f"location id outside [0, {self.n_locations}]")
        return ids

    def geo_encode_tokens(self, tokens):
        """Geography-encoder vectors ``(U, d)`` for token rows ``(U, n_tokens)``."""
        p = self.params
        x = ad.embedding(p["geo.tok_emb"], tokens)
        if self.cfg.geo_positional:
            x = x + p["geo.pos_emb"]
        for layer in range(self.cfg.n_layers):
            x = attention_block(x, p, f"geo.{layer}")
        return ad.mean(x, axis=-2)

    def geo_encode(self, lat, lon):
        from . import geocode

        digits = geocode.geohash_digits(lat, lon, self.cfg.geohash_len)
        return self.geo_encode_tokens(geocode.ngram_ids(digits, self.cfg.ngram))

    def embed_locations(self, ids, positions, geo_cache=None):
        """Input/target representation of ``ids`` at sequence ``positions``.

        ``positions`` broadcasts against ``ids``. Padding ids give a zero
        location part, so the row equals its position embedding.
        """
        ids = self._check_ids(ids)
        p = self.params
        parts = [ad.embedding(p["loc_emb"], ids)]
        if self.cfg.use_geo_encoder:
            if geo_cache is None:
                geo_cache = self.geo_cache(ids)
            uniq, table = geo_cache
            parts.append(ad.embedding(table, np.searchsorted(uniq, ids)))
        if self.cfg.use_grid_mapper:
            parts.append(ad.embedding(p["row_emb"], self.features.rows[ids]))
            parts.append(ad.embedding(p["col_emb"], self.features.cols[ids]))
        x = ad.concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        x = x * (ids != PAD)[..., None].astype(np.float64)
        return x + ad.embedding(p["pos_emb"], np.asarray(positions, dtype=np.int64))

    def geo_cache(self, *id_arrays):
        """Encode every distinct id once; returns ``(sorted ids, (U, d) tensor)``."""
        uniq = np.unique(np.concatenate([np.asarray(a).ravel() for a in id_arrays]))
        return uniq, self.geo_encode_tokens(self.features.geo_tokens[uniq])

    def encode(self, x, valid=None):
        """Causal encoder over ``x`` of shape ``(B, m, width)``."""
        m = x.shape[-2]
        mask = ad.causal_mask(m)
        if self.cfg.key_pad_mask and valid is not None:
            mask = mask[None] + _key_mask(valid)
        for layer in range(self.cfg.n_layers):
            x = attention_block(x, self.params, f"enc.{layer}", mask)
        return x

    def decode_target_aware(self, f, t, mask):
        """A = Attention(T, F W, F); identity on F when the decoder is disabled."""
        if not self.cfg.use_target_decoder:
            return f
        if t.shape[-1] != f.shape[-1]:
            raise ModelError(f"target width {t.shape[-1]} != encoder width {f.shape[-1]}")
        return ad.attention(t, f @ self.params["dec.w"], f, mask)

    @staticmethod
    def score(a, t):
        """Dot-product preference score over the last axis."""
        return ad.sum(ad.mul(a, t), axis=-1)

    # ---------------------------------------------------------------- training path

    def forward(self, inputs, candidates):
        """Scores ``(B, m, C)`` of ``candidates[b, i, :]`` at every step ``i``.

        ``inputs`` is ``(B, m)``; candidate column 0 is conventionally the
        positive target and the rest are sampled negatives.
        """
        inputs = self._check_ids(inputs)
        candidates = self._check_ids(candidates)
        b, m = inputs.shape
        c = candidates.shape[-1]
        cache = self.geo_cache(inputs, candidates) if self.cfg.use_geo_encoder else None
        steps = np.arange(m)
        e_in = self.embed_locations(inputs, steps[None, :], cache)
        t = self.embed_locations(candidates, steps[None, :, None], cache)
        f = self.encode(e_in, inputs != PAD)
        if not self.cfg.use_target_decoder:
            y = ad.matmul(t, ad.reshape(f, (b, m, f.shape[-1], 1)))
            return ad.reshape(y, (b, m, c))
        q = ad.reshape(t, (b, m * c, t.shape[-1]))
        mask = ad.causal_mask(m, c)
        if self.cfg.key_pad_mask:
            mask = mask[None] + _key_mask(inputs != PAD)
        a = self.decode_target_aware(f, q, mask)
        return ad.reshape(self.score(a, q), (b, m, c))

    # ---------------------------------------------------------------- inference

    def pad_histories(self, histories):
        m = self.cfg.m
        out = np.full((len(histories), m), PAD, dtype=np.int64)
        lengths = np.empty(len(histories), dtype=np.int64)
        for r, h in enumerate(histories):
            h = np.asarray(h, dtype=np.int64)[-m:]
            if h.size == 0:
                raise ModelError("empty history")
            out[r, : h.size] = h
            lengths[r] = h.size
        return out, lengths

    def score_candidates(self, histories, candidates):
        """Scores ``(B, C)`` of candidate rows given padded histories.

        Each history keeps its most recent ``m`` check-ins; the query sits at
        the last real step and attends over the whole encoded history.
        """
        seqs, lengths = self.pad_histories(histories)
        candidates = self._check_ids(candidates)
        if np.any(candidates == PAD):
            raise ModelError("padding id used as a candidate")
        b, m = seqs.shape
        last = lengths - 1
        with ad.no_grad():
            cache = self.geo_cache(seqs, candidates) if self.cfg.use_geo_encoder else None
            f = self.encode(self.embed_locations(seqs, np.arange(m)[None, :], cache), seqs != PAD)
            t = self.embed_locations(candidates, last[:, None], cache)
            if self.cfg.use_target_decoder:
                visible = np.arange(m)[None, :] <= last[:, None]
                if self.cfg.key_pad_mask:
                    visible &= seqs != PAD
                a = self.decode_target_aware(f, t, _key_mask(visible))
                y = self.score(a, t).data
            else:
                f_last = f.data[np.arange(b), last]
                y = np.einsum("bcw,bw->bc", t.data, f_last)
        return y

    def rank_candidates(self, history, candidates):
        """Scores for one user's ``candidates`` and their 1-based ranking order."""
        candidates = np.asarray(candidates, dtype=np.int64)
        if np.any(candidates < 1) or np.any(candidates > self.n_locations):
            raise ModelError("unknown candidate id")
        scores = self.score_candidates([history], candidates[None, :])[0]
        order = np.lexsort((candidates, -scores))
        return scores, order
