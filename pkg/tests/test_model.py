import math

import numpy as np
import pytest

from pasr import autodiff as ad
from pasr.config import ModelConfig
from pasr.geocode import GeoCoordinate, encode_geohash
from pasr.locations import PAD
from pasr.model import PASR, ModelError, expected_param_count

from conftest import tiny_config


def _model(table, seed=0, **kw):
    return PASR(tiny_config(**kw), table, table.bounds(), rng=np.random.default_rng(seed))


# straight-line numpy reference of one block
def _ln(x, g, b):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * g + b


def _att(q, k, v, causal):
    s = q @ k.T / math.sqrt(q.shape[-1])
    if causal:
        s = np.where(np.triu(np.ones(s.shape, bool), 1), -np.inf, s)
    e = np.exp(s - s.max(-1, keepdims=True))
    return (e / e.sum(-1, keepdims=True)) @ v


def _block(x, p, pre, causal):
    g = lambda n: p[f"{pre}.{n}"].data  # noqa: E731
    s = x + _ln(_att(x @ g("wq"), x @ g("wk"), x @ g("wv"), causal), g("ln1.g"), g("ln1.b"))
    f = np.maximum(0, s @ g("ffn.w1") + g("ffn.b1")) @ g("ffn.w2") + g("ffn.b2")
    return s + _ln(f, g("ln2.g"), g("ln2.b"))


def _perturb_params(model, rng):
    # move layer-norm gains/biases off their trivial init so oracles see them
    for name, p in model.params.items():
        p.data += 0.1 * rng.normal(size=p.data.shape)
        if name == "loc_emb":
            p.data[PAD] = 0.0


# ---------------------------------------------------------------- embedding

def test_width_arithmetic():
    assert ModelConfig().width == 200
    assert ModelConfig(use_geo_encoder=False).width == 150
    assert ModelConfig(use_grid_mapper=False).width == 100
    assert ModelConfig(use_geo_encoder=False, use_grid_mapper=False).width == 50


def test_padding_rows_equal_positions(toy_table):
    model = _model(toy_table)
    x = model.embed_locations(np.zeros((2, 5), dtype=int), np.arange(5)[None, :])
    assert np.array_equal(x.data, np.broadcast_to(model.params["pos_emb"].data, (2, 5, 16)))


def test_repeated_location_differs_only_by_position(toy_table):
    model = _model(toy_table)
    x = model.embed_locations(np.array([[3, 7, 3]]), np.arange(3)[None, :]).data[0]
    pos = model.params["pos_emb"].data
    assert np.allclose(x[0] - pos[0], x[2] - pos[2], atol=1e-15)


def test_unknown_id_rejected(toy_table):
    model = _model(toy_table)
    with pytest.raises(ModelError):
        model.embed_locations(np.array([[13]]), np.zeros((1, 1), dtype=int))
    with pytest.raises(ModelError):
        model.rank_candidates([1, 2], [1, 0])


def test_shared_tables_for_inputs_and_targets(toy_table, monkeypatch):
    model = _model(toy_table)
    seen = []
    real = ad.embedding

    def spy(table, idx):
        seen.append(table)
        return real(table, idx)

    monkeypatch.setattr(ad, "embedding", spy)
    model.forward(np.array([[1, 2, 3, 0, 0]]), np.array([[[2, 4], [3, 5], [4, 6], [0, 0], [0, 0]]]))
    loc = [t for t in seen if t is model.params["loc_emb"]]
    rows = [t for t in seen if t is model.params["row_emb"]]
    assert len(loc) == 2 and len(rows) == 2  # once for inputs, once for candidates


# ---------------------------------------------------------------- geography encoder

def test_geo_encode_same_cell_same_vector(toy_table):
    model = _model(toy_table)
    a, b = GeoCoordinate(40.70001, -74.00001), GeoCoordinate(40.70002, -74.00002)
    assert encode_geohash(a, 4) == encode_geohash(b, 4)
    va = model.geo_encode(np.array([a.latitude]), np.array([a.longitude])).data
    vb = model.geo_encode(np.array([b.latitude]), np.array([b.longitude])).data
    assert np.array_equal(va, vb)


def test_geo_encode_single_token_is_block_output(toy_table, rng):
    model = _model(toy_table, geohash_len=2, ngram=2)
    _perturb_params(model, rng)
    tok = np.array([[77]])
    got = model.geo_encode_tokens(tok).data[0]
    e = model.params["geo.tok_emb"].data[77][None, :]
    assert np.allclose(got, _block(e, model.params, "geo.0", causal=False)[0], atol=1e-12)


def test_geo_encode_matches_oracle(toy_table, rng):
    model = _model(toy_table, n_layers=2)
    _perturb_params(model, rng)
    tokens = rng.integers(0, 32 ** 2, (3, 3))
    got = model.geo_encode_tokens(tokens).data
    for r in range(3):
        x = model.params["geo.tok_emb"].data[tokens[r]]
        for layer in range(2):
            x = _block(x, model.params, f"geo.{layer}", causal=False)
        assert np.allclose(got[r], x.mean(0), atol=1e-12)


# ---------------------------------------------------------------- encoder / decoder

def test_encode_matches_straight_line_oracle(toy_table, rng):
    model = _model(toy_table, n_layers=2, m=8, d=3)
    _perturb_params(model, rng)
    x = rng.normal(size=(1, 8, 12))
    got = model.encode(ad.Tensor(x)).data[0]
    want = _block(_block(x[0], model.params, "enc.0", True), model.params, "enc.1", True)
    assert np.allclose(got, want, atol=1e-12)


def test_encode_with_no_layers_is_identity(toy_table, rng):
    model = _model(toy_table, n_layers=0)
    x = rng.normal(size=(2, 5, 16))
    assert np.array_equal(model.encode(ad.Tensor(x)).data, x)


def test_decoder_first_step_returns_first_row(toy_table, rng):
    model = _model(toy_table)
    f = ad.Tensor(rng.normal(size=(1, 5, 16)))
    t = ad.Tensor(rng.normal(size=(1, 5, 16)))
    a = model.decode_target_aware(f, t, ad.causal_mask(5)).data
    assert np.array_equal(a[0, 0], f.data[0, 0])


def test_decoder_matches_oracle(toy_table, rng):
    model = _model(toy_table, m=6)
    f = rng.normal(size=(6, 16))
    t = rng.normal(size=(6, 16))
    a = model.decode_target_aware(ad.Tensor(f[None]), ad.Tensor(t[None]), ad.causal_mask(6)).data[0]
    want = _att(t, f @ model.params["dec.w"].data, f, causal=True)
    assert np.allclose(a, want, atol=1e-13)


def test_decoder_off_is_identity_and_shape_checked(toy_table, rng):
    f = ad.Tensor(rng.normal(size=(1, 5, 16)))
    off = _model(toy_table, use_target_decoder=False)
    assert off.decode_target_aware(f, ad.Tensor(np.ones((1, 5, 16))), None) is f
    on = _model(toy_table)
    with pytest.raises(ModelError):
        on.decode_target_aware(f, ad.Tensor(np.ones((1, 5, 12))), None)


def test_score_examples(rng):
    a, t = rng.normal(size=(2, 7))
    assert PASR.score(ad.Tensor(a), ad.Tensor(np.zeros(7))).item() == 0.0
    e = np.eye(7)[2]
    assert PASR.score(ad.Tensor(e), ad.Tensor(e)).item() == 1.0
    assert PASR.score(ad.Tensor(a), ad.Tensor(t)).item() == pytest.approx(float(np.dot(a, t)), abs=1e-14)


def test_forward_matches_step_oracle(toy_table, rng):
    model = _model(toy_table)
    _perturb_params(model, rng)
    inputs = np.array([[1, 4, 9, 2, 0], [5, 5, 6, 0, 0]])
    cand = rng.integers(1, 13, (2, 5, 3))
    y = model.forward(inputs, cand).data
    steps = np.arange(5)
    f = model.encode(model.embed_locations(inputs, steps[None, :])).data
    w = model.params["dec.w"].data
    for b in range(2):
        for i in range(5):
            t = model.embed_locations(cand[b, i], np.full(3, i)).data
            a = _att(t, f[b, : i + 1] @ w, f[b, : i + 1], causal=False)
            assert np.allclose(y[b, i], (a * t).sum(-1), atol=1e-12)


@pytest.mark.parametrize("flags", [{}, {"use_target_decoder": False}, {"key_pad_mask": True}])
def test_causality(toy_table, rng, flags):
    model = _model(toy_table, **flags)
    _perturb_params(model, rng)
    for _ in range(20):
        inputs = rng.integers(1, 13, (2, 5))
        cand = rng.integers(1, 13, (2, 5, 3))
        i = int(rng.integers(0, 4))
        y = model.forward(inputs, cand).data
        x = model.encode(model.embed_locations(inputs, np.arange(5)[None, :])).data
        inputs2, cand2 = inputs.copy(), cand.copy()
        inputs2[:, i + 1:] = rng.integers(0, 13, (2, 4 - i))
        cand2[:, i + 1:] = rng.integers(1, 13, (2, 4 - i, 3))
        y2 = model.forward(inputs2, cand2).data
        x2 = model.encode(model.embed_locations(inputs2, np.arange(5)[None, :])).data
        assert np.array_equal(y[:, : i + 1], y2[:, : i + 1])
        assert np.array_equal(x[:, : i + 1], x2[:, : i + 1])


# ---------------------------------------------------------------- inference

@pytest.mark.parametrize("flags", [{}, {"use_target_decoder": False}])
def test_score_candidates_agrees_with_training_path(toy_table, rng, flags):
    model = _model(toy_table, **flags)
    _perturb_params(model, rng)
    hist = [3, 8, 1]
    cand = np.array([[2, 5, 11, 7]])
    inputs = np.array([[3, 8, 1, 0, 0]])
    full = np.zeros((1, 5, 4), dtype=int)
    full[0, 2] = cand[0]
    y = model.forward(inputs, np.where(full == 0, 1, full)).data[0, 2]
    assert np.allclose(model.score_candidates([hist], cand)[0], y, atol=1e-12)


def test_history_truncated_to_most_recent(toy_table):
    model = _model(toy_table)
    long = [9, 9, 9, 1, 2, 3, 4, 5]
    a = model.score_candidates([long], np.array([[6, 7]]))
    b = model.score_candidates([long[-5:]], np.array([[6, 7]]))
    assert np.array_equal(a, b)


def test_rank_candidates_properties(toy_table, rng):
    model = _model(toy_table)
    scores, order = model.rank_candidates([1, 2, 3], [4, 4, 9])
    assert scores[0] == scores[1]
    assert model.rank_candidates([1, 2, 3], [6])[1].tolist() == [0]
    cand = rng.permutation(np.arange(1, 13))
    s1, o1 = model.rank_candidates([5, 6], cand)
    s2, o2 = model.rank_candidates([5, 6], cand[::-1])
    assert np.array_equal(cand[o1], cand[::-1][o2])


def test_rank_ties_broken_by_id(toy_table, monkeypatch):
    model = _model(toy_table)
    monkeypatch.setattr(model, "score_candidates", lambda h, c: np.where(c == 2, 5.0, 1.0))
    _, order = model.rank_candidates([1, 2], [8, 3, 2, 11, 5])
    assert np.array([8, 3, 2, 11, 5])[order].tolist() == [2, 3, 5, 8, 11]


# ---------------------------------------------------------------- structure

ABLATION_FLAGS = {
    "PASR": {},
    "-GE": {"use_geo_encoder": False},
    "-GM": {"use_grid_mapper": False},
    "-GE-GM": {"use_geo_encoder": False, "use_grid_mapper": False},
    "-TAAD": {"use_target_decoder": False},
    "geo-positions": {"geo_positional": True},
}


@pytest.mark.parametrize("name", list(ABLATION_FLAGS))
def test_parameter_counts(toy_table, name):
    cfg = tiny_config(**ABLATION_FLAGS[name])
    model = PASR(cfg, toy_table, toy_table.bounds())
    assert model.params.count() == expected_param_count(cfg, 12)


def test_parameter_count_by_hand():
    # d=4, d_h=6, one layer, m=5, bigrams over length-4 geohashes, G=7, Q=12
    blk = lambda w: 3 * w * w + 2 * w + (w * 6 + 6) + (6 * w + w) + 2 * w  # noqa: E731
    w = 16
    full = 13 * 4 + 5 * w + blk(w) + (1024 * 4 + blk(4)) + 2 * 7 * 4 + w * w
    assert expected_param_count(tiny_config(), 12) == full
    bare = 13 * 4 + 5 * 4 + blk(4) + 4 * 4
    assert expected_param_count(tiny_config(use_geo_encoder=False, use_grid_mapper=False), 12) == bare


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("flags", [{}, {"use_target_decoder": False, "geo_positional": True}])
def test_loss_gradients_match_finite_differences(small_dataset, flags):
    from pasr.config import RunConfig
    from pasr.pipeline import build_sequences
    from pasr.pipeline.training import batch_loss, make_batch, make_sampler
    from pasr.objective import importance_weights

    prep = build_sequences(small_dataset, m=4, eval_negatives=5, seed=0)
    cfg = RunConfig(d=2, d_h=3, m=4, ngram=1, geohash_len=2, grid_intervals=4, knn=5, neg_count=2, **flags)
    model = PASR(cfg.model_config(), prep.table, prep.bounds, rng=np.random.default_rng(1))
    batch = make_batch(prep.train, np.arange(3), make_sampler(cfg, prep.table), cfg, np.random.default_rng(2))
    y = model.forward(batch.inputs, batch.candidates).data
    w = importance_weights(y[..., 1:], batch.log_q)  # frozen for the numeric side
    model.params.zero_grad()
    batch_loss(model, batch, weights=w).backward()
    for name, p in model.params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if p.data.ndim == 2 and p.data.shape[0] > 40:
            rows = np.unique(np.concatenate([np.flatnonzero(np.abs(g).sum(1)), [0, len(p.data) - 1]]))
        else:
            rows = None
        num = np.zeros_like(p.data)
        for ix in np.ndindex(p.data.shape):
            if rows is not None and ix[0] not in rows:
                continue
            old = p.data[ix]
            p.data[ix] = old + 1e-5
            up = batch_loss(model, batch, weights=w).item()
            p.data[ix] = old - 1e-5
            down = batch_loss(model, batch, weights=w).item()
            p.data[ix] = old
            num[ix] = (up - down) / 2e-5
        err = np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12)
        assert err < 1e-4, (name, err)
