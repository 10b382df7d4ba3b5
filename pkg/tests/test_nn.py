import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rorokit.autodiff import Tensor, grad_check
from rorokit.layout import BBox
from rorokit.nn import (
    AttentionBias,
    EncoderConfig,
    MissingGradientError,
    ParameterError,
    ParameterStore,
    TokenOverflowError,
    attention,
    attention_weights,
    checkpoint_from_json,
    checkpoint_to_json,
    embed,
    encoder_forward,
    fnv1a_hash,
    init_encoder_params,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    sinusoidal_rows,
)

SMALL = EncoderConfig(layers=1, model_dim=8, heads=2, vocab_hash_size=16, max_tokens=16)


def boxes_for(n):
    return [BBox(25 * i, 50, 25 * i + 25, 100) for i in range(n)]


def tiny_inputs(n=3):
    return [f"tok{i}" for i in range(n)], boxes_for(n)


# --- config and store ---


def test_config_validation():
    assert EncoderConfig(layers=0).layers == 0
    assert EncoderConfig(model_dim=64).ffn_dim == 256
    assert EncoderConfig(model_dim=64, heads=4).head_dim == 16
    with pytest.raises(ValueError):
        EncoderConfig(model_dim=10, heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(heads=0)
    cfg = EncoderConfig()
    assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


def test_store_rejects_duplicates_and_unknown_names():
    store = ParameterStore()
    store.add("w", np.zeros(3))
    with pytest.raises(ParameterError):
        store.add("w", np.zeros(3))
    with pytest.raises(ParameterError):
        store["missing"]
    assert "w" in store and store.names() == ["w"]


def test_fnv1a_is_stable():
    # Pinned reference values of the 64-bit FNV-1a function.
    assert fnv1a_hash("") == 0xCBF29CE484222325
    assert fnv1a_hash("a") == 0xAF63DC4C8601EC8C
    assert fnv1a_hash("hello") != fnv1a_hash("Hello")


# --- embedding ---


def test_embed_zero_tables_gives_zero():
    store = ParameterStore()
    d = SMALL.model_dim
    store.add("enc.tok_embed", np.zeros((SMALL.vocab_hash_size, d)))
    for coord in ("x0", "y0", "x1", "y1"):
        store.add(f"enc.coord_{coord}", np.zeros((SMALL.coord_buckets, d)))
    texts, bxs = tiny_inputs()
    out = embed(SMALL, store, list(zip(texts, bxs)))
    assert np.array_equal(out.data, np.zeros((3, d)))


def test_embed_one_hot_token_table():
    store = ParameterStore()
    d = SMALL.model_dim
    table = np.zeros((SMALL.vocab_hash_size, d))
    tok_id = fnv1a_hash("word") % SMALL.vocab_hash_size
    table[tok_id] = np.arange(d)
    store.add("enc.tok_embed", table)
    for coord in ("x0", "y0", "x1", "y1"):
        store.add(f"enc.coord_{coord}", np.zeros((SMALL.coord_buckets, d)))
    out = embed(SMALL, store, [("word", boxes_for(1)[0])])
    assert np.array_equal(out.data[0], np.arange(d))


def test_embed_identical_tokens_identical_rows():
    store = init_encoder_params(SMALL, seed=0)
    box = boxes_for(1)[0]
    out = embed(SMALL, store, [("same", box), ("same", box)])
    assert np.array_equal(out.data[0], out.data[1])


def test_embed_overflow_and_truncate():
    store = init_encoder_params(SMALL, seed=0)
    texts, bxs = tiny_inputs(SMALL.max_tokens + 1)
    pairs = list(zip(texts, [BBox(0, 0, 10, 10)] * len(texts)))
    with pytest.raises(TokenOverflowError):
        embed(SMALL, store, pairs)
    out = embed(SMALL, store, pairs, truncate=True)
    assert out.shape == (SMALL.max_tokens, SMALL.model_dim)


def test_sinusoidal_rows_bounded_and_distinct():
    rows = sinusoidal_rows(1001, 16)
    assert rows.shape == (1001, 16)
    assert np.abs(rows).max() <= 1.0
    # Lattice coordinates (multiples of 25) map to distinct feature rows.
    lattice = rows[::25]
    dists = np.linalg.norm(lattice[:, None] - lattice[None, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    assert dists.min() > 1e-3


# --- attention ---


def test_bias_softmax_example():
    # d_k = 1, zero logits, rho row picks out token 1 with lambda 1.
    q = Tensor(np.zeros((2, 1)))
    k = Tensor(np.zeros((2, 1)))
    bias = AttentionBias(np.array([[0, 1], [0, 0]]), [Tensor(np.array(1.0))])
    w = attention_weights(q, k, heads=1, bias=bias, layer=0)
    assert w.data[0, 0] == pytest.approx((0.26894142, 0.73105858), abs=1e-6)
    assert w.data[0, 1] == pytest.approx((0.5, 0.5))


def test_zero_lambda_matches_vanilla_exactly():
    rng = np.random.default_rng(3)
    q = Tensor(rng.normal(size=(5, 8)))
    k = Tensor(rng.normal(size=(5, 8)))
    v = Tensor(rng.normal(size=(5, 8)))
    rho = (rng.random((5, 5)) < 0.4).astype(float)
    bias = AttentionBias(rho, [Tensor(np.array(0.0))])
    plain = attention(q, k, v, heads=2)
    biased = attention(q, k, v, heads=2, bias=bias, layer=0)
    assert np.abs(plain.data - biased.data).max() <= 1e-12


def test_none_lambda_layer_is_untouched():
    rng = np.random.default_rng(4)
    q = Tensor(rng.normal(size=(4, 4)))
    k = Tensor(rng.normal(size=(4, 4)))
    bias = AttentionBias(np.ones((4, 4)) - np.eye(4), [None, Tensor(np.array(5.0))])
    assert np.array_equal(
        attention_weights(q, k, 2, bias, layer=0).data,
        attention_weights(q, k, 2).data,
    )
    # Past the configured list, no bias applies either.
    assert np.array_equal(
        attention_weights(q, k, 2, bias, layer=7).data,
        attention_weights(q, k, 2).data,
    )


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
@settings(max_examples=40)
def test_attention_rows_sum_to_one(seed, n):
    rng = np.random.default_rng(seed)
    q = Tensor(rng.normal(scale=3.0, size=(n, 8)))
    k = Tensor(rng.normal(scale=3.0, size=(n, 8)))
    rho = (rng.random((n, n)) < 0.5).astype(float)
    bias = AttentionBias(rho, [Tensor(np.array(10.0))])
    w = attention_weights(q, k, heads=4, bias=bias, layer=0)
    assert np.abs(w.data.sum(axis=-1) - 1.0).max() <= 1e-9


def test_bias_weight_increases_with_lambda():
    rng = np.random.default_rng(5)
    q = Tensor(rng.normal(size=(3, 4)))
    k = Tensor(rng.normal(size=(3, 4)))
    rho = np.zeros((3, 3))
    rho[0, 2] = 1.0
    previous = -1.0
    for lam in (0.0, 1.0, 10.0):
        bias = AttentionBias(rho, [Tensor(np.array(lam))])
        w = attention_weights(q, k, heads=2, bias=bias, layer=0)
        current = w.data[0, 0, 2]
        assert current > previous
        previous = current


def test_attention_shape_errors():
    q = Tensor(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        attention_weights(q, Tensor(np.zeros((2, 4))), heads=2)
    with pytest.raises(ValueError):
        attention(q, q, Tensor(np.zeros((2, 4))), heads=2)
    bad_bias = AttentionBias(np.zeros((2, 2)), [Tensor(np.array(1.0))])
    with pytest.raises(ValueError):
        attention_weights(q, q, heads=2, bias=bad_bias)
    with pytest.raises(ValueError):
        AttentionBias(np.full((2, 2), 0.5), [None])


# --- encoder ---


def test_zero_layer_encoder_is_identity_on_embeddings():
    cfg = EncoderConfig(layers=0, model_dim=8, heads=2, vocab_hash_size=16)
    store = init_encoder_params(cfg, seed=1)
    texts, bxs = tiny_inputs()
    out = encoder_forward(cfg, store, texts, bxs)
    expected = embed(cfg, store, list(zip(texts, bxs)))
    assert np.array_equal(out.data, expected.data)


def test_encoder_deterministic():
    store = init_encoder_params(SMALL, seed=2)
    texts, bxs = tiny_inputs(4)
    a = encoder_forward(SMALL, store, texts, bxs)
    b = encoder_forward(SMALL, store, texts, bxs)
    assert np.array_equal(a.data, b.data)


def test_encoder_requires_initialized_params():
    with pytest.raises(ParameterError):
        encoder_forward(SMALL, ParameterStore(), *tiny_inputs())


def test_encoder_rejects_misaligned_inputs():
    store = init_encoder_params(SMALL, seed=0)
    with pytest.raises(ValueError):
        encoder_forward(SMALL, store, ["a", "b"], boxes_for(3))


def test_encoder_bias_dimension_checked():
    store = init_encoder_params(SMALL, seed=0)
    texts, bxs = tiny_inputs(3)
    bias = AttentionBias(np.zeros((2, 2)), [Tensor(np.array(1.0))])
    with pytest.raises(ValueError):
        encoder_forward(SMALL, store, texts, bxs, bias=bias)


def test_encoder_gradients_match_finite_differences():
    cfg = EncoderConfig(layers=1, model_dim=4, heads=2, vocab_hash_size=8, ffn_dim=8)
    store = init_encoder_params(cfg, seed=3, coord_init="normal")
    texts, bxs = tiny_inputs(3)

    def loss():
        out = encoder_forward(cfg, store, texts, bxs)
        return (out * out).sum()

    worst = grad_check(loss, store.as_dict(), samples_per_param=2)
    assert worst < 1e-4, worst


def test_encoder_lambda_gradient_flows():
    cfg = EncoderConfig(layers=1, model_dim=4, heads=2, vocab_hash_size=8, ffn_dim=8)
    store = init_encoder_params(cfg, seed=4)
    lam = store.add("bias.lambda.0", np.array(2.0))
    texts, bxs = tiny_inputs(3)
    rho = np.zeros((3, 3))
    rho[0, 1] = rho[1, 2] = 1.0

    def loss():
        bias = AttentionBias(rho, [store["bias.lambda.0"]])
        out = encoder_forward(cfg, store, texts, bxs, bias=bias)
        return (out * out).sum()

    worst = grad_check(loss, {"lambda": lam}, samples_per_param=1)
    assert worst < 1e-4, worst
    assert lam.grad is not None and abs(lam.grad) > 0


# --- optimizer ---


def test_adamw_zero_gradient_shrinks_by_decay():
    store = ParameterStore()
    p = store.add("w", np.full(4, 2.0))
    p.grad = np.zeros(4)
    optimizer_step(store, learning_rate=0.5, weight_decay=0.01)
    assert np.allclose(p.data, 2.0 - 0.5 * 0.01 * 2.0)


def test_adamw_first_step_is_minus_lr():
    store = ParameterStore()
    p = store.add("w", np.array([0.0]))
    p.grad = np.array([1.0])
    optimizer_step(store, learning_rate=0.1, weight_decay=0.0)
    assert p.data[0] == pytest.approx(-0.1, rel=1e-6)


def test_adamw_deterministic_across_stores():
    def run():
        store = ParameterStore()
        p = store.add("w", np.arange(3, dtype=float))
        for step in range(5):
            p.grad = np.array([1.0, -2.0, 0.5]) * (step + 1)
            optimizer_step(store, learning_rate=0.01)
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_adamw_requires_gradients():
    store = ParameterStore()
    store.add("w", np.zeros(2))
    with pytest.raises(MissingGradientError):
        optimizer_step(store, learning_rate=0.1)


# --- checkpoints ---


def test_checkpoint_round_trip_exact_and_stable(tmp_path):
    cfg = EncoderConfig(layers=1, model_dim=4, heads=2, vocab_hash_size=8, ffn_dim=8)
    store = init_encoder_params(cfg, seed=5)
    text = checkpoint_to_json(cfg.to_dict(), store)
    loaded_cfg, loaded = checkpoint_from_json(text)
    assert EncoderConfig.from_dict(loaded_cfg) == cfg
    assert loaded.names() == store.names()
    for name, tensor in store.items():
        assert np.array_equal(loaded[name].data, tensor.data)
    assert checkpoint_to_json(loaded_cfg, loaded) == text

    path = tmp_path / "model.json"
    save_checkpoint(path, cfg.to_dict(), store)
    save_checkpoint(tmp_path / "model2.json", cfg.to_dict(), store)
    assert path.read_bytes() == (tmp_path / "model2.json").read_bytes()
    cfg2, store2 = load_checkpoint(path)
    assert store2.names() == store.names()


def test_checkpoint_version_checked():
    with pytest.raises(ValueError):
        checkpoint_from_json('{"format_version": 9, "config": {}, "params": {}}')
