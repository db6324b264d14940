import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zeroload.errors import ShapeMismatch
from zeroload.model.layers import (
    causal_mask,
    ffn,
    layer_norm,
    positional_encoding,
    positional_table,
    residual,
    self_attention,
    softmax,
)

finite = st.floats(-100, 100, allow_nan=False)


def test_positional_encoding_at_zero():
    for d in (2, 5, 8, 64):
        pe = positional_encoding(0, d)
        np.testing.assert_array_equal(pe, [0.0 if i % 2 == 0 else 1.0 for i in range(d)])


def test_positional_encoding_first_entry():
    assert positional_encoding(1, 16)[0] == pytest.approx(math.sin(1.0), abs=1e-15)
    assert round(positional_encoding(1, 16)[0], 5) == 0.84147


@given(st.integers(0, 10_000), st.integers(1, 64))
def test_positional_encoding_range(pos, d):
    pe = positional_encoding(pos, d)
    assert pe.shape == (d,)
    assert np.all(np.abs(pe) <= 1.0)


def test_positional_encodings_are_distinct():
    for d in (4, 8, 64):
        table = positional_table(512, d)
        sq = np.sum(table**2, axis=1)
        dist = sq[:, None] + sq[None, :] - 2 * table @ table.T
        off = dist[~np.eye(512, dtype=bool)]
        assert off.min() > 0


def attention_oracle(x, wq, wk, wv, wo, mask=None):
    """Straight-line single-head attention with explicit loops."""
    t, d = len(x), len(x[0])

    def matmul(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
                for i in range(len(a))]

    q, k, v = matmul(x, wq), matmul(x, wk), matmul(x, wv)
    ctx = []
    for i in range(t):
        scores = []
        for j in range(t):
            if mask is not None and not mask[i][j]:
                continue
            scores.append((j, sum(q[i][c] * k[j][c] for c in range(d)) / math.sqrt(d)))
        top = max(s for _, s in scores)
        exps = [(j, math.exp(s - top)) for j, s in scores]
        total = sum(e for _, e in exps)
        ctx.append([sum(e / total * v[j][c] for j, e in exps) for c in range(d)])
    return np.array(matmul(ctx, wo))


def test_attention_matches_oracle():
    x = np.array([[0.1, -0.2], [0.3, 0.4], [-0.5, 0.25]])
    w = {"wq": np.array([[0.2, -0.1], [0.05, 0.3]]), "wk": np.array([[-0.3, 0.1], [0.2, 0.2]]),
         "wv": np.array([[0.5, 0.1], [-0.2, 0.4]]), "wo": np.array([[1.0, 0.2], [0.1, 0.9]])}
    expected = attention_oracle(x, w["wq"], w["wk"], w["wv"], w["wo"])
    np.testing.assert_allclose(self_attention(x, w), expected, rtol=0, atol=1e-12)
    causal = np.tril(np.ones((3, 3), dtype=bool))
    expected = attention_oracle(x, w["wq"], w["wk"], w["wv"], w["wo"], causal)
    np.testing.assert_allclose(self_attention(x, w, causal=True), expected, rtol=0, atol=1e-12)


def test_single_position_attends_to_itself():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 4))
    w = {k: rng.normal(size=(4, 4)) for k in ("wq", "wk", "wv")}
    out, weights = self_attention(x, w, return_weights=True)
    assert weights[0, 0, 0] == 1.0
    np.testing.assert_allclose(out, x @ w["wv"], atol=1e-12)


def test_identical_positions_split_evenly():
    rng = np.random.default_rng(1)
    x = np.tile(rng.normal(size=(1, 4)), (2, 1))
    w = {k: rng.normal(size=(4, 4)) for k in ("wq", "wk", "wv")}
    _, weights = self_attention(x, w, n_heads=2, return_weights=True)
    np.testing.assert_allclose(weights, 0.5, atol=1e-15)


@given(arrays(float, (5, 4), elements=finite), st.integers(0, 100))
def test_attention_weights_are_distributions(x, seed):
    rng = np.random.default_rng(seed)
    w = {k: rng.normal(size=(4, 4)) for k in ("wq", "wk", "wv")}
    _, weights = self_attention(x, w, n_heads=2, causal=True, return_weights=True)
    assert np.all(weights >= 0)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(weights[..., ~causal_mask(5)[0, 0]] == 0)


@given(arrays(float, (3, 7), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    np.testing.assert_allclose(softmax(x).sum(axis=-1), 1.0, atol=1e-9)


def test_layer_norm_examples():
    np.testing.assert_array_equal(layer_norm(np.full(4, 3.0), np.array([2.0, -1, 5, 7])), 0.0)
    np.testing.assert_allclose(layer_norm([1.0, -1.0], np.ones(2)), [1.0, -1.0], atol=1e-4)
    # sigma = 1 exactly, so only the epsilon separates the result from [1, -1]
    np.testing.assert_allclose(layer_norm([1.0, -1.0], np.ones(2)), np.array([1, -1]) / (1 + 1e-5),
                               rtol=1e-15)


@given(arrays(float, st.integers(2, 16), elements=finite))
def test_layer_norm_centres(x):
    y = layer_norm(x, np.ones(len(x)))
    assert abs(y.mean()) < 1e-9


def test_ffn_examples():
    x = np.array([1.0, -2.0])
    zeros = [np.zeros((2, 3)), np.zeros(3), np.zeros((3, 2)), np.zeros(2)]
    np.testing.assert_array_equal(ffn(x, *zeros), [0.0, 0.0])
    neg = [np.zeros((2, 3)), -np.ones(3), np.ones((3, 2)), -np.ones(2)]
    np.testing.assert_array_equal(ffn(x, *neg), [0.0, 0.0])
    w1 = np.array([[1.0, 0.5, -1.0], [0.0, 1.0, 2.0]])
    b1 = np.array([0.5, 3.0, 1.0])
    w2 = np.array([[1.0, -1.0], [2.0, 0.5], [0.0, 1.0]])
    b2 = np.array([0.0, -1.0])
    # hidden = relu([1.5, 1.5, -4]) = [1.5, 1.5, 0]; out = relu([4.5, -1.75]) = [4.5, 0]
    np.testing.assert_allclose(ffn(x, w1, b1, w2, b2), [4.5, 0.0], atol=1e-15)
    with pytest.raises(ShapeMismatch):
        ffn(x, w1, b1, w2.T, b2)


def test_residual():
    rng = np.random.default_rng(2)
    x, f = rng.normal(size=6), rng.normal(size=6)
    np.testing.assert_array_equal(residual(x, np.zeros(6)), x)
    np.testing.assert_array_equal(residual(x, x), 2 * x)
    np.testing.assert_array_equal(residual(x, f), [a + b for a, b in zip(x, f)])
    with pytest.raises(ShapeMismatch):
        residual(x, f[:5])
