import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroload.augment import (
    MixupSpec,
    draw_subsequences,
    generate_corpus,
    mix,
    output_rng,
    sample_weights,
    ts_mixup,
)
from zeroload.errors import PoolTooSmall, SubsequenceTooShort, ValidationError
from zeroload.series import TimeSeries


def sine_pool(periods=(12, 24), length=200):
    t = np.arange(length, dtype=float)
    return [TimeSeries(f"p{p}-{k}", 5 + (k + 1) * np.sin(2 * np.pi * t / p + k))
            for p in periods for k in range(2)]


def test_identity_weight_returns_first_subsequence():
    pool, spec = sine_pool(), MixupSpec(length=50, count=1)
    subs = draw_subsequences(pool, spec, output_rng(3, 0))
    out = ts_mixup(pool, spec, output_rng(3, 0), weights=np.array([1.0, 0.0]))
    np.testing.assert_array_equal(out.values, subs[0])


def test_half_half_mix():
    np.testing.assert_array_equal(mix(np.array([[0.0, 2.0], [2.0, 0.0]]), np.array([0.5, 0.5])), [1, 1])


def test_pool_too_small():
    with pytest.raises(PoolTooSmall):
        ts_mixup(sine_pool()[:1], MixupSpec(length=10), output_rng(0, 0))


def test_subsequences_longer_than_pool():
    with pytest.raises(SubsequenceTooShort):
        ts_mixup(sine_pool(length=20), MixupSpec(length=30), output_rng(0, 0))


def test_spec_validation():
    with pytest.raises(ValidationError):
        MixupSpec(count=0)
    with pytest.raises(ValidationError):
        MixupSpec(k=4)


def test_corpus_is_reproducible():
    spec = MixupSpec(length=40, count=10, seed=7)
    a, b = generate_corpus(sine_pool(), spec), generate_corpus(sine_pool(), spec)
    assert len(a) == 10
    for x, y in zip(a, b):
        assert x.id == y.id
        np.testing.assert_array_equal(x.values, y.values)
    c = generate_corpus(sine_pool(), MixupSpec(length=40, count=10, seed=8))
    assert not np.array_equal(a[0].values, c[0].values)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_output_lies_in_source_envelope(seed, k):
    pool, spec = sine_pool(), MixupSpec(k=k, length=60, count=1)
    rng = output_rng(seed, 0)
    subs = draw_subsequences(pool, spec, rng)
    weights = sample_weights(k, spec.concentration, rng)
    out = ts_mixup(pool, spec, output_rng(seed, 0)).values
    np.testing.assert_allclose(out, weights @ subs, rtol=1e-12)
    tol = 1e-12 * np.abs(subs).max()
    assert np.all(subs.min(axis=0) - tol <= out) and np.all(out <= subs.max(axis=0) + tol)


@given(st.integers(0, 10_000), st.integers(2, 3), st.floats(0.1, 10))
def test_weight_law(seed, k, concentration):
    w = sample_weights(k, concentration, np.random.default_rng(seed))
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) <= 1e-12


def test_subsequences_are_mean_scaled():
    subs = draw_subsequences(sine_pool(), MixupSpec(length=48), output_rng(0, 1))
    np.testing.assert_allclose(np.abs(subs).mean(axis=1), 1.0, rtol=1e-12)
