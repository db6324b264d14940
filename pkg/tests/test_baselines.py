import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroload.baselines import (
    BASELINE_IDS,
    BaselineConfig,
    croston_sba,
    ets_lite,
    fit_ets_lite,
    make_baseline,
    npts,
    npts_weights,
    residual_quantiles,
    seasonal_naive,
)
from zeroload.errors import InsufficientResiduals, SeriesTooShort, ValidationError

Z90 = 1.2815515655446004  # standard normal 0.9 quantile, from tables


def periodic(n, period=24, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.uniform(5, 15, period)
    return np.resize(base, n)


# -- seasonal naive ---------------------------------------------------------

def test_snm_exact_on_periodic_input():
    x = periodic(24 * 8)
    for h in (1, 12, 24):
        qf = seasonal_naive(x[:24 * 7], h)
        np.testing.assert_array_equal(qf.point(), x[24 * 7 : 24 * 7 + h])
        np.testing.assert_array_equal(qf.values, np.tile(qf.point(), (9, 1)))


def test_snm_index_arithmetic():
    x = np.arange(1.0, 49.0)
    assert seasonal_naive(x, 1).point().tolist() == [25.0]
    assert seasonal_naive(x, 3).point().tolist() == [25.0, 26.0, 27.0]


def test_snm_long_horizon_repeats_the_season():
    x = np.arange(1.0, 49.0)
    np.testing.assert_array_equal(seasonal_naive(x, 50).point(), np.resize(np.arange(25.0, 49.0), 50))


def test_snm_needs_a_season():
    with pytest.raises(SeriesTooShort):
        seasonal_naive(np.ones(23), 1)


# -- Croston-SBA ------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.3])
@pytest.mark.parametrize("d", [1.0, 7.5, 123.0])
def test_croston_constant_demand(alpha, d):
    qf = croston_sba(np.full(100, d), 3, alpha)
    np.testing.assert_allclose(qf.point(), (1 - alpha / 2) * d, rtol=0, atol=1e-9)


def test_croston_all_zero():
    assert croston_sba(np.zeros(30), 4).point().tolist() == [0.0] * 4


def test_croston_single_late_demand_hand_trace():
    # first demand initialises size 5 and interval 4 (periods since the start)
    x = [0.0, 0.0, 0.0, 5.0]
    assert croston_sba(x, 2, 0.1).point() == pytest.approx([0.95 * 5 / 4] * 2)


def test_croston_two_demands_hand_trace():
    # z = 3, p = 2, then z = 3 + 0.1 * (6 - 3) = 3.3, p = 2 + 0.1 * (3 - 2) = 2.1
    assert croston_sba([0, 3, 0, 0, 6], 1, 0.1).point()[0] == pytest.approx(0.95 * 3.3 / 2.1, abs=1e-12)


def test_croston_depends_only_on_sizes_and_intervals():
    a = croston_sba([0, 2, 0, 0, 4, 1, 0, 3], 1).point()
    b = croston_sba([0, 2, 0, 0, 4, 1, 0, 3, 0, 0], 1).point()
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValidationError):
        croston_sba([1, -1, 2], 1)


# -- NPTS -------------------------------------------------------------------

def test_npts_constant_series():
    qf = npts(np.full(48, 3.5), 5, rng=np.random.default_rng(0))
    assert np.all(qf.samples == 3.5) and np.all(qf.values == 3.5)


def test_npts_sharp_kernel_returns_latest_observation():
    x = np.arange(1.0, 73.0)
    qf = npts(x, 24, rate=1e3, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(qf.samples, np.tile(x[-24:], (100, 1)))
    qf = npts(x, 3, rate=1e3, seasonal=False, rng=np.random.default_rng(0))
    assert np.all(qf.samples == 72.0)


def test_npts_two_point_frequencies():
    a, b = 10.0, 20.0
    qf = npts([b, a], 1, rate=1.0, seasonal=False, n_samples=100_000, rng=np.random.default_rng(7))
    expected = math.exp(-1) / (math.exp(-1) + math.exp(-2))
    assert round(expected, 3) == 0.731
    assert abs(np.mean(qf.samples == a) - expected) <= 0.01


def test_npts_kernel_weights():
    w = npts_weights(np.array([1.0, 2.0, 3.0]), 0.5)
    np.testing.assert_allclose(w, np.exp([-0.5, -1.0, -1.5]) / np.exp([-0.5, -1.0, -1.5]).sum())


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.booleans())
def test_npts_samples_come_from_history(seed, seasonal):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 50, 60).astype(float)
    qf = npts(x, 30, seasonal=seasonal, n_samples=20, rng=rng)
    assert set(np.unique(qf.samples)) <= set(x)


# -- ETS-lite ---------------------------------------------------------------

def test_ets_constant_series():
    for kind in ("ses", "holt", "holt_winters"):
        qf = ets_lite(np.full(96, 4.2), 6, candidates=(kind,))
        np.testing.assert_allclose(qf.point(), 4.2, atol=1e-12)


def test_ets_selects_holt_on_a_trend():
    x = 3.0 + 0.75 * np.arange(120)
    fit = fit_ets_lite(x)
    assert fit.kind == "holt"
    qf = ets_lite(x, 10)
    np.testing.assert_allclose(qf.point(), 3.0 + 0.75 * np.arange(120, 130), atol=1e-6)


def test_ets_selects_holt_winters_on_a_season():
    x = periodic(24 * 8, seed=3)
    fit = fit_ets_lite(x[:24 * 7])
    assert fit.kind == "holt_winters"
    np.testing.assert_allclose(ets_lite(x[:24 * 7], 24).point(), x[24 * 7 :], atol=1e-6)


def test_ets_falls_back_when_seasons_are_missing():
    fit = fit_ets_lite(np.linspace(1, 2, 30))
    assert fit.kind in ("ses", "holt")
    with pytest.raises(SeriesTooShort):
        fit_ets_lite([1.0], candidates=("holt_winters",))


# -- residual quantiles -----------------------------------------------------

def test_residual_quantiles_examples():
    point = np.array([1.0, 2.0])
    res = np.array([-1.0, 1.0]) / math.sqrt(2)  # sample std with ddof=1 is exactly 1
    qf = residual_quantiles(point, res, (0.1, 0.5, 0.9))
    np.testing.assert_array_equal(qf.quantile(0.5), point)
    np.testing.assert_allclose(qf.quantile(0.9), point + Z90, atol=1e-12)
    assert round(Z90, 5) == 1.28155
    flat = residual_quantiles(point, np.full(5, 0.3), (0.1, 0.5, 0.9))
    np.testing.assert_array_equal(flat.values, np.tile(point, (3, 1)))
    with pytest.raises(InsufficientResiduals):
        residual_quantiles(point, [0.5])


# -- registry ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(BASELINE_IDS), st.integers(1, 30))
def test_every_baseline_is_monotone_with_median_point(seed, name, h):
    rng = np.random.default_rng(seed)
    x = np.abs(rng.normal(10, 3, 72)) * (rng.random(72) < 0.8)
    qf = make_baseline(name)(x, h, (0.025, 0.1, 0.5, 0.9, 0.975), rng)
    assert qf.values.shape == (5, h)
    assert np.all(np.diff(qf.values, axis=0) >= 0)
    np.testing.assert_array_equal(qf.point(), qf.quantile(0.5))


def test_registry_rejects_unknown_ids():
    with pytest.raises(ValidationError):
        make_baseline("arima")
    with pytest.raises(ValidationError):
        BaselineConfig(croston_alpha=1.5)
