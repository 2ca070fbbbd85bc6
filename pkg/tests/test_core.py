import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from omcmc.core import (
    ConfigError,
    CovarianceError,
    DegenerateWeights,
    Population,
    RngStream,
    chain_streams,
    cholesky,
    log_sum_exp,
    multinomial_draw,
    multinomial_rows,
    mvn_logpdf,
    mvn_sample,
    normalized_weights,
)

finite = st.floats(-700, 700, allow_nan=False)


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000 + math.log(2), abs=1e-12)
    for x in (-1e300, -3.5, 0.0, 42.0, 1e300):
        assert log_sum_exp([x]) == x


def test_log_sum_exp_all_minus_inf():
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf


@given(arrays(float, st.integers(1, 20), elements=finite), st.floats(-1e3, 1e3))
def test_log_sum_exp_shift_invariance(w, c):
    assert log_sum_exp(w + c) == pytest.approx(log_sum_exp(w) + c, abs=1e-12 * max(1.0, abs(c) + np.abs(w).max()))


@given(arrays(float, st.integers(1, 20), elements=finite))
def test_normalized_weights_sum_to_one(w):
    p = normalized_weights(w)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)


def test_normalized_weights_degenerate():
    with pytest.raises(DegenerateWeights):
        normalized_weights([-np.inf, -np.inf])


def test_multinomial_point_mass():
    rng = RngStream(3)
    logw = np.array([-np.inf, 0.0, -np.inf])
    assert all(multinomial_draw(logw, rng) == 1 for _ in range(200))


def test_multinomial_normalization():
    p = normalized_weights(np.log([2.0, 1.0, 1.0]))
    np.testing.assert_allclose(p, [0.5, 0.25, 0.25], atol=1e-15)


def test_multinomial_equal_weights_frequency():
    rng = RngStream(11)
    n = 100_000
    draws = multinomial_draw(np.array([0.7, 0.7]), rng, size=n)
    se = math.sqrt(0.25 / n)
    assert abs((draws == 0).mean() - 0.5) < 3 * se


def test_multinomial_frequencies_converge():
    rng = RngStream(5)
    w = np.array([0.1, 2.0, 0.5, 3.0, 1.4])
    p = w / w.sum()
    n = 1_000_000
    counts = np.bincount(multinomial_draw(np.log(w), rng, size=n), minlength=len(w))
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 4 * se)


def test_multinomial_lowest_index_wins_on_boundary():
    # cdf of [1,1] is [0.5, 1]; v = 1 - u = 0.5 sits exactly on the first boundary
    assert multinomial_rows(np.log([[1.0, 1.0]]), np.array([0.5]))[0] == 0


def test_multinomial_rows_dead_row():
    k = multinomial_rows(np.array([[-np.inf, -np.inf], [0.0, -np.inf]]), np.array([0.3, 0.3]))
    assert k[0] < 0 and k[1] == 0


def test_rng_streams_are_reproducible_and_distinct():
    a, b = RngStream(9, 1), RngStream(9, 1)
    np.testing.assert_array_equal(a.random(5), b.random(5))
    s = chain_streams(9, 3)
    draws = [r.random(4) for r in s]
    assert not np.allclose(draws[0], draws[1])


def test_mvn_logpdf_mode_value():
    for d, s2 in ((1, 1.0), (2, 4.0), (5, 0.3)):
        mu = np.linspace(-1, 1, d)
        val = mvn_logpdf(mu, mu, s2 * np.eye(d))
        assert val == pytest.approx(-(d / 2) * math.log(2 * math.pi * s2), abs=1e-12)


def test_mvn_logpdf_matches_scipy(np_rng):
    from scipy.stats import multivariate_normal

    A = np_rng.normal(size=(3, 3))
    C = A @ A.T + 0.5 * np.eye(3)
    mu = np_rng.normal(size=3)
    X = np_rng.normal(size=(50, 3))
    np.testing.assert_allclose(mvn_logpdf(X, mu, C), multivariate_normal(mu, C).logpdf(X), rtol=1e-12)


def test_mvn_logpdf_symmetric(np_rng):
    A = np_rng.normal(size=(2, 2))
    C = A @ A.T + np.eye(2)
    mu = np.array([0.3, -1.0])
    X = np_rng.normal(size=(100, 2))
    np.testing.assert_allclose(mvn_logpdf(X, mu, C), mvn_logpdf(2 * mu - X, mu, C), rtol=1e-13)


def test_mvn_sample_mean():
    n = 100_000
    X = mvn_sample(np.zeros(2), np.eye(2), RngStream(2), size=n)
    assert np.all(np.abs(X.mean(axis=0)) < 3 / math.sqrt(n))


def test_cholesky_rejects_bad_matrices():
    with pytest.raises(CovarianceError):
        cholesky([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(CovarianceError):
        cholesky([[1.0, 0.5], [0.0, 1.0]])


def test_population_size():
    assert Population(np.zeros((4, 2)), np.zeros(4)).size == 4


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)
