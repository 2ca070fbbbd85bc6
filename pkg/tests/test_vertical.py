import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omcmc.core import ConfigError, Population, RngStream, chain_streams
from omcmc.proposals import RandomWalkProposal
from omcmc.schedule import CostCounters
from omcmc.targets import gaussian_mixture_5
from omcmc.vertical import (
    ChainState,
    CoolingSchedule,
    mh_log_acceptance,
    mh_step,
    sa_log_acceptance,
    sa_step,
    vertical_sweep,
)


class Flat:
    """Constant density on R^d."""

    dim = 2
    has_gradient = False

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return 0.0 if x.ndim == 1 else np.zeros(len(x))


def test_equal_densities_always_accept():
    s = ChainState.start([0.0, 0.0], Flat())
    q = RandomWalkProposal.isotropic(1.0, 2)
    rng = RngStream(0)
    for _ in range(500):
        s = mh_step(s, q, Flat(), rng)
    assert s.accept_count == s.step_count == 500


def test_out_of_support_candidate_rejected():
    assert mh_log_acceptance(-np.inf, 0.0) == -np.inf
    assert mh_log_acceptance(-np.inf, -5.0, 3.0) == -np.inf


def test_acceptance_frequency_matches_probability():
    # fixed (x, x') realized through a degenerate proposal centred on x'
    log_pi_new, log_pi_old = -1.3, -0.6
    p = math.exp(log_pi_new - log_pi_old)
    rng = RngStream(2)
    n = 100_000
    acc = np.log(rng.random(n)) < mh_log_acceptance(log_pi_new, log_pi_old)
    assert abs(acc.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_mh_step_acceptance_frequency():
    tg = gaussian_mixture_5()
    x0 = np.array([-10.0, -10.0])
    q = RandomWalkProposal.isotropic(1e-13, 2)  # x' == x up to rounding
    s0 = ChainState.start(x0, tg)
    n = 20_000
    rng = RngStream(8)
    acc = sum(mh_step(s0, q, tg, rng).accept_count for _ in range(n))
    assert acc / n > 0.999


def test_sa_uphill_always_accepted():
    for gamma in (1e-6, 0.1, 1.0, 50.0):
        assert sa_log_acceptance(-1.0, -2.0, gamma) == 0.0


def test_sa_gamma_one_equals_mh():
    rng = np.random.default_rng(0)
    a, b = rng.normal(scale=5, size=(2, 1000))
    np.testing.assert_allclose(sa_log_acceptance(a, b, 1.0), mh_log_acceptance(a, b), atol=1e-12)


def test_sa_downhill_frequency():
    p = math.exp(-2.0)
    n = 100_000
    u = RngStream(4).random(n)
    acc = np.log(u) < sa_log_acceptance(-1.0, 0.0, 0.5)
    assert abs(acc.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_sa_step_requires_positive_gamma():
    s = ChainState.start([0.0, 0.0], gaussian_mixture_5())
    with pytest.raises(ConfigError):
        sa_step(s, RandomWalkProposal.isotropic(1.0, 2), gaussian_mixture_5(), 0.0, RngStream(0))


@pytest.mark.parametrize(
    "cooling",
    [
        CoolingSchedule("geometric", 1.0, 0.99),
        CoolingSchedule("logarithmic", 2.0),
        CoolingSchedule("table", table=(3.0, 2.0, 2.0, 0.5)),
        CoolingSchedule("constant", 1.0),
    ],
)
def test_cooling_monotone_and_downhill_acceptance_nonincreasing(cooling):
    g = np.array([cooling(t) for t in range(1, 2000)])
    assert np.all(g > 0) and np.all(np.diff(g) <= 0)
    acc = np.array([sa_log_acceptance(-3.0, 0.0, x) for x in g])
    assert np.all(np.diff(acc) <= 0)


def test_cooling_goes_to_zero():
    assert CoolingSchedule("geometric", 1.0, 0.99)(100_000) < 1e-300 * 10
    assert CoolingSchedule("logarithmic", 1.0)(10**9) < 0.05


def test_cooling_validation():
    with pytest.raises(ConfigError):
        CoolingSchedule("geometric", 1.0, 1.5)
    with pytest.raises(ConfigError):
        CoolingSchedule("table", table=(1.0, 2.0))
    with pytest.raises(ConfigError):
        CoolingSchedule("bogus")


@given(st.integers(0, 2**32), st.floats(0.5, 20.0))
def test_cache_coherence(seed, sigma):
    tg = gaussian_mixture_5()
    X = np.random.default_rng(seed).normal(scale=6, size=(4, 2))
    pop = Population(X, tg.log_density(X))
    q = RandomWalkProposal.isotropic(sigma, 2)
    rngs = chain_streams(seed, 4)
    for _ in range(20):
        pop, _ = vertical_sweep(pop, q, tg, rngs)
        np.testing.assert_array_equal(pop.log_pi, tg.log_density(pop.x))


def test_sweep_counters():
    tg = gaussian_mixture_5()
    X = np.zeros((3, 2))
    c = CostCounters()
    pop = Population(X, tg.log_density(X))
    for _ in range(7):
        pop, _ = vertical_sweep(pop, RandomWalkProposal.isotropic(2.0, 2), tg, chain_streams(0, 3), counters=c)
    assert c.target_evals == 21 and c.acceptance_tests == 21 and c.multinomial_steps == 0


def test_sweep_matches_single_chain_steps():
    tg = gaussian_mixture_5()
    q = RandomWalkProposal.isotropic(3.0, 2)
    X = np.array([[0.0, 0.0], [5.0, 5.0]])
    pop = Population(X, tg.log_density(X))
    rngs = chain_streams(3, 2)
    states = [ChainState.start(x, tg, n) for n, x in enumerate(X)]
    srngs = chain_streams(3, 2)
    for _ in range(50):
        pop, _ = vertical_sweep(pop, q, tg, rngs)
        states = [mh_step(s, q, tg, r) for s, r in zip(states, srngs)]
    np.testing.assert_array_equal(pop.x, np.array([s.x for s in states]))


def test_mh_chain_stationarity():
    tg = gaussian_mixture_5()
    q = RandomWalkProposal.isotropic(10.0, 2)
    T = 200_000
    X = np.empty((T, 2))
    pop = Population(np.zeros((1, 2)), tg.log_density(np.zeros((1, 2))))
    rngs = [RngStream(21, 1)]
    for t in range(T):
        pop, _ = vertical_sweep(pop, q, tg, rngs)
        X[t] = pop.x[0]
    batches = X.reshape(100, -1, 2).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(len(batches))
    assert np.all(np.abs(X.mean(axis=0) - tg.mean) < 3 * se)
