import itertools
import math

import numpy as np
import pytest

from omcmc.baselines import (
    BaselineConfig,
    expected_baseline_counters,
    importance_resample,
    resampling_distribution,
    run_ipc,
    run_pmc,
)
from omcmc.core import ConfigError, RngStream, chain_streams, multinomial_rows
from omcmc.orchestrator import initial_population
from omcmc.proposals import DiscreteProposal, GaussianProposal, RandomWalkProposal
from omcmc.schedule import baseline_closed_forms
from omcmc.targets import DiscreteTarget, data_tempered_sinusoid, gaussian_mixture_5, generate_sinusoid_data
from omcmc.vertical import ChainState, mh_step

GM5 = gaussian_mixture_5()


def test_ipc_budget_and_counters():
    cfg = BaselineConfig(GM5, 5, 2400, sigma=2.0, seed=1, keep_samples=False)
    _, counters = run_ipc(cfg)
    assert counters.target_evals == 12000
    assert counters.multinomial_steps == 0
    assert counters == baseline_closed_forms("ipc", 5, 2400)


def test_single_chain_ipc_is_plain_mh():
    cfg = BaselineConfig(GM5, 1, 500, sigma=3.0, seed=8)
    store, _ = run_ipc(cfg)
    s = ChainState.start(initial_population(cfg, 1, 2)[0], GM5)
    rng = chain_streams(8, 1)[0]
    q = RandomWalkProposal.isotropic(3.0, 2)
    trace = []
    for _ in range(500):
        s = mh_step(s, q, GM5, rng)
        trace.append(s.x)
    np.testing.assert_array_equal(store.samples[:, 0], np.array(trace))


def test_ipc_tempered_counters():
    y = generate_sinusoid_data([0.1, 0.2, 0.3, 0.4], 30, 0.5, RngStream(1, 0))
    seq = data_tempered_sinusoid(y, 4, 0.5, range(2, 31), ordered=True)
    cfg = BaselineConfig(seq, 20, 436, sigma=0.1, seed=3, keep_samples=False)
    _, counters = run_ipc(cfg)
    assert counters == expected_baseline_counters(cfg, "ipc")
    assert counters.target_evals == 20 * 436 + 20 * 28


def test_pmc_budget():
    assert baseline_closed_forms("pmc", 100, 2000).target_evals == 200_000
    cfg = BaselineConfig(GM5, 10, 50, sigma=5.0, seed=2)
    store, counters = run_pmc(cfg)
    assert counters == baseline_closed_forms("pmc", 10, 50)
    assert np.all(np.isfinite(store.mean()))


def test_equal_weights_resample_uniformly():
    n, N = 200_000, 4
    idx = multinomial_rows(np.zeros((n, N)), RngStream(6).random(n))
    freq = np.bincount(idx, minlength=N) / n
    assert np.all(np.abs(freq - 0.25) < 4 * math.sqrt(0.25 * 0.75 / n))


def _enumerated_resampling(p, q, L):
    w = p / q
    out = np.zeros(len(p))
    for Z in itertools.product(range(len(p)), repeat=L):
        pz = np.prod(q[list(Z)])
        ws = w[list(Z)]
        for k, z in enumerate(Z):
            out[z] += pz * ws[k] / ws.sum()
    return out


def test_resampling_distribution_matches_enumeration():
    p = np.array([0.1, 0.4, 0.2, 0.3])
    q = np.array([0.4, 0.1, 0.25, 0.25])
    for L in (1, 2, 3):
        exact = _enumerated_resampling(p, q, L)
        got = resampling_distribution(p, q, L)
        assert 0.5 * np.abs(got - exact).sum() < 1e-12
    # a single candidate is just a draw from q; many candidates approach p
    np.testing.assert_allclose(resampling_distribution(p, q, 1), q, atol=1e-15)
    assert np.abs(resampling_distribution(p, q, 6) - p).sum() < np.abs(q - p).sum()


def test_importance_resample_matches_exact_law():
    p = np.array([0.1, 0.4, 0.2, 0.3])
    q = np.array([0.4, 0.1, 0.25, 0.25])
    n = 100_000
    X = importance_resample(DiscreteTarget(p), DiscreteProposal(q), 2, RngStream(9), size=n)
    freq = np.bincount(X[:, 0].astype(int), minlength=4) / n
    exact = resampling_distribution(p, q, 2)
    assert np.all(np.abs(freq - exact) < 4.5 * np.sqrt(exact * (1 - exact) / n))


def test_importance_resample_validation():
    with pytest.raises(ConfigError):
        importance_resample(GM5, GaussianProposal([0, 0], np.eye(2)), 0, RngStream(0))
    with pytest.raises(ConfigError):
        resampling_distribution([0.5, 0.5], [1.0, 0.0], 2)


def test_baseline_config_validation():
    with pytest.raises(ConfigError):
        BaselineConfig(GM5, 0, 10)
    with pytest.raises(ConfigError):
        BaselineConfig(GM5, 2, 10, sigma=0.0)
