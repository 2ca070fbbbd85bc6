"""Reference samplers: independent parallel chains (IPC) and population Monte Carlo (PMC)."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .core import (
    HORIZONTAL_STREAM,
    ConfigError,
    Population,
    RngStream,
    chain_streams,
    multinomial_rows,
    mvn_logpdf,
)
from .orchestrator import SampleStore, initial_population, stage_of_epochs
from .proposals import RandomWalkProposal
from .schedule import CostCounters, baseline_closed_forms
from .targets import TemperedSequence
from .vertical import vertical_sweep


@dataclass
class BaselineConfig:
    """``N`` chains (IPC) or proposals (PMC) run for ``T`` iterations each, ``E_T = N T``."""

    target: object
    N: int
    T: int
    sigma: float = 5.0
    init: np.ndarray | None = None
    init_box: tuple = (-4.0, 4.0)
    seed: int = 0
    vertical_kind: str = "RW"
    mala_step: float | None = None
    keep_samples: bool = True

    def __post_init__(self):
        for name in ("N", "T"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")

    @property
    def dim(self) -> int:
        return _first(self.target).dim


def _first(target):
    return target.stages[0] if isinstance(target, TemperedSequence) else target


def _start(config):
    X0 = initial_population(config, config.N, config.dim)
    lp = _first(config.target).log_density(X0)
    if not np.all(np.isfinite(lp)):
        raise ConfigError("every initial state must lie in the target support")
    return Population(X0, lp)


def run_ipc(config: BaselineConfig):
    """``N`` non-interacting MH chains with the same vertical kernel as O-MCMC.

    A :class:`TemperedSequence` target is visited stage by stage, the
    iterations being shared out by the stage fractions; each stage switch
    re-evaluates the ``N`` current states.
    """
    N, d = config.N, config.dim
    rngs = chain_streams(config.seed, N)
    q = RandomWalkProposal(config.sigma**2 * np.eye(d), kind=config.vertical_kind, step=config.mala_step)
    seq = config.target if isinstance(config.target, TemperedSequence) else None
    stages = stage_of_epochs(seq, config.T) if seq else np.zeros(config.T, dtype=int)
    target = _first(config.target)
    pop = _start(config)
    store = SampleStore(N, d, config.T, keep=config.keep_samples)
    store.metadata.update(seed=config.seed, scheme="ipc")
    counters = CostCounters()
    for t in range(config.T):
        if t and stages[t] != stages[t - 1]:
            target = seq.stages[stages[t]]
            pop = Population(pop.x, target.log_density(pop.x))
            counters.target_evals += N
        pop, acc = vertical_sweep(pop, q, target, rngs, counters=counters)
        store.record(pop, "V", acc)
        counters.samples_generated += N
    return store, counters


def run_pmc(config: BaselineConfig):
    """Basic PMC: propagate, weight ``pi / q_n``, resample ``N`` times with replacement.

    Proposals are ``q_n = N(x_{n,t-1}, sigma^2 I)``. The store holds the
    weighted (pre-resampling) samples, so its mean is the self-normalized
    importance estimate over all iterations.
    """
    N, d = config.N, config.dim
    target = config.target
    rngs = chain_streams(config.seed, N)
    hrng = RngStream(config.seed, HORIZONTAL_STREAM)
    cov = config.sigma**2 * np.eye(d)
    chol = np.linalg.cholesky(cov)
    pop = _start(config)
    store = SampleStore(N, d, config.T, keep=True, weighted=True)
    store.metadata.update(seed=config.seed, scheme="pmc")
    counters = CostCounters()
    X = pop.x
    for _ in range(config.T):
        Z = X + np.array([r.normal(d) for r in rngs]) @ chol.T
        lp = target.log_density(Z)
        logw = np.full(N, -np.inf)
        ok = np.isfinite(lp)
        logw[ok] = lp[ok] - mvn_logpdf(Z[ok] - X[ok], np.zeros(d), chol=chol)
        counters.target_evals += N
        counters.samples_generated += N
        store.record(Population(Z, lp), "H", log_weights=logw)
        if np.all(logw == -np.inf):
            continue
        idx = multinomial_rows(np.broadcast_to(logw, (N, N)), hrng.random(N))
        counters.multinomial_steps += N
        X = Z[idx]
    return store, counters


def expected_baseline_counters(config: BaselineConfig, scheme: str) -> CostCounters:
    """Closed-form counters for a baseline run, including IPC stage-switch re-evaluations."""
    c = baseline_closed_forms(scheme, config.N, config.T)
    if scheme == "ipc" and isinstance(config.target, TemperedSequence):
        switches = int(np.count_nonzero(np.diff(stage_of_epochs(config.target, config.T))))
        c.target_evals += config.N * switches
    return c


def importance_resample(target, proposal, L: int, rng: RngStream, size: int | None = None):
    """Draw ``L`` candidates from ``proposal`` and resample one by weight ``pi / proposal``.

    With ``size`` given, ``size`` independent repetitions are returned as an
    array of shape ``(size, d)``. The draws are exact samples of the
    resampling distribution, which approaches ``pi`` as ``L`` grows.
    """
    if L < 1:
        raise ConfigError("need L >= 1")
    m = 1 if size is None else size
    Z = proposal.sample(rng, size=m * L)
    Z = np.asarray(Z, dtype=float).reshape(m * L, -1)
    logw = (target.log_density(Z) - proposal.logpdf(Z)).reshape(m, L)
    k = multinomial_rows(logw, rng.random(m))
    if np.any(k < 0):
        raise ConfigError("every candidate has zero target density")
    out = Z.reshape(m, L, -1)[np.arange(m), k]
    return out[0] if size is None else out


def resampling_distribution(target_probs, proposal_probs, L: int) -> np.ndarray:
    """Exact pmf of one importance-resampled state on a finite space.

    ``P(z = j) = L q_j E[w_j / (w_j + S)]`` where ``S`` is the weight sum of
    ``L - 1`` further candidates; the law of ``S`` is built by repeated
    convolution over the (finitely many) weight values.
    """
    p = np.asarray(target_probs, dtype=float)
    q = np.asarray(proposal_probs, dtype=float)
    p, q = p / p.sum(), q / q.sum()
    if np.any((p > 0) & (q == 0)):
        raise ConfigError("the proposal must cover the target support")
    w = np.divide(p, q, out=np.zeros_like(p), where=q > 0)
    law = {0.0: 1.0}
    for _ in range(L - 1):
        nxt = defaultdict(float)
        for s, ps in law.items():
            for wi, qi in zip(w, q):
                if qi > 0:
                    nxt[s + wi] += ps * qi
        law = dict(nxt)
    out = np.zeros_like(p)
    for j in range(len(p)):
        if w[j] > 0:
            out[j] = L * q[j] * sum(ps * w[j] / (w[j] + s) for s, ps in law.items())
    return out
