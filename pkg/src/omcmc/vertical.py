"""Per-chain vertical transitions: random-walk / MALA Metropolis-Hastings and simulated annealing."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, Population, RngStream
from .proposals import RandomWalkProposal, propose_population
from .schedule import CostCounters


@dataclass(frozen=True)
class ChainState:
    x: np.ndarray
    log_pi: float
    chain_id: int = 0
    accept_count: int = 0
    step_count: int = 0

    @classmethod
    def start(cls, x, target, chain_id=0) -> "ChainState":
        x = np.asarray(x, dtype=float)
        return cls(x, target.log_density(x), chain_id)


def mh_log_acceptance(log_pi_new, log_pi_old, log_q_ratio=0.0):
    """``log min[1, pi(x') q(x|x') / (pi(x) q(x'|x))]``; ``-inf`` candidates give ``-inf``."""
    with np.errstate(invalid="ignore"):
        a = np.asarray(log_pi_new, dtype=float) - log_pi_old + log_q_ratio
    a = np.where(np.asarray(log_pi_new) == -np.inf, -np.inf, a)
    return np.minimum(a, 0.0)


def sa_log_acceptance(log_pi_new, log_pi_old, gamma):
    """``log min[1, (pi(x')/pi(x))^(1/gamma)]``."""
    if not gamma > 0:
        raise ConfigError(f"temperature must be positive, got {gamma}")
    return mh_log_acceptance(np.asarray(log_pi_new, dtype=float) / gamma, log_pi_old / gamma)


def vertical_sweep(
    pop: Population,
    q: RandomWalkProposal,
    target,
    rngs: list[RngStream],
    gamma: float | None = None,
    counters: CostCounters | None = None,
):
    """One MH (``gamma=None``) or SA step of every chain.

    Chain ``n`` consumes, in order, its proposal noise and one uniform from
    ``rngs[n]`` only. Returns the new population and the acceptance mask.
    """
    N = pop.size
    if gamma is not None and not q.symmetric:
        raise ConfigError("simulated annealing steps need a symmetric proposal")
    Xp, log_ratio = propose_population(q, pop.x, target, rngs)
    lp = target.log_density(Xp)
    if gamma is None:
        log_alpha = mh_log_acceptance(lp, pop.log_pi, log_ratio)
    else:
        log_alpha = sa_log_acceptance(lp, pop.log_pi, gamma)
    u = np.array([r.random() for r in rngs])
    with np.errstate(divide="ignore"):
        accept = np.log(u) < log_alpha
    if counters is not None:
        counters.target_evals += N
        counters.acceptance_tests += N
    x = np.where(accept[:, None], Xp, pop.x)
    log_pi = np.where(accept, lp, pop.log_pi)
    return Population(x, log_pi), accept


def _single(s: ChainState, q, target, rng, gamma, counters) -> ChainState:
    pop = Population(s.x[None, :], np.array([s.log_pi]))
    new, acc = vertical_sweep(pop, q, target, [rng], gamma=gamma, counters=counters)
    return replace(
        s,
        x=new.x[0],
        log_pi=float(new.log_pi[0]),
        accept_count=s.accept_count + int(acc[0]),
        step_count=s.step_count + 1,
    )


def mh_step(s: ChainState, q: RandomWalkProposal, target, rng: RngStream, counters=None):
    if not math.isfinite(s.log_pi):
        raise ConfigError("the current state must lie in the target support")
    return _single(s, q, target, rng, None, counters)


def sa_step(s: ChainState, q: RandomWalkProposal, target, gamma: float, rng: RngStream, counters=None):
    """Uphill moves always accepted, downhill with ``exp(delta / gamma)``."""
    if not gamma > 0:
        raise ConfigError(f"temperature must be positive, got {gamma}")
    return _single(s, q, target, rng, gamma, counters)


_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class CoolingSchedule:
    """Non-increasing positive temperatures ``gamma_t``, ``t = 1, 2, ...``.

    kinds:
      ``geometric``    gamma0 * rate**t
      ``logarithmic``  gamma0 / log(e + t - 1)
      ``table``        explicit values, the last one held past the end
      ``constant``     gamma0 for every t (plain sampling when gamma0 = 1)
    """

    kind: str = "geometric"
    gamma0: float = 1.0
    rate: float = 0.99
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("geometric", "logarithmic", "table", "constant"):
            raise ConfigError(f"unknown cooling schedule {self.kind!r}")
        if self.kind != "table" and not self.gamma0 > 0:
            raise ConfigError("gamma0 must be positive")
        if self.kind == "geometric" and not 0 < self.rate <= 1:
            raise ConfigError("geometric cooling rate must lie in (0, 1]")
        if self.kind == "table":
            t = np.asarray(self.table, dtype=float)
            if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) > 0):
                raise ConfigError("a cooling table must be positive and non-increasing")

    def __call__(self, t: int) -> float:
        if self.kind == "geometric":
            return max(self.gamma0 * self.rate**t, _TINY)
        if self.kind == "logarithmic":
            return self.gamma0 / math.log(math.e + t - 1)
        if self.kind == "table":
            return float(self.table[min(t, len(self.table)) - 1])
        return self.gamma0
