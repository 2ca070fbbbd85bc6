"""Horizontal (population-interaction) kernels.

Every kernel takes the current :class:`Population`, an independent proposal
(``sample(rng, size)`` / ``logpdf(x)``), the target, and the dedicated
horizontal stream, and returns ``(Population, accepted_mask)``. All random
draws of one step come from that single stream in a fixed order, so a kernel
is reproducible given ``(population, proposal, seed)``.

``temperature`` replaces ``pi`` by ``pi**(1/temperature)`` in every weight;
it is 1 for sampling and follows the cooling schedule for optimization.

Weights are kept in the log domain throughout:
``log omega(x) = log pi(x) / temperature - log psi(x)`` for the mixture
schemes, and the SMH inverse weight is ``log phi(x) - log pi(x) / temperature``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Population, RngStream, log_sum_exp, multinomial_draw, multinomial_rows
from .schedule import CostCounters, canonical_scheme

_NO_COUNT = None


def _lse_rows(A: np.ndarray) -> np.ndarray:
    m = A.max(axis=1, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    with np.errstate(divide="ignore"):
        return (m + np.log(np.exp(A - m).sum(axis=1, keepdims=True)))[:, 0]


def _scaled(log_pi, temperature):
    return log_pi if temperature == 1.0 else np.asarray(log_pi) / temperature


def _count(counters, evals=0, mult=0, acc=0):
    if counters is not None:
        counters.target_evals += evals
        counters.multinomial_steps += mult
        counters.acceptance_tests += acc


def _accept(u, log_alpha):
    with np.errstate(divide="ignore"):
        return np.log(u) < log_alpha


# ---------------------------------------------------------------- SMH


def smh_log_acceptance(log_inv_w_pop, log_inv_w_candidate) -> float:
    """Log of the SMH acceptance probability.

    ``alpha = sum_{1..N} w_i / (sum_{0..N} w_i - min_{0..N} w_i)`` where
    ``w_i = phi(x_i) / pi(x_i)`` and index 0 is the candidate. The
    denominator is evaluated exactly as the sum with one occurrence of the
    minimum removed. An out-of-support candidate (``w_0 = +inf``) gives
    ``-inf``.
    """
    pop = np.asarray(log_inv_w_pop, dtype=float)
    if log_inv_w_candidate == np.inf:
        return -np.inf
    allw = np.concatenate(([log_inv_w_candidate], pop))
    drop = int(np.argmin(allw))
    den = log_sum_exp(np.delete(allw, drop))
    return min(0.0, log_sum_exp(pop) - den)


def smh_step(
    pop: Population,
    phi,
    target,
    rng: RngStream,
    counters: CostCounters | None = _NO_COUNT,
    temperature: float = 1.0,
):
    """Propose ``x_0 ~ phi`` to replace one member picked by inverse importance weight.

    Draw order on ``rng``: candidate, replacement index, acceptance uniform.
    At most one member changes.
    """
    x0 = phi.sample(rng)
    lp0 = float(target.log_density(x0))
    log_phi = phi.logpdf(np.vstack([pop.x, x0]))
    log_inv = log_phi[:-1] - _scaled(pop.log_pi, temperature)
    k = multinomial_draw(log_inv, rng)
    u = rng.random()
    _count(counters, evals=1, mult=1, acc=1)
    accepted = np.zeros(pop.size, dtype=bool)
    if lp0 == -np.inf:
        return pop, accepted
    log_inv0 = log_phi[-1] - _scaled(lp0, temperature)
    if _accept(u, smh_log_acceptance(log_inv, log_inv0)):
        x = pop.x.copy()
        log_pi = pop.log_pi.copy()
        x[k], log_pi[k] = x0, lp0
        accepted[k] = True
        return Population(x, log_pi), accepted
    return pop, accepted


# ---------------------------------------------------------------- mixture MH


def mixture_log_acceptance(log_omega_new, log_omega_old):
    """``log min[1, omega(x') / omega(x)]``, the independent-MH test with ``omega = pi/psi``."""
    new = np.asarray(log_omega_new, dtype=float)
    with np.errstate(invalid="ignore"):
        a = new - log_omega_old
    return np.minimum(np.where(new == -np.inf, -np.inf, a), 0.0)


def _log_omega(lp, X, psi, temperature):
    with np.errstate(invalid="ignore"):
        return _scaled(lp, temperature) - psi.logpdf(X)


def basic_mixture_step(pop, psi, target, rng, counters=_NO_COUNT, temperature=1.0):
    """One shared candidate ``x' ~ psi`` tested independently by every chain."""
    xp = psi.sample(rng)
    lp = float(target.log_density(xp))
    u = rng.random(pop.size)
    _count(counters, evals=1, acc=pop.size)
    if lp == -np.inf:
        return pop, np.zeros(pop.size, dtype=bool)
    log_w_new = _log_omega(lp, xp, psi, temperature)
    log_w_old = _log_omega(pop.log_pi, pop.x, psi, temperature)
    accept = _accept(u, mixture_log_acceptance(log_w_new, log_w_old))
    x = np.where(accept[:, None], xp, pop.x)
    return Population(x, np.where(accept, lp, pop.log_pi)), accept


def variant_mixture_step(pop, psi, target, rng, counters=_NO_COUNT, temperature=1.0):
    """One candidate per chain, ``x'_n ~ psi``; chains are independent given ``psi``."""
    Xp = psi.sample(rng, size=pop.size)
    lp = target.log_density(Xp)
    u = rng.random(pop.size)
    _count(counters, evals=pop.size, acc=pop.size)
    log_w_new = _log_omega(lp, Xp, psi, temperature)
    log_w_old = _log_omega(pop.log_pi, pop.x, psi, temperature)
    accept = _accept(u, mixture_log_acceptance(log_w_new, log_w_old))
    x = np.where(accept[:, None], Xp, pop.x)
    return Population(x, np.where(accept, lp, pop.log_pi)), accept


# ---------------------------------------------------------------- P-EnM


def penm_selection_probs(log_omega_tries, log_omega_current) -> np.ndarray:
    """Selection probabilities over ``(z_1..z_L, x)``.

    The last entry (stay) is ``1 - sum`` of the others, so the vector sums
    to one exactly.
    """
    w = np.append(np.asarray(log_omega_tries, dtype=float), log_omega_current)
    p = np.exp(w - log_sum_exp(w))
    p[-1] = 1.0 - p[:-1].sum()
    return p


def penm_step(pop, psi, target, L, rng, counters=_NO_COUNT, temperature=1.0):
    """``L`` shared tries; each chain resamples among the tries and its own state."""
    if L < 1:
        raise ConfigError("P-EnM needs L >= 1")
    Z = psi.sample(rng, size=L)
    lpZ = target.log_density(Z)
    u = rng.random(pop.size)
    _count(counters, evals=L, mult=pop.size, acc=pop.size)
    log_wz = _log_omega(lpZ, Z, psi, temperature)
    log_wx = _log_omega(pop.log_pi, pop.x, psi, temperature)
    W = np.hstack([np.broadcast_to(log_wz, (pop.size, L)), log_wx[:, None]])
    idx = multinomial_rows(W, u)
    accept = idx < L
    pick = np.where(accept, idx, 0)
    x = np.where(accept[:, None], Z[pick], pop.x)
    return Population(x, np.where(accept, lpZ[pick], pop.log_pi)), accept


# ---------------------------------------------------------------- P-MTM


def pmtm_log_acceptance(log_omega_tries, k, log_omega_current):
    """``log min[1, sum_l w_l / (sum_l w_l - w_k + w(x))]`` for selected try ``k``.

    The denominator is the try-set sum with ``w_k`` replaced by ``w(x)``,
    evaluated without cancellation. ``k`` and ``log_omega_current`` may be
    arrays (one entry per chain).
    """
    tries = np.asarray(log_omega_tries, dtype=float)
    scalar = np.ndim(k) == 0 and np.ndim(log_omega_current) == 0
    k = np.atleast_1d(k)
    cur = np.broadcast_to(np.asarray(log_omega_current, dtype=float), k.shape)
    swapped = np.tile(tries, (k.size, 1))
    swapped[np.arange(k.size), k] = cur
    num = log_sum_exp(tries)
    out = np.minimum(num - _lse_rows(swapped), 0.0)
    return float(out[0]) if scalar else out


def _mtm_tests(Z, lpZ, log_wz, k, pop, log_wx, u):
    accept = _accept(u, pmtm_log_acceptance(log_wz, k, log_wx))
    x = np.where(accept[:, None], Z[k], pop.x)
    return Population(x, np.where(accept, lpZ[k], pop.log_pi)), accept


def pmtm_step(pop, psi, target, L, rng, counters=_NO_COUNT, temperature=1.0):
    """``L`` shared tries; each chain resamples one try and runs the MTM test against it.

    Draw order: tries, ``N`` selection uniforms, ``N`` acceptance uniforms.
    """
    if L < 1:
        raise ConfigError("P-MTM needs L >= 1")
    N = pop.size
    Z = psi.sample(rng, size=L)
    lpZ = target.log_density(Z)
    u_sel = rng.random(N)
    u_acc = rng.random(N)
    _count(counters, evals=L, mult=N, acc=N)
    log_wz = _log_omega(lpZ, Z, psi, temperature)
    if log_sum_exp(log_wz) == -np.inf:
        return pop, np.zeros(N, dtype=bool)
    k = multinomial_rows(np.broadcast_to(log_wz, (N, L)), u_sel)
    log_wx = _log_omega(pop.log_pi, pop.x, psi, temperature)
    return _mtm_tests(Z, lpZ, log_wz, k, pop, log_wx, u_acc)


# ---------------------------------------------------------------- BI-MTM


def circular_permutations(N: int) -> np.ndarray:
    """``P[j, n]``: index ``h`` of the resampled try ``z_{k_h}`` chain ``n`` tests at block iteration ``j``.

    Row ``j`` is the resampled set rotated right by ``j``, e.g. for N = 3
    the rows are (0, 1, 2), (2, 0, 1), (1, 2, 0).
    """
    n = np.arange(N)
    return (n[None, :] - n[:, None]) % N


def bimtm_block(pop, psi, target, L, rng, counters=_NO_COUNT, temperature=1.0):
    """One block of ``N`` iterations sharing ``N`` resampled tries.

    ``N L`` tries are drawn in sets ``S_1..S_N``; one try is resampled from
    each set (``N`` multinomial steps per block), and at iteration ``j``
    chain ``n`` tests the try given by :func:`circular_permutations`. The MTM
    acceptance uses the weight sum of the set the tested try was resampled
    from. Returns a list of ``N`` ``(Population, accepted_mask)`` pairs.
    """
    if L < 1:
        raise ConfigError("BI-MTM needs L >= 1")
    N, d = pop.x.shape
    Z = psi.sample(rng, size=N * L)
    lpZ = target.log_density(Z)
    u_sel = rng.random(N)
    _count(counters, evals=N * L, mult=N)
    log_wz = _log_omega(lpZ, Z, psi, temperature).reshape(N, L)
    k = multinomial_rows(log_wz, u_sel)
    dead = k < 0
    k = np.where(dead, 0, k)
    sets = np.arange(N)
    chosen = sets * L + k
    r_x, r_lp = Z[chosen], lpZ[chosen]
    perm = circular_permutations(N)
    out = []
    for j in range(N):
        u = rng.random(N)
        _count(counters, acc=N)
        h = perm[j]
        log_wx = _log_omega(pop.log_pi, pop.x, psi, temperature)
        swapped = log_wz[h].copy()
        swapped[np.arange(N), k[h]] = log_wx
        log_alpha = np.minimum(_lse_rows(log_wz[h]) - _lse_rows(swapped), 0.0)
        log_alpha[dead[h]] = -np.inf
        accept = _accept(u, log_alpha)
        pop = Population(
            np.where(accept[:, None], r_x[h], pop.x), np.where(accept, r_lp[h], pop.log_pi)
        )
        out.append((pop, accept))
    return out


# ---------------------------------------------------------------- dispatch


@dataclass(frozen=True)
class HorizontalConfig:
    scheme: str
    L: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", canonical_scheme(self.scheme))
        if self.L < 1:
            raise ConfigError("the number of tries L must be >= 1")

    @property
    def uses_mixture(self) -> bool:
        return self.scheme != "smh"


def horizontal_step(cfg: HorizontalConfig, pop, proposal, target, rng, counters=None, temperature=1.0):
    """Single-iteration kernels (everything except BI-MTM blocks)."""
    if cfg.scheme == "smh":
        return smh_step(pop, proposal, target, rng, counters, temperature)
    if cfg.scheme == "basic_mixture":
        return basic_mixture_step(pop, proposal, target, rng, counters, temperature)
    if cfg.scheme == "variant_mixture":
        return variant_mixture_step(pop, proposal, target, rng, counters, temperature)
    if cfg.scheme == "penm":
        return penm_step(pop, proposal, target, cfg.L, rng, counters, temperature)
    if cfg.scheme == "pmtm":
        return pmtm_step(pop, proposal, target, cfg.L, rng, counters, temperature)
    raise ConfigError(f"{cfg.scheme!r} has no single-iteration kernel")
