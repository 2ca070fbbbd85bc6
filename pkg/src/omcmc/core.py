"""Seeded random streams, log-domain weight arithmetic and Gaussian primitives."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

# Stream 0 is reserved for horizontal (population-level) randomness so that
# changing N never perturbs the per-chain streams 1..N.
HORIZONTAL_STREAM = 0


class OMCMCError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OMCMCError, ValueError):
    pass


class CovarianceError(OMCMCError, ValueError):
    pass


class DegenerateWeights(OMCMCError, ValueError):
    pass


class ContractError(OMCMCError, ValueError):
    pass


class Population(NamedTuple):
    """Current states of the N chains, ``x`` of shape (N, d), with cached ``log pi``."""

    x: np.ndarray
    log_pi: np.ndarray

    @property
    def size(self) -> int:
        return len(self.x)


class RngStream:
    """An independent, reproducible random stream keyed by ``(seed, stream_id)``.

    Streams are PCG64 generators seeded through ``SeedSequence`` with the
    stream id as spawn key, so distinct ids are statistically independent
    and a given id yields the same draws regardless of how many other
    streams exist.
    """

    __slots__ = ("seed", "stream_id", "generator")

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if stream_id < 0:
            raise ConfigError(f"stream_id must be non-negative, got {stream_id}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, high, size=None):
        return self.generator.integers(0, high, size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def chain_streams(seed: int, n_chains: int) -> list[RngStream]:
    return [RngStream(seed, n + 1) for n in range(n_chains)]


def log_sum_exp(w) -> float:
    """Return ``log(sum(exp(w)))`` without overflow; ``-inf`` iff all entries are ``-inf``."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise ContractError("log_sum_exp of an empty vector")
    m = w.max()
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return np.inf
    return float(m + math.log(np.exp(w - m).sum()))


def normalized_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    lse = log_sum_exp(w)
    if lse == -np.inf:
        raise DegenerateWeights("all log-weights are -inf")
    return np.exp(w - lse)


def _inverse_cdf(cdf: np.ndarray, u) -> np.ndarray:
    # v in (0, 1]; first index with cdf >= v. Zero-weight entries never have
    # a cdf jump, so they cannot be selected, and on an exact boundary the
    # lower index wins.
    v = 1.0 - np.asarray(u)
    idx = np.searchsorted(cdf, v * cdf[-1], side="left")
    return np.minimum(idx, len(cdf) - 1)


def multinomial_rows(logw, u) -> np.ndarray:
    """Row-wise inverse-CDF draws: row ``i`` of ``logw`` is resampled with uniform ``u[i]``.

    Same convention as :func:`multinomial_draw`. Rows with every entry
    ``-inf`` return ``-1``.
    """
    logw = np.atleast_2d(np.asarray(logw, dtype=float))
    m = logw.max(axis=1, keepdims=True)
    dead = ~np.isfinite(m[:, 0])
    m[dead] = 0.0
    cdf = np.cumsum(np.exp(logw - m), axis=1)
    v = (1.0 - np.asarray(u, dtype=float)) * cdf[:, -1]
    idx = np.minimum((cdf < v[:, None]).sum(axis=1), logw.shape[1] - 1)
    idx[dead] = -1
    return idx


def multinomial_draw(w, rng: RngStream, size=None):
    """Draw index ``i`` with probability ``exp(w_i - log_sum_exp(w))``.

    Inverse CDF over the normalized weights in index order. With ``size``
    given, that many independent indices are returned using one uniform each.
    """
    p = normalized_weights(w)
    cdf = np.cumsum(p)
    u = rng.random(size)
    idx = _inverse_cdf(cdf, u)
    return int(idx) if size is None else idx


def cholesky(cov) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise CovarianceError(f"covariance must be square, got shape {cov.shape}")
    if np.abs(cov - cov.T).max() > 1e-10 * np.abs(cov).max() + 1e-12:
        raise CovarianceError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is not positive definite") from exc


def mvn_sample(mean, cov, rng: RngStream, size=None, chol=None) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    L = cholesky(cov) if chol is None else chol
    d = mean.shape[-1]
    if size is None:
        return mean + L @ rng.normal(d)
    return mean + rng.normal((size, d)) @ L.T


def mvn_logpdf(x, mean, cov=None, chol=None, inv_chol=None):
    """Exact Gaussian log-density, vectorized over leading axes of ``x``.

    ``inv_chol`` (the inverse Cholesky factor) may be passed to skip the
    triangular solve when the same covariance is evaluated many times.
    """
    L = cholesky(cov) if chol is None else chol
    x = np.asarray(x, dtype=float)
    diff = x - np.asarray(mean, dtype=float)
    d = L.shape[0]
    if inv_chol is None:
        z = np.linalg.solve(L, diff.reshape(-1, d).T).T
    else:
        z = diff.reshape(-1, d) @ inv_chol.T
    maha = (z * z).sum(axis=1)
    log_det = 2.0 * np.log(np.diag(L)).sum()
    out = -0.5 * (d * LOG_2PI + log_det + maha)
    return float(out[0]) if diff.ndim == 1 else out.reshape(diff.shape[:-1])
