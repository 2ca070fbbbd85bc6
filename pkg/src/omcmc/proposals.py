"""Random-walk / MALA vertical proposals and independent horizontal proposals.

Independent proposals share a small duck-typed surface used by the
horizontal kernels: ``sample(rng, size=None)`` and ``logpdf(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LOG_2PI, ConfigError, CovarianceError, RngStream, cholesky, mvn_logpdf


@dataclass
class RandomWalkProposal:
    """Gaussian random walk ``x' = x + xi`` or MALA ``x' = x + eps/2 grad + sqrt(eps) xi``.

    ``xi ~ N(0, cov)`` in both cases.
    """

    cov: np.ndarray
    kind: str = "RW"
    step: float | None = None
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        self.chol = cholesky(self.cov)
        self.kind = self.kind.upper()
        if self.kind not in ("RW", "MALA"):
            raise ConfigError(f"unknown random-walk kind {self.kind!r}")
        if self.kind == "MALA" and not (self.step and self.step > 0):
            raise ConfigError("MALA needs a positive step size")

    @classmethod
    def isotropic(cls, sigma: float, dim: int, **kw) -> "RandomWalkProposal":
        return cls(sigma**2 * np.eye(dim), **kw)

    @property
    def symmetric(self) -> bool:
        return self.kind == "RW"

    def drift(self, X, target):
        return X + 0.5 * self.step * target.gradient(X)


def rw_propose(p: RandomWalkProposal, x, target, rng: RngStream):
    """Draw a candidate from ``q(.|x)``; return ``(x', log q(x|x') - log q(x'|x))``."""
    x = np.asarray(x, dtype=float)
    X1, log_ratio = propose_population(p, x[None, :], target, [rng])
    return X1[0], float(log_ratio[0])


def propose_population(p: RandomWalkProposal, X, target, rngs):
    """Vectorized ``rw_propose`` over chains; chain ``n`` draws only from ``rngs[n]``."""
    X = np.asarray(X, dtype=float)
    xi = np.array([r.normal(X.shape[1]) for r in rngs]) @ p.chol.T
    if p.kind == "RW":
        return X + xi, np.zeros(len(X))
    if not target.has_gradient:
        raise ConfigError("MALA needs a target that exposes a gradient")
    mean_fwd = p.drift(X, target)
    Xp = mean_fwd + math.sqrt(p.step) * xi
    ok = target.in_support(Xp)
    log_ratio = np.full(len(X), -np.inf)
    if ok.any():
        chol = math.sqrt(p.step) * p.chol
        mean_bwd = p.drift(Xp[ok], target)
        log_ratio[ok] = mvn_logpdf(X[ok], mean_bwd, chol=chol) - mvn_logpdf(
            Xp[ok] - mean_fwd[ok], np.zeros(X.shape[1]), chol=chol
        )
    return Xp, log_ratio


class GaussianProposal:
    """Independent Gaussian ``N(mean, cov)``, the SMH proposal."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.chol = cholesky(self.cov)
        self._inv_chol = np.linalg.inv(self.chol)
        self.dim = self.mean.size

    def sample(self, rng: RngStream, size=None):
        z = rng.normal(self.dim if size is None else (size, self.dim))
        return self.mean + z @ self.chol.T

    def logpdf(self, x):
        return mvn_logpdf(x, self.mean, chol=self.chol, inv_chol=self._inv_chol)


class MixtureProposal:
    """``psi(x) = sum_n w_n N(x; location_n, Lambda_n)``, weights uniform by default.

    Built once per horizontal period and then treated as immutable.
    """

    def __init__(self, locations, covs, weights=None):
        self.locations = np.array(locations, dtype=float)
        n, d = self.locations.shape
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 2:
            covs = np.broadcast_to(covs, (n, d, d))
        if covs.shape != (n, d, d):
            raise CovarianceError(f"need {n} covariances of shape {(d, d)}, got {covs.shape}")
        self.covs = np.array(covs)
        self.n_components, self.dim = n, d
        if weights is None:
            self.weights = np.full(n, 1.0 / n)
            self.uniform = True
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0) or not math.isclose(w.sum(), 1.0):
                raise ConfigError("mixture weights must be non-negative and sum to 1")
            self.weights, self.uniform = w, False
        # identical covariances are factorized once
        if np.all(self.covs == self.covs[0]):
            L = cholesky(self.covs[0])
            self.chols = np.broadcast_to(L, (n, d, d))
            inv = np.linalg.inv(L)
            self._inv_chols = np.broadcast_to(inv, (n, d, d))
            self._shared_inv = inv
            log_det = np.full(n, 2.0 * np.log(np.diag(L)).sum())
        else:
            self.chols = np.array([cholesky(c) for c in self.covs])
            self._inv_chols = np.linalg.inv(self.chols)
            self._shared_inv = None
            log_det = 2.0 * np.log(np.diagonal(self.chols, axis1=1, axis2=2)).sum(axis=1)
        with np.errstate(divide="ignore"):
            self._log_norm = np.log(self.weights) - 0.5 * (d * LOG_2PI + log_det)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        X = x.reshape(-1, self.dim)
        diff = X[:, None, :] - self.locations[None, :, :]
        if self._shared_inv is not None:
            z = diff @ self._shared_inv.T
        else:
            z = np.einsum("kij,mkj->mki", self._inv_chols, diff)
        logs = self._log_norm - 0.5 * np.einsum("mki,mki->mk", z, z)
        m = logs.max(axis=1, keepdims=True)
        out = (m + np.log(np.exp(logs - m).sum(axis=1, keepdims=True)))[:, 0]
        return float(out[0]) if x.ndim == 1 else out

    def sample(self, rng: RngStream, size=None):
        m = 1 if size is None else size
        if self.uniform:
            comp = rng.integers(self.n_components, size=m)
        else:
            cdf = np.cumsum(self.weights)
            comp = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), len(cdf) - 1)
        z = rng.normal((m, self.dim))
        X = self.locations[comp] + np.einsum("mij,mj->mi", self.chols[comp], z)
        return X[0] if size is None else X


def build_mixture(population, covs, weights=None) -> MixtureProposal:
    """Mixture with one component centred on each member of ``population``."""
    population = np.atleast_2d(np.asarray(population, dtype=float))
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 3 and len(covs) != len(population):
        raise ConfigError("need exactly one covariance per population member")
    return MixtureProposal(population, covs, weights)


def mixture_logpdf(psi: MixtureProposal, x):
    return psi.logpdf(x)


def mixture_sample(psi: MixtureProposal, rng: RngStream, size=None):
    return psi.sample(rng, size)


class DiscreteProposal:
    """Independent proposal on the integer states ``0..m-1`` (enumeration tests)."""

    dim = 1

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        self.probs = p / p.sum()
        with np.errstate(divide="ignore"):
            self.logp = np.log(self.probs)

    def sample(self, rng: RngStream, size=None):
        m = 1 if size is None else size
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), len(cdf) - 1)
        X = idx.astype(float)[:, None]
        return X[0] if size is None else X

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.rint(x.reshape(-1)).astype(int)
        out = self.logp[idx]
        return float(out[0]) if x.ndim == 1 else out
