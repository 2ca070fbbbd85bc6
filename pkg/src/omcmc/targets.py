"""Unnormalized target densities, tempering wrappers and the built-in experiment targets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import LOG_2PI, ConfigError, RngStream, cholesky


class Target:
    """Log-density evaluator over R^dim, optionally restricted to a box.

    Subclasses implement ``_log_density`` (and optionally ``_gradient``) on
    2-D arrays of in-support points. Points outside the support evaluate to
    ``-inf``; nothing raises.
    """

    dim: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @property
    def has_gradient(self) -> bool:
        return type(self)._gradient is not Target._gradient

    def in_support(self, x) -> np.ndarray | bool:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        ok = np.isfinite(X).all(axis=1)
        if self.lower is not None:
            ok &= np.all(X >= self.lower, axis=1)
        if self.upper is not None:
            ok &= np.all(X <= self.upper, axis=1)
        if type(self)._extra_support is not Target._extra_support:
            ok &= self._extra_support(X)
        return bool(ok[0]) if np.ndim(x) == 1 else ok

    def _extra_support(self, X):
        return np.ones(len(X), dtype=bool)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        if X.shape[-1] != self.dim:
            raise ConfigError(f"expected points of dimension {self.dim}, got {X.shape[-1]}")
        out = np.full(len(X), -np.inf)
        ok = self.in_support(X)
        if ok.all():
            out = np.asarray(self._log_density(X), dtype=float)
        elif ok.any():
            out[ok] = self._log_density(X[ok])
        return float(out[0]) if x.ndim == 1 else out

    def gradient(self, x):
        if not self.has_gradient:
            raise ConfigError(f"{type(self).__name__} does not expose a gradient")
        x = np.asarray(x, dtype=float)
        g = self._gradient(np.atleast_2d(x))
        return g[0] if x.ndim == 1 else g

    def _log_density(self, X):
        raise NotImplementedError

    def _gradient(self, X):
        raise NotImplementedError


class GaussianMixtureTarget(Target):
    def __init__(self, means, covs, weights=None):
        self.means = np.asarray(means, dtype=float)
        self.covs = np.asarray(covs, dtype=float)
        k, self.dim = self.means.shape
        self.weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, float)
        chols = [cholesky(c) for c in self.covs]
        self._inv_chol = np.array([np.linalg.inv(L) for L in chols])
        self._precisions = np.array([np.linalg.inv(c) for c in self.covs])
        log_det = np.array([2.0 * np.log(np.diag(L)).sum() for L in chols])
        self._log_norm = np.log(self.weights) - 0.5 * (self.dim * LOG_2PI + log_det)

    def _component_logs(self, X):
        diff = X[:, None, :] - self.means[None, :, :]
        z = np.matmul(self._inv_chol, diff[..., None])[..., 0]
        return self._log_norm - 0.5 * (z * z).sum(axis=2), diff

    def _log_density(self, X):
        logs, _ = self._component_logs(X)
        m = logs.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(logs - m).sum(axis=1, keepdims=True)))[:, 0]

    def _gradient(self, X):
        logs, diff = self._component_logs(X)
        resp = np.exp(logs - logs.max(axis=1, keepdims=True))
        resp /= resp.sum(axis=1, keepdims=True)
        return -np.einsum("nk,kij,nkj->ni", resp, self._precisions, diff)

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    @property
    def covariance(self) -> np.ndarray:
        mu = self.mean
        dev = self.means - mu
        return np.einsum("k,kij->ij", self.weights, self.covs) + np.einsum(
            "k,ki,kj->ij", self.weights, dev, dev
        )

    @property
    def modes(self) -> np.ndarray:
        return self.means

    def sample(self, rng: RngStream, size: int) -> np.ndarray:
        """Exact i.i.d. draws from the mixture."""
        comp = np.searchsorted(np.cumsum(self.weights), rng.random(size), side="right")
        comp = np.minimum(comp, len(self.weights) - 1)
        chols = np.linalg.cholesky(self.covs)
        z = rng.normal((size, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", chols[comp], z)


GM5_MEANS = [[-10.0, -10.0], [0.0, 16.0], [13.0, 8.0], [-9.0, 7.0], [14.0, -14.0]]
GM5_COVS = [
    [[2.0, 0.6], [0.6, 1.0]],
    [[2.0, -0.4], [-0.4, 2.0]],
    [[2.0, 0.8], [0.8, 2.0]],
    [[3.0, 0.0], [0.0, 0.5]],
    [[2.0, -0.1], [-0.1, 2.0]],
]


def gaussian_mixture_5() -> GaussianMixtureTarget:
    """The bivariate five-mode benchmark; its exact mean is [1.6, 1.4]."""
    return GaussianMixtureTarget(GM5_MEANS, GM5_COVS)


class SinusoidPosterior(Target):
    """Posterior over S normalized frequencies of a noisy sum of cosines.

    ``log_density(x) = -V(x)`` on ``[0, 1/2]^S`` with

        V(x) = 1/(2 noise_var) * sum_k (y_k - A0 - sum_i A cos(2 pi x_i k + phase))^2

    The sample index ``k`` defaults to ``1..K``. With ``ordered=True`` the
    support is further restricted to ``x_1 >= x_2 >= ... >= x_S``, which
    removes the label-switching symmetry.
    """

    def __init__(self, y, S, noise_var, A0=0.0, A=1.0, phase=0.0, k=None, ordered=False):
        y = np.asarray(y, dtype=float).ravel()
        if S <= 0:
            raise ConfigError(f"number of sinusoids S must be positive, got {S}")
        if noise_var <= 0:
            raise ConfigError(f"noise variance must be positive, got {noise_var}")
        if y.size < 1:
            raise ConfigError("at least one observation is required")
        self.y = y
        self.dim = int(S)
        self.noise_var = float(noise_var)
        self.A0, self.A, self.phase = float(A0), float(A), float(phase)
        self.k = np.arange(1, y.size + 1, dtype=float) if k is None else np.asarray(k, float)
        if self.k.shape != y.shape:
            raise ConfigError("sample indices k must match the observations")
        self.ordered = ordered
        self.lower = np.zeros(self.dim)
        self.upper = np.full(self.dim, 0.5)

    def _extra_support(self, X):
        if not self.ordered:
            return np.ones(len(X), dtype=bool)
        return np.all(np.diff(X, axis=1) <= 0, axis=1)

    def _residuals(self, X):
        arg = 2.0 * np.pi * X[:, :, None] * self.k + self.phase
        return self.y - self.A0 - self.A * np.cos(arg).sum(axis=1), arg

    def _log_density(self, X):
        r, _ = self._residuals(X)
        return -0.5 / self.noise_var * np.einsum("nk,nk->n", r, r)

    def _gradient(self, X):
        r, arg = self._residuals(X)
        # d r_k / d x_i = 2 pi k A sin(arg_ik)
        dr = 2.0 * np.pi * self.k * self.A * np.sin(arg)
        return -np.einsum("nk,nik->ni", r, dr) / self.noise_var


def sinusoid_signal(f, k, A0=0.0, A=1.0, phase=0.0) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    k = np.asarray(k, dtype=float)
    return A0 + A * np.cos(2.0 * np.pi * f[:, None] * k + phase).sum(axis=0)


def generate_sinusoid_data(f, K, noise_var, rng: RngStream | None, A0=0.0, A=1.0, phase=0.0):
    """Observations ``y_k``, ``k = 1..K``, of the discretized multi-sinusoid model.

    ``rng=None`` or ``noise_var=0`` gives the noiseless signal.
    """
    k = np.arange(1, K + 1, dtype=float)
    y = sinusoid_signal(f, k, A0, A, phase)
    if rng is not None and noise_var > 0:
        y = y + math.sqrt(noise_var) * rng.normal(K)
    return y


def sinusoid_posterior(y, S, noise_var, A0=0.0, A=1.0, phase=0.0, **kw) -> SinusoidPosterior:
    return SinusoidPosterior(y, S, noise_var, A0=A0, A=A, phase=phase, **kw)


def write_observations(path, y) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"])
        for v in np.asarray(y, dtype=float):
            w.writerow([repr(float(v))])


def read_observations(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and "y" not in rows[0]:
        raise ConfigError(f"{path}: missing 'y' column")
    return np.array([float(r["y"]) for r in rows])


class TemperedTarget(Target):
    def __init__(self, base: Target, gamma: float):
        if not gamma > 0:
            raise ConfigError(f"temperature must be positive, got {gamma}")
        self.base = base
        self.gamma = float(gamma)
        self.dim = base.dim
        self.lower, self.upper = base.lower, base.upper

    @property
    def has_gradient(self):
        return self.base.has_gradient

    def in_support(self, x):
        return self.base.in_support(x)

    def log_density(self, x):
        return self.base.log_density(x) / self.gamma

    def gradient(self, x):
        return self.base.gradient(x) / self.gamma


def temper(target: Target, gamma: float) -> Target:
    """``[pi(x)]^(1/gamma)``: same support and argmax, sharper modes for ``gamma < 1``."""
    return TemperedTarget(target, gamma)


class ExtendedTarget:
    """Product target over a population: ``sum_n log pi(x_n) / gamma_n``."""

    def __init__(self, base: Target, n_chains: int, temperatures=None):
        self.base = base
        self.n_chains = n_chains
        t = np.ones(n_chains) if temperatures is None else np.asarray(temperatures, float)
        if t.shape != (n_chains,) or np.any(t <= 0):
            raise ConfigError("need one positive temperature per chain")
        self.temperatures = t

    def log_density(self, population) -> float:
        X = np.asarray(population, dtype=float).reshape(self.n_chains, self.base.dim)
        return float(np.sum(self.base.log_density(X) / self.temperatures))


@dataclass
class TemperedSequence:
    """Targets pi_1..pi_P visited in order, each with a share of the budget."""

    stages: list
    fractions: list = field(default=None)

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("a tempered sequence needs at least one stage")
        if self.fractions is None:
            self.fractions = [1.0 / len(self.stages)] * len(self.stages)
        if len(self.fractions) != len(self.stages) or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("stage budget fractions must match stages and sum to 1")

    @property
    def final(self) -> Target:
        return self.stages[-1]


def data_tempered_sinusoid(y, S, noise_var, counts, **kw) -> TemperedSequence:
    """Posteriors built on the first ``K_i`` observations for each ``K_i`` in ``counts``."""
    y = np.asarray(y, dtype=float)
    counts = list(counts)
    if counts[-1] != y.size:
        raise ConfigError("the final stage must use all observations")
    return TemperedSequence([SinusoidPosterior(y[:K], S, noise_var, **kw) for K in counts])


def partial_posteriors(y, n_blocks, S, noise_var, **kw) -> list[SinusoidPosterior]:
    """Split the observations into contiguous disjoint blocks, one partial posterior each.

    The sum of the partial log-densities equals the full log-density.
    """
    y = np.asarray(y, dtype=float)
    k = kw.pop("k", np.arange(1, y.size + 1, dtype=float))
    if not 1 <= n_blocks <= y.size:
        raise ConfigError("need 1 <= n_blocks <= number of observations")
    return [
        SinusoidPosterior(yb, S, noise_var, k=kb, **kw)
        for yb, kb in zip(np.array_split(y, n_blocks), np.array_split(k, n_blocks))
    ]


class DiscreteTarget(Target):
    """Target on the integer states ``0..m-1`` embedded in R^1, for exact kernel enumeration."""

    dim = 1

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if np.any(p < 0) or p.sum() <= 0:
            raise ConfigError("discrete target needs non-negative mass")
        self.probs = p / p.sum()
        self.logp = np.log(np.where(self.probs > 0, self.probs, 1.0))
        self.logp[self.probs == 0] = -np.inf
        self.lower = np.zeros(1)
        self.upper = np.full(1, len(p) - 1.0)

    def _extra_support(self, X):
        return X[:, 0] == np.round(X[:, 0])

    def _log_density(self, X):
        return self.logp[X[:, 0].astype(int)]


def grid_moments(target: Target, n_per_axis: int = 1000, orders=(1,), chunk: int = 200_000):
    """Non-central moments of the normalized target by midpoint quadrature on its box.

    Returns ``{order: array of per-coordinate moments}``.
    """
    if target.lower is None or target.upper is None:
        raise ConfigError("grid quadrature needs a bounded support box")
    axes = [
        lo + (np.arange(n_per_axis) + 0.5) * (hi - lo) / n_per_axis
        for lo, hi in zip(target.lower, target.upper)
    ]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, target.dim)
    logs = np.concatenate(
        [target.log_density(mesh[i : i + chunk]) for i in range(0, len(mesh), chunk)]
    )
    w = np.exp(logs - logs.max())
    w /= w.sum()
    return {p: w @ mesh**p for p in orders}
