"""Online adaptation of the horizontal proposal location and scale.

The vertical random-walk scales are never adapted. Only the independent
proposal used by the horizontal kernels (``phi`` for SMH, the mixture
``psi`` for the other schemes) learns from the pooled output of all chains.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, cholesky
from .proposals import GaussianProposal, MixtureProposal


@dataclass(frozen=True)
class AdaptationState:
    """Running mean and scatter of every state fed so far.

    ``iterations`` counts update calls (one per global iteration ``t``);
    ``count`` counts points (``N`` per iteration). The published covariance
    is ``scatter / count + floor``.
    """

    mu0: np.ndarray
    floor: np.ndarray
    T_train: int = 1
    mean: np.ndarray | None = None
    scatter: np.ndarray | None = None
    count: int = 0
    iterations: int = 0

    def __post_init__(self):
        if self.mean is not None:
            return
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        floor = np.atleast_2d(np.asarray(self.floor, dtype=float))
        if floor.shape != (mu0.size, mu0.size):
            raise ConfigError(f"floor covariance must be {mu0.size}x{mu0.size}, got {floor.shape}")
        cholesky(floor)
        if self.T_train < 0:
            raise ConfigError("T_train must be non-negative")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "floor", floor)
        object.__setattr__(self, "mean", np.zeros(mu0.size))
        object.__setattr__(self, "scatter", np.zeros_like(floor))

    @property
    def dim(self) -> int:
        return self.mu0.size

    @property
    def covariance(self) -> np.ndarray:
        """``scatter / count + floor`` over everything fed so far (the floor alone when empty)."""
        if self.count == 0:
            return self.floor.copy()
        return self.scatter / self.count + self.floor

    def params_at(self, t: int | None = None):
        """``(mu_t, Lambda_t)`` to use at global iteration ``t``.

        ``t`` defaults to the next iteration, ``iterations + 1``. The initial
        choice is returned while ``t <= T_train`` (or before any data has
        arrived); afterwards the pooled moments of the samples already fed
        are used, so with ``T_train = T_V`` the first horizontal step
        already sees the first vertical period.
        """
        t = self.iterations + 1 if t is None else t
        if t <= self.T_train or self.count == 0:
            return self.mu0.copy(), self.floor.copy()
        return self.mean.copy(), self.covariance

    def proposal(self, t: int | None = None) -> GaussianProposal:
        return GaussianProposal(*self.params_at(t))


def adapt_update(a: AdaptationState, samples) -> AdaptationState:
    """Merge a batch of states (one population, or any ``(n, d)`` array) into ``a``."""
    X = np.asarray(getattr(samples, "x", samples), dtype=float)
    X = X.reshape(1, -1) if X.ndim == 1 else X
    if X.ndim != 2 or X.shape[1] != a.dim:
        raise ConfigError(f"expected samples of dimension {a.dim}, got shape {X.shape}")
    n = len(X)
    if n == 0:
        return replace(a, iterations=a.iterations + 1)
    mb = X.sum(axis=0) / n
    D = X - mb
    Sb = D.T @ D
    tot = a.count + n
    delta = mb - a.mean
    mean = a.mean + delta * (n / tot)
    scatter = a.scatter + Sb + np.outer(delta, delta) * (a.count * n / tot)
    return replace(a, mean=mean, scatter=scatter, count=tot, iterations=a.iterations + 1)


def nearest_component(points, locations) -> np.ndarray:
    """Index of the closest location for each point; ties go to the lower index."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    C = np.atleast_2d(np.asarray(locations, dtype=float))
    d2 = ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def adapt_mixture(psi: MixtureProposal, history, floor, locations=None) -> MixtureProposal:
    """Per-component covariances from a nearest-location clustering of ``history``.

    Each point of ``history`` joins the component whose current location is
    closest. Component ``n`` gets the (biased) covariance of its cluster
    plus ``floor``; an empty cluster keeps its previous covariance. The
    returned mixture is centred on ``locations`` (defaults to the current
    ones) with uniform weights.
    """
    H = np.atleast_2d(np.asarray(history, dtype=float))
    if H.size == 0:
        raise ConfigError("adapt_mixture needs a non-empty history")
    if H.shape[1] != psi.dim:
        raise ConfigError(f"history has dimension {H.shape[1]}, mixture has {psi.dim}")
    floor = np.atleast_2d(np.asarray(floor, dtype=float))
    labels = nearest_component(H, psi.locations)
    covs = np.array(psi.covs)
    for n in range(psi.n_components):
        pts = H[labels == n]
        if len(pts):
            D = pts - pts.mean(axis=0)
            covs[n] = D.T @ D / len(pts) + floor
    locs = psi.locations if locations is None else locations
    return MixtureProposal(locs, covs)
