"""The O-MCMC scheduler: vertical periods, horizontal periods, bookkeeping and estimators."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptation import AdaptationState, adapt_update
from .core import HORIZONTAL_STREAM, ConfigError, Population, RngStream, chain_streams
from .horizontal import HorizontalConfig, bimtm_block, horizontal_step
from .proposals import GaussianProposal, MixtureProposal, RandomWalkProposal
from .schedule import CostCounters, Schedule, cost_closed_forms
from .targets import TemperedSequence
from .vertical import CoolingSchedule, vertical_sweep

# Initial states come from their own stream so that they never shift the
# chain or horizontal draws.
INIT_STREAM = 2**31


class SampleStore:
    """Every state produced by a run, in iteration order.

    ``samples[t - 1, n]`` is the state of chain ``n`` after global iteration
    ``t``; ``phase[t - 1]`` is ``"V"`` or ``"H"``. With ``keep=False`` only
    running sums are kept (the mean is still exact). Optional per-sample log
    importance weights turn :meth:`mean` into a self-normalized estimate.
    """

    def __init__(self, N: int, dim: int, T: int, keep: bool = True, weighted: bool = False):
        self.N, self.dim, self.T = N, dim, T
        self.keep = keep
        self.samples = np.empty((T, N, dim)) if keep else None
        self.log_weights = np.empty((T, N)) if weighted else None
        self.phase = np.empty(T, dtype="<U1")
        self.accept_counts = np.zeros(N, dtype=np.int64)
        self.steps = 0
        self._sum = np.zeros(dim)
        self.best_x: np.ndarray | None = None
        self.best_log_pi = -np.inf
        self.best_trace = np.empty(T)
        self.last: np.ndarray | None = None
        self.metadata: dict = {}

    def record(self, pop: Population, phase: str, accepted=None, log_weights=None):
        if self.steps >= self.T:
            raise ConfigError("sample store is full")
        i = self.steps
        if self.keep:
            self.samples[i] = pop.x
        if self.log_weights is not None:
            self.log_weights[i] = log_weights
        else:
            self._sum += pop.x.sum(axis=0)
        self.phase[i] = phase
        self.last = pop.x
        if accepted is not None:
            self.accept_counts += np.asarray(accepted, dtype=np.int64)
        k = int(np.argmax(pop.log_pi))
        if pop.log_pi[k] > self.best_log_pi:
            self.best_log_pi = float(pop.log_pi[k])
            self.best_x = pop.x[k].copy()
        self.best_trace[i] = self.best_log_pi
        self.steps += 1

    def __len__(self) -> int:
        return self.steps * self.N

    @property
    def acceptance_rates(self) -> np.ndarray:
        return self.accept_counts / max(self.steps, 1)

    def mean(self) -> np.ndarray:
        if not self.steps:
            raise ConfigError("the sample store is empty")
        if self.log_weights is None:
            return self._sum / len(self)
        if not self.keep:
            raise ConfigError("a weighted estimate needs the stored samples")
        lw = self.log_weights[: self.steps].reshape(-1)
        w = np.exp(lw - lw.max())
        return w @ self.samples[: self.steps].reshape(-1, self.dim) / w.sum()

    def flat(self) -> np.ndarray:
        """All ``N T`` states as an ``(N T, d)`` array (iteration-major)."""
        if not self.keep:
            raise ConfigError("samples were not kept")
        return self.samples[: self.steps].reshape(-1, self.dim)

    def write_csv(self, path) -> None:
        """Columns ``t, chain, x_1..x_d, phase``; ``t`` and ``chain`` are 1-based."""
        header = ["t", "chain"] + [f"x_{i + 1}" for i in range(self.dim)] + ["phase"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.steps):
                for n in range(self.N):
                    w.writerow([i + 1, n + 1, *map(repr, self.samples[i, n].tolist()), self.phase[i]])

    @classmethod
    def read_csv(cls, path) -> "SampleStore":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ConfigError(f"{path} holds no samples")
        dim = sum(1 for k in rows[0] if k.startswith("x_"))
        T = max(int(r["t"]) for r in rows)
        N = max(int(r["chain"]) for r in rows)
        store = cls(N, dim, T)
        for r in rows:
            i, n = int(r["t"]) - 1, int(r["chain"]) - 1
            store.samples[i, n] = [float(r[f"x_{j + 1}"]) for j in range(dim)]
            store.phase[i] = r["phase"]
        for i in range(T):
            store._sum += store.samples[i].sum(axis=0)
        store.steps = T
        return store

    def write_metadata(self, path, counters: CostCounters | None = None) -> None:
        meta = dict(self.metadata)
        meta["acceptance_rates"] = self.acceptance_rates.tolist()
        meta["n_samples"] = len(self)
        if counters is not None:
            meta["counters"] = counters.as_dict()
        Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


@dataclass
class OMCMCConfig:
    """Everything one O-MCMC run needs.

    ``sigma`` sets the vertical random-walk covariance ``sigma^2 I`` shared
    by all chains. The horizontal proposal starts from ``N(mu0, lam^2 I)``
    (SMH) or a mixture with covariances ``lam^2 I`` centred on the
    population; with ``adapt`` on, both use the pooled moments of the run
    plus the ``lam^2 I`` floor once ``t > T_train`` (default ``T_V``).
    ``target`` may be a :class:`TemperedSequence`, in which case the epochs
    are split across its stages.
    """

    target: object
    schedule: Schedule
    sigma: float = 5.0
    lam: float = 2.0
    mu0: np.ndarray | None = None
    adapt: bool = True
    T_train: int | None = None
    init: np.ndarray | None = None
    init_box: tuple = (-4.0, 4.0)
    seed: int = 0
    cooling: CoolingSchedule | None = None
    vertical_kind: str = "RW"
    mala_step: float | None = None
    keep_samples: bool = True
    label: str = ""

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not self.lam > 0:
            raise ConfigError("lam must be positive")

    @property
    def dim(self) -> int:
        return _final(self.target).dim

    def digest(self) -> str:
        s = self.schedule
        desc = {
            "target": type(_final(self.target)).__name__,
            "schedule": [s.T, s.T_V, s.T_H, s.N, s.L, s.scheme],
            "sigma": self.sigma,
            "lam": self.lam,
            "mu0": None if self.mu0 is None else np.asarray(self.mu0, float).tolist(),
            "adapt": self.adapt,
            "T_train": self.T_train,
            "cooling": None if self.cooling is None else repr(self.cooling),
            "vertical": [self.vertical_kind, self.mala_step],
            "label": self.label,
        }
        return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()[:16]


def _final(target):
    return target.final if isinstance(target, TemperedSequence) else target


def stage_of_epochs(seq: TemperedSequence, M: int) -> np.ndarray:
    """Stage index used in each of ``M`` epochs; epochs are shared out by the stage fractions."""
    cuts = np.rint(np.cumsum(seq.fractions) * M).astype(int)
    return np.minimum(np.searchsorted(cuts, np.arange(M), side="right"), len(cuts) - 1)


def initial_population(config, N: int, dim: int) -> np.ndarray:
    if config.init is not None:
        X = np.array(config.init, dtype=float)
        if X.shape != (N, dim):
            raise ConfigError(f"init must have shape {(N, dim)}, got {X.shape}")
        return X
    target = _final(config.target)
    rng = RngStream(config.seed, INIT_STREAM)
    if getattr(target, "lower", None) is not None and getattr(target, "upper", None) is not None:
        lo, hi = target.lower, target.upper
    else:
        lo, hi = np.full(dim, config.init_box[0]), np.full(dim, config.init_box[1])
    X = lo + (hi - lo) * rng.random((N, dim))
    # Constrained supports (ordered simplex) are reached by sorting.
    if not np.all(target.in_support(X)):
        X = -np.sort(-X, axis=1)
    return X


def _vertical_proposal(config, dim):
    return RandomWalkProposal(config.sigma**2 * np.eye(dim), kind=config.vertical_kind, step=config.mala_step)


def run_omcmc(config: OMCMCConfig):
    """Run ``M`` epochs of ``T_V`` vertical then ``T_H`` horizontal iterations.

    Returns ``(SampleStore, CostCounters)``. No state is discarded.
    """
    sch = config.schedule
    N, d = sch.N, config.dim
    hcfg = HorizontalConfig(sch.scheme, sch.L)
    seq = config.target if isinstance(config.target, TemperedSequence) else None
    stages = stage_of_epochs(seq, sch.M) if seq else np.zeros(sch.M, dtype=int)
    target = seq.stages[stages[0]] if seq else config.target

    rngs = chain_streams(config.seed, N)
    hrng = RngStream(config.seed, HORIZONTAL_STREAM)
    q = _vertical_proposal(config, d)
    floor = config.lam**2 * np.eye(d)
    mu0 = np.zeros(d) if config.mu0 is None else np.asarray(config.mu0, dtype=float)
    T_train = sch.T_V if config.T_train is None else config.T_train
    adapt = AdaptationState(mu0, floor, T_train)

    X0 = initial_population(config, N, d)
    pop = Population(X0, target.log_density(X0))
    if not np.all(np.isfinite(pop.log_pi)):
        raise ConfigError("every initial state must lie in the target support")

    store = SampleStore(N, d, sch.T, keep=config.keep_samples)
    store.metadata.update(seed=config.seed, config_digest=config.digest(), scheme=sch.scheme)
    counters = CostCounters()
    cooling = config.cooling
    t = 0

    def record(p, phase, acc):
        nonlocal adapt
        store.record(p, phase, acc)
        counters.samples_generated += N
        if config.adapt:
            adapt = adapt_update(adapt, p.x)

    for m in range(sch.M):
        if m and stages[m] != stages[m - 1]:
            # stage switch: the population carries over, its cache is refreshed
            target = seq.stages[stages[m]]
            pop = Population(pop.x, target.log_density(pop.x))
            counters.target_evals += N

        for _ in range(sch.T_V):
            t += 1
            gamma = cooling(t) if cooling else None
            pop, acc = vertical_sweep(pop, q, target, rngs, gamma=gamma, counters=counters)
            record(pop, "V", acc)

        # The horizontal proposal is frozen for the whole period.
        _, cov = adapt.params_at(t + 1) if config.adapt else (None, floor)
        if hcfg.scheme == "smh":
            mu = adapt.params_at(t + 1)[0] if config.adapt else mu0
            proposal = GaussianProposal(mu, cov)
        else:
            proposal = MixtureProposal(pop.x, cov)

        if hcfg.scheme == "bimtm":
            for _ in range(sch.T_H // N):
                temp = cooling(t + 1) if cooling else 1.0
                for pop, acc in bimtm_block(pop, proposal, target, sch.L, hrng, counters, temp):
                    t += 1
                    record(pop, "H", acc)
        else:
            for _ in range(sch.T_H):
                t += 1
                temp = cooling(t) if cooling else 1.0
                pop, acc = horizontal_step(hcfg, pop, proposal, target, hrng, counters, temp)
                record(pop, "H", acc)

    store.metadata["final_adaptation"] = {"mean": adapt.mean.tolist(), "count": adapt.count}
    return store, counters


def expected_counters(config: OMCMCConfig) -> CostCounters:
    """Closed-form counters for ``config``, including stage-switch re-evaluations."""
    c = cost_closed_forms(config.schedule)
    if isinstance(config.target, TemperedSequence):
        stages = stage_of_epochs(config.target, config.schedule.M)
        switches = int(np.count_nonzero(np.diff(stages)))
        c.target_evals += config.schedule.N * switches
    return c


def run_sa_optimize(config: OMCMCConfig):
    """Simulated-annealing O-MCMC; returns ``(best_x, best_log_pi, store)``.

    Chains and horizontal weights use ``pi^(1/gamma_t)``; the best point is
    tracked on the untempered ``log pi`` over every visited state.
    """
    if config.cooling is None:
        raise ConfigError("optimization needs a cooling schedule")
    if config.vertical_kind.upper() != "RW":
        raise ConfigError("simulated annealing uses symmetric random-walk proposals")
    store, counters = run_omcmc(config)
    store.metadata["counters"] = counters.as_dict()
    return store.best_x, store.best_log_pi, store


# ---------------------------------------------------------------- estimators


def estimate_mean(store: SampleStore) -> np.ndarray:
    """Mean over all stored states (weighted when the store carries importance weights)."""
    return store.mean()


def mse(estimates, truth) -> float:
    """Squared error averaged over coordinates and runs."""
    E = np.atleast_2d(np.asarray(estimates, dtype=float))
    return float(np.mean((E - np.asarray(truth, dtype=float)) ** 2))


def relative_error(point, truth) -> float:
    truth = np.asarray(truth, dtype=float)
    return float(np.linalg.norm(np.asarray(point, dtype=float) - truth) / np.linalg.norm(truth))


@dataclass
class RunningStat:
    """Streaming mean / variance (Welford) with an order-independent merge."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "RunningStat") -> "RunningStat":
        n = self.n + other.n
        if n == 0:
            return RunningStat()
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta**2 * self.n * other.n / n
        return RunningStat(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.variance / self.n)) if self.n > 1 else 0.0
