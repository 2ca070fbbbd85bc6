"""Run schedule (T, T_V, T_H, M, N, L) and exact cost accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .core import ConfigError

HORIZONTAL_SCHEMES = ("smh", "basic_mixture", "variant_mixture", "penm", "pmtm", "bimtm")
BASELINE_SCHEMES = ("ipc", "pmc")
MULTI_CANDIDATE = ("penm", "pmtm", "bimtm")

_NAMES = {
    "smh": "smh",
    "basicmixture": "basic_mixture",
    "mixture": "basic_mixture",
    "variantmixture": "variant_mixture",
    "basicmixturevariant": "variant_mixture",
    "variant": "variant_mixture",
    "penm": "penm",
    "pmtm": "pmtm",
    "bimtm": "bimtm",
    "ipc": "ipc",
    "pmc": "pmc",
}


def canonical_scheme(name: str) -> str:
    key = str(name).strip().lower().replace("_", "").replace("-", "")
    if key not in _NAMES:
        raise ConfigError(f"unknown scheme {name!r}")
    return _NAMES[key]


@dataclass(frozen=True)
class Schedule:
    """``M`` epochs of ``T_V`` vertical then ``T_H`` horizontal iterations, ``M (T_V + T_H) = T``."""

    T: int
    T_V: int
    T_H: int
    N: int
    L: int = 1
    scheme: str = "smh"

    def __post_init__(self):
        object.__setattr__(self, "scheme", canonical_scheme(self.scheme))
        problems = self.violations()
        if problems:
            raise ConfigError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        for name in ("T", "T_V", "T_H", "N", "L"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                out.append(f"{name} must be a positive integer, got {v!r}")
        if out:
            return out
        if self.T % (self.T_V + self.T_H):
            out.append(
                f"T={self.T} is not a multiple of T_V+T_H={self.T_V + self.T_H}; "
                "M(T_V+T_H)=T has no integer M"
            )
        if self.scheme == "bimtm" and self.T_H % self.N:
            out.append(f"BI-MTM needs T_H divisible by N (T_H={self.T_H}, N={self.N})")
        return out

    @property
    def M(self) -> int:
        return self.T // (self.T_V + self.T_H)


@dataclass
class CostCounters:
    target_evals: int = 0
    multinomial_steps: int = 0
    acceptance_tests: int = 0
    samples_generated: int = 0

    def __iadd__(self, other: "CostCounters"):
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)
        return self

    def as_dict(self) -> dict:
        return asdict(self)


def cost_closed_forms(schedule: Schedule, scheme: str | None = None) -> CostCounters:
    """Exact totals for a complete O-MCMC run.

    ``samples_generated`` is the number of stored states, ``N T``. P-EnM's
    per-chain (L+1)-way selection is its accept/stay decision and is counted
    as one acceptance test per chain, like the other multi-candidate schemes.
    """
    scheme = canonical_scheme(scheme or schedule.scheme)
    M, N, L, T_V, T_H = schedule.M, schedule.N, schedule.L, schedule.T_V, schedule.T_H
    vertical = N * T_V
    if scheme == "smh":
        evals, mult, acc = T_H, T_H, T_H
    elif scheme == "basic_mixture":
        evals, mult, acc = T_H, 0, N * T_H
    elif scheme == "variant_mixture":
        evals, mult, acc = N * T_H, 0, N * T_H
    elif scheme in ("penm", "pmtm"):
        evals, mult, acc = L * T_H, N * T_H, N * T_H
    elif scheme == "bimtm":
        evals, mult, acc = L * T_H, T_H, N * T_H
    else:
        raise ConfigError(f"no O-MCMC closed form for baseline scheme {scheme!r}")
    return CostCounters(
        target_evals=M * (vertical + evals),
        multinomial_steps=M * mult,
        acceptance_tests=M * (vertical + acc),
        samples_generated=N * schedule.T,
    )


def standard_parallel_mtm_evals(schedule: Schedule) -> int:
    """Horizontal evaluations per period of N independent MTM chains with L tries each."""
    return schedule.N * schedule.L * schedule.T_H


def baseline_closed_forms(scheme: str, N: int, T: int) -> CostCounters:
    scheme = canonical_scheme(scheme)
    if scheme == "ipc":
        return CostCounters(N * T, 0, N * T, N * T)
    if scheme == "pmc":
        return CostCounters(N * T, N * T, 0, N * T)
    raise ConfigError(f"{scheme!r} is not a baseline scheme")
