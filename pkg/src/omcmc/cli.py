"""Configuration-driven experiment runner.

    omcmc sample|optimize|benchmark <config.json | preset> [--seed U64] [--runs K]
          [--threads K] [--out DIR] [--dump-samples]

Each invocation writes ``estimates.csv`` (one row per run), ``aggregate.json``
(MSE / RE with standard errors, counters and the closed-form counter check)
and ``plot_data.csv`` (long format: series, x = sigma, y, stderr). With
``--dump-samples`` the states of the first run are written to ``samples.csv``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig, expected_baseline_counters, run_ipc, run_pmc
from .core import ConfigError, CovarianceError, OMCMCError, RngStream
from .orchestrator import (
    OMCMCConfig,
    RunningStat,
    expected_counters,
    relative_error,
    run_omcmc,
    run_sa_optimize,
)
from .schedule import BASELINE_SCHEMES, Schedule, canonical_scheme
from .targets import (
    GaussianMixtureTarget,
    data_tempered_sinusoid,
    gaussian_mixture_5,
    generate_sinusoid_data,
    grid_moments,
    read_observations,
    sinusoid_posterior,
)
from .vertical import CoolingSchedule

MODES = ("sample", "optimize", "benchmark")
PLOT_HEADER = ["series", "x", "y", "stderr"]


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    target: dict
    scheme: str
    N: int
    T: int
    T_V: int = 1
    T_H: int = 1
    L: int = 1
    sigmas: list = field(default_factory=lambda: [5.0])
    lam: object = 2.0
    mu0: list | None = None
    adapt: bool = True
    T_train: int | None = None
    init_box: tuple = (-4.0, 4.0)
    cooling: dict | None = None
    vertical: str = "RW"
    mala_step: float | None = None
    runs: int = 1
    seed: int = 0
    truth: object = None
    grid_points: int = 1000
    metric: str = "mse"
    point: str = "mean"
    baseline_T: int | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def is_baseline(self) -> bool:
        return self.scheme in BASELINE_SCHEMES

    def schedule(self) -> Schedule:
        return Schedule(self.T, self.T_V, self.T_H, self.N, self.L, self.scheme)


# ---------------------------------------------------------------- parsing


def _pos_int(raw, key, errors, default=None):
    v = raw.get(key, default)
    if v is None:
        return None
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        errors.append(f"{key}: must be a positive integer, got {v!r}")
        return default if isinstance(default, int) else 1
    return v


def _pos_float(v, key, errors):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        errors.append(f"{key}: must be a positive number, got {v!r}")
        return 1.0
    return float(v)


def load_config_source(source) -> tuple[dict, Path]:
    """Return the raw JSON dict and the directory relative paths resolve against.

    ``source`` is a path to a JSON file or the name of a bundled preset.
    """
    path = Path(source)
    if path.is_file():
        return json.loads(path.read_text()), path.parent
    name = str(source).removesuffix(".json")
    preset = resources.files("omcmc") / "presets" / f"{name}.json"
    if preset.is_file():
        return json.loads(preset.read_text()), Path.cwd()
    raise ConfigError(f"{source}: no such config file or preset")


def preset_names() -> list[str]:
    root = resources.files("omcmc") / "presets"
    return sorted(p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json"))


def parse_config(source, base_dir=None) -> ExperimentConfig:
    """Validate a config (dict, JSON path or preset name).

    Every problem found is reported in one :class:`ConfigError`, each
    message prefixed by the offending field path.
    """
    if isinstance(source, dict):
        raw, root = source, Path(base_dir or Path.cwd())
    else:
        raw, root = load_config_source(source)
    errors: list[str] = []
    known = set(ExperimentConfig.__dataclass_fields__) | {
        "sigma", "lambda", "horizontal", "init", "baseline", "description",
    }
    for key in raw:
        if key not in known:
            errors.append(f"{key}: unknown field")

    mode = raw.get("mode", "sample")
    if mode not in MODES:
        errors.append(f"mode: must be one of {', '.join(MODES)}, got {mode!r}")
    try:
        scheme = canonical_scheme(raw.get("scheme", "smh"))
    except ConfigError as exc:
        errors.append(f"scheme: {exc}")
        scheme = "smh"

    N = _pos_int(raw, "N", errors, 5)
    T = _pos_int(raw, "T", errors, 4000)
    T_V = _pos_int(raw, "T_V", errors, 1)
    T_H = _pos_int(raw, "T_H", errors, 1)
    L = _pos_int(raw, "L", errors, 1)
    runs = _pos_int(raw, "runs", errors, 1)

    sig = raw.get("sigma", 5.0)
    sigmas = sig if isinstance(sig, list) else [sig]
    if not sigmas:
        errors.append("sigma: needs at least one value")
    sigmas = [_pos_float(s, f"sigma[{i}]" if isinstance(sig, list) else "sigma", errors) for i, s in enumerate(sigmas)]

    hz = raw.get("horizontal", {})
    if not isinstance(hz, dict):
        errors.append("horizontal: must be an object")
        hz = {}
    lam = hz.get("lambda", 2.0)
    if lam != "sigma":
        lam = _pos_float(lam, "horizontal.lambda", errors)
    adapt = hz.get("adapt", True)
    if not isinstance(adapt, bool):
        errors.append("horizontal.adapt: must be true or false")
    T_train = hz.get("T_train")
    if T_train is not None and (not isinstance(T_train, int) or T_train < 0):
        errors.append("horizontal.T_train: must be a non-negative integer")
    mu0 = hz.get("mu0")

    init = raw.get("init", {"low": -4.0, "high": 4.0})
    init_box = (float(init.get("low", -4.0)), float(init.get("high", 4.0)))
    if not init_box[0] < init_box[1]:
        errors.append("init: low must be below high")

    cooling = raw.get("cooling", {"kind": "geometric", "gamma0": 1.0, "rate": 0.99} if mode == "optimize" else None)
    if cooling is not None:
        try:
            CoolingSchedule(**cooling)
        except (ConfigError, TypeError) as exc:
            errors.append(f"cooling: {exc}")

    vertical = raw.get("vertical", {})
    vkind = str(vertical.get("kind", "RW")).upper()
    if vkind not in ("RW", "MALA"):
        errors.append(f"vertical.kind: must be RW or MALA, got {vkind!r}")
    mala_step = vertical.get("mala_step")
    if vkind == "MALA" and not (isinstance(mala_step, (int, float)) and mala_step > 0):
        errors.append("vertical.mala_step: MALA needs a positive step size")

    metric = raw.get("metric", "mse")
    if metric not in ("mse", "re"):
        errors.append(f"metric: must be 'mse' or 're', got {metric!r}")
    point = raw.get("point", "best" if mode == "optimize" else "mean")
    if point not in ("mean", "best", "final"):
        errors.append(f"point: must be 'mean', 'best' or 'final', got {point!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        errors.append("seed: must be a 64-bit unsigned integer")
    grid_points = _pos_int(raw, "grid_points", errors, 1000)
    baseline = raw.get("baseline", {})
    baseline_T = baseline.get("T") if isinstance(baseline, dict) else None
    if baseline_T is not None and (not isinstance(baseline_T, int) or baseline_T < 1):
        errors.append("baseline.T: must be a positive integer")

    target = raw.get("target", {"kind": "gaussian_mixture_5"})
    dim = None
    try:
        built = build_target(target, root)
        dim = _final_target(built).dim
    except (ConfigError, CovarianceError) as exc:
        errors.append(f"target: {exc}")
    except (TypeError, KeyError, ValueError) as exc:
        errors.append(f"target: malformed specification ({exc})")
    if mu0 is not None and dim is not None and len(mu0) != dim:
        errors.append(f"horizontal.mu0: expected {dim} values, got {len(mu0)}")

    cfg = ExperimentConfig(
        name=str(raw.get("name", getattr(source, "stem", None) or "experiment")),
        mode=mode, target=target, scheme=scheme, N=N, T=T, T_V=T_V, T_H=T_H, L=L,
        sigmas=sigmas, lam=lam, mu0=mu0, adapt=adapt, T_train=T_train, init_box=init_box,
        cooling=cooling, vertical=vkind, mala_step=mala_step, runs=runs, seed=seed,
        truth=raw.get("truth"), grid_points=grid_points, metric=metric, point=point,
        baseline_T=baseline_T, base_dir=root,
    )
    if not cfg.is_baseline:
        try:
            cfg.schedule()
        except ConfigError as exc:
            errors.append(f"schedule: {exc}")
    elif mode == "benchmark":
        errors.append("mode: benchmark compares O-MCMC against IPC; pick an O-MCMC scheme")
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def _final_target(t):
    return t.final if hasattr(t, "stages") else t


def build_target(spec: dict, base_dir: Path = Path(".")):
    """Instantiate a target (or a data-tempered sequence) from its JSON description."""
    kind = spec.get("kind")
    if kind == "gaussian_mixture_5":
        return gaussian_mixture_5()
    if kind == "gaussian_mixture":
        return GaussianMixtureTarget(spec["means"], spec["covs"], spec.get("weights"))
    if kind == "sinusoid":
        S = spec.get("S", 2)
        nv = spec.get("noise_var", 0.5)
        if "observations" in spec:
            y = read_observations(Path(base_dir) / spec["observations"])
        else:
            f = spec.get("f", [0.1, 0.3])
            K = spec.get("K", 10)
            y = generate_sinusoid_data(f, K, nv, RngStream(spec.get("data_seed", 1), 0))
        kw = {k: spec[k] for k in ("A0", "A", "phase", "ordered") if k in spec}
        counts = spec.get("tempering")
        if counts:
            return data_tempered_sinusoid(y, S, nv, counts, **kw)
        return sinusoid_posterior(y, S, nv, **kw)
    raise ConfigError(f"unknown target kind {kind!r}")


def resolve_truth(cfg: ExperimentConfig, target):
    truth = cfg.truth
    final = _final_target(target)
    if truth is None:
        return None
    if isinstance(truth, list):
        return np.asarray(truth, dtype=float)
    if truth == "mean":
        return final.mean
    if truth == "grid":
        return grid_moments(final, cfg.grid_points)[1]
    if truth == "f":
        f = np.asarray(cfg.target.get("f", [0.1, 0.3]), dtype=float)
        return -np.sort(-f) if cfg.target.get("ordered") else f
    raise ConfigError(f"truth: unknown value {truth!r}")


# ---------------------------------------------------------------- running


def derive_seed(seed: int, run: int) -> int:
    """Per-run 64-bit seed; runs are independent and reproducible."""
    a, b = np.random.SeedSequence(seed, spawn_key=(run,)).generate_state(2, np.uint32)
    return (int(a) << 32) | int(b)


@dataclass
class RunResult:
    run: int
    seed: int
    estimate: np.ndarray
    sq_err: float | None
    rel_err: float | None
    counters: dict
    expected: dict
    store: object = None


def _lam_value(cfg, sigma):
    return sigma if cfg.lam == "sigma" else cfg.lam


def run_once(cfg: ExperimentConfig, target, truth, sigma, scheme, run, T=None, keep_store=False) -> RunResult:
    seed = derive_seed(cfg.seed, run)
    if scheme in BASELINE_SCHEMES:
        bc = BaselineConfig(
            target, cfg.N, T or cfg.T, sigma=sigma, init_box=cfg.init_box, seed=seed,
            vertical_kind=cfg.vertical, mala_step=cfg.mala_step, keep_samples=keep_store,
        )
        store, counters = (run_ipc if scheme == "ipc" else run_pmc)(bc)
        expected = expected_baseline_counters(bc, scheme).as_dict()
    else:
        oc = OMCMCConfig(
            target, cfg.schedule(), sigma=sigma, lam=_lam_value(cfg, sigma), mu0=cfg.mu0,
            adapt=cfg.adapt, T_train=cfg.T_train, init_box=cfg.init_box, seed=seed,
            cooling=CoolingSchedule(**cfg.cooling) if cfg.cooling else None,
            vertical_kind=cfg.vertical, mala_step=cfg.mala_step, keep_samples=keep_store, label=cfg.name,
        )
        if oc.cooling is not None:
            _, _, store = run_sa_optimize(oc)
            counters = store.metadata.pop("counters")
        else:
            store, counters = run_omcmc(oc)
            counters = counters.as_dict()
        expected = expected_counters(oc).as_dict()
    if not isinstance(counters, dict):
        counters = counters.as_dict()

    if cfg.point == "final":
        points = store.last
    elif cfg.point == "best":
        points = store.best_x[None, :]
    else:
        points = None
    estimate = points.mean(axis=0) if points is not None else store.mean()
    sq = rel = None
    if truth is not None:
        P = points if points is not None else estimate[None, :]
        sq = float(np.mean((P - truth) ** 2))
        rel = float(np.mean([relative_error(p, truth) for p in P]))
    return RunResult(run, seed, estimate, sq, rel, counters, expected, store if keep_store else None)


@dataclass
class SeriesAggregate:
    series: str
    sigma: float
    runs: int = 0
    mse: RunningStat = field(default_factory=RunningStat)
    re: RunningStat = field(default_factory=RunningStat)
    est: list = field(default_factory=list)
    counters: dict | None = None
    expected: dict | None = None
    closed_form_match: bool = True

    def push(self, r: RunResult) -> None:
        self.runs += 1
        if r.sq_err is not None:
            self.mse.push(r.sq_err)
            self.re.push(r.rel_err)
        if not self.est:
            self.est = [RunningStat() for _ in r.estimate]
        for s, v in zip(self.est, r.estimate):
            s.push(float(v))
        if self.counters is None:
            self.counters, self.expected = r.counters, r.expected
        self.closed_form_match &= r.counters == r.expected

    def as_dict(self) -> dict:
        out = {
            "series": self.series,
            "sigma": self.sigma,
            "runs": self.runs,
            "estimate_mean": [s.mean for s in self.est],
            "estimate_stderr": [s.stderr for s in self.est],
            "counters_per_run": self.counters,
            "expected_counters_per_run": self.expected,
            "closed_form_match": self.closed_form_match,
        }
        if self.mse.n:
            out["mse"] = {"mean": self.mse.mean, "stderr": self.mse.stderr}
            out["re"] = {"mean": self.re.mean, "stderr": self.re.stderr}
        return out


def _series_plan(cfg: ExperimentConfig, target, sigma):
    """``(series name, scheme, T)`` for each series run at one grid point."""
    if cfg.mode != "benchmark":
        return [(cfg.scheme, cfg.scheme, None)]
    E_T = expected_counters(
        OMCMCConfig(target, cfg.schedule(), sigma=sigma, lam=_lam_value(cfg, sigma))
    ).target_evals
    T_ipc = cfg.baseline_T or max(E_T // cfg.N, 1)
    return [(f"omcmc-{cfg.scheme}", cfg.scheme, None), ("ipc", "ipc", T_ipc)]


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1, dump_samples: bool = False) -> dict:
    """Run every (series, sigma) cell and write the result files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = build_target(cfg.target, cfg.base_dir)
    truth = resolve_truth(cfg, target)
    dim = _final_target(target).dim
    aggregates = []
    first = True
    with open(out / "estimates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "sigma", "run", "seed"] + [f"est_{i + 1}" for i in range(dim)] + ["sq_err", "rel_err"])
        for sigma in cfg.sigmas:
            for series, scheme, T in _series_plan(cfg, target, sigma):
                agg = SeriesAggregate(series, sigma)

                def job(run, scheme=scheme, T=T, keep=first and dump_samples):
                    return run_once(cfg, target, truth, sigma, scheme, run, T, keep_store=keep and run == 0)

                with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
                    for r in pool.map(job, range(cfg.runs)):
                        agg.push(r)
                        w.writerow(
                            [series, repr(sigma), r.run, r.seed]
                            + [repr(float(v)) for v in r.estimate]
                            + ["" if r.sq_err is None else repr(r.sq_err), "" if r.rel_err is None else repr(r.rel_err)]
                        )
                        if r.store is not None:
                            r.store.write_csv(out / "samples.csv")
                first = False
                aggregates.append(agg)

    result = {
        "name": cfg.name,
        "mode": cfg.mode,
        "scheme": cfg.scheme,
        "seed": cfg.seed,
        "runs": cfg.runs,
        "truth": None if truth is None else [float(v) for v in truth],
        "metric": cfg.metric,
        "results": [a.as_dict() for a in aggregates],
    }
    (out / "aggregate.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    emit_plot_data(result["results"], out / "plot_data.csv", cfg.metric)
    return result


def emit_plot_data(results, path, metric: str = "mse") -> list[list]:
    """Long-format rows ``series, x, y, stderr`` (x = sigma); cells without a truth are skipped."""
    rows = []
    for r in results:
        if metric in r:
            rows.append([r["series"], r["sigma"], r[metric]["mean"], r[metric]["stderr"]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_HEADER)
        for s, x, y, e in rows:
            w.writerow([s, repr(float(x)), repr(float(y)), repr(float(e))])
    return rows


def read_plot_data(path) -> list[list]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != PLOT_HEADER:
            raise ConfigError(f"{path}: unexpected header")
        return [[s, float(x), float(y), float(e)] for s, x, y, e in reader]


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omcmc", description="Orthogonal parallel MCMC experiments.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, help_ in (
        ("sample", "estimate moments by sampling"),
        ("optimize", "search for the global mode (annealed chains)"),
        ("benchmark", "compare O-MCMC with independent chains at equal target evaluations"),
    ):
        p = sub.add_parser(mode, help=help_)
        p.add_argument("config", help="JSON config file or bundled preset name")
        p.add_argument("--seed", type=int, help="base seed (64-bit unsigned); overrides the config")
        p.add_argument("--runs", type=int, help="number of independent runs; overrides the config")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
        p.add_argument("--out", default="results", help="output directory (default: ./results)")
        p.add_argument("--dump-samples", action="store_true", help="write the first run's states to samples.csv")
    sub.add_parser("presets", help="list the bundled presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.mode == "presets":
        print("\n".join(preset_names()))
        return 0
    try:
        raw, root = load_config_source(args.config)
        raw = dict(raw, mode=args.mode)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.runs is not None:
            raw["runs"] = args.runs
        raw.setdefault("name", Path(args.config).stem)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = parse_config(raw, root)
        result = run_experiment(cfg, args.out, threads=args.threads, dump_samples=args.dump_samples)
    except (OMCMCError, json.JSONDecodeError) as exc:
        print(f"omcmc: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"omcmc: I/O error: {exc}", file=sys.stderr)
        return 1
    for r in result["results"]:
        line = f"{r['series']:>16s}  sigma={r['sigma']:<8g}"
        if "mse" in r:
            line += f"  MSE={r['mse']['mean']:.4g} ± {r['mse']['stderr']:.2g}  RE={r['re']['mean']:.4g}"
        line += "  counters ok" if r["closed_form_match"] else "  COUNTER MISMATCH"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
