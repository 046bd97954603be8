"""Benchmark harness: generate instances, run a solver against a matvec
budget, measure rounded gaps against the exact oracle, and emit per-trial CSV
traces plus a JSON summary of mean curves.

Summary JSON contains no wall-clock fields, so identical config + master seed
reproduces it bit for bit. Curves from different trials are aligned on the
matvec axis by linear interpolation onto a shared grid before averaging.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import greenkhorn, sinkhorn, theoretical_eta
from .core import OTInstance, load_instance
from .extragrad import derive_params, fine_tuned_params, manual_params, solve
from .instances import gen_point_clouds, gen_synthetic, load_mnist_pair
from .oracle import exact_ot
from .trace import write_trace_csv

GRID_POINTS = 201


@dataclass(frozen=True)
class GeneratorSpec:
    """What problem to draw each trial. kind 'synthetic' uses size as the
    image side m, 'pointclouds' as the cloud size n; 'mnist' ignores the
    per-trial seed (the file pins the instance)."""

    kind: str
    size: int
    squared: bool = False
    images_path: str | None = None
    index_a: int = 0
    index_b: int = 1

    def __post_init__(self):
        if self.kind not in ("synthetic", "pointclouds", "mnist"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "mnist" and not self.images_path:
            raise ValueError("mnist generator needs images_path")
        if self.size < 1:
            raise ValueError(f"size must be >= 1, got {self.size}")

    def make(self, seed) -> OTInstance:
        if self.kind == "synthetic":
            return gen_synthetic(self.size, seed)
        if self.kind == "pointclouds":
            return gen_point_clouds(self.size, seed, squared=self.squared)
        return load_mnist_pair(self.images_path, self.index_a, self.index_b,
                               self.size)


@dataclass(frozen=True)
class AlgorithmSpec:
    """name in {'extragrad', 'sinkhorn', 'greenkhorn'}; params are passed to
    the matching solver. 'eta_reg' may be the string 'theoretical' to request
    4*log(n)/epsilon. label overrides the name in summaries (useful when
    comparing two parameterizations of one method)."""

    name: str
    params: dict = dataclasses.field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        if self.name not in ("extragrad", "sinkhorn", "greenkhorn"):
            raise ValueError(f"unknown algorithm {self.name!r}")

    @property
    def display_name(self) -> str:
        return self.label if self.label else self.name


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorSpec
    algorithm: AlgorithmSpec
    budget: float                 # matvec-equivalents
    epsilon: float = 0.1
    trials: int = 1
    master_seed: int = 0
    measure_every: int | None = None
    out: str = "bench_out"
    oracle_enabled: bool = True
    oracle_n_limit: int = 64
    wall_cap_s: float | None = None   # optional abort; breaks determinism

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError(f"budget must be > 0, got {self.budget}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not (0 < self.epsilon):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["generator"] = dataclasses.asdict(self.generator)
        d["algorithm"] = dataclasses.asdict(self.algorithm)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ValueError(f"config must be a JSON object, got {type(d).__name__}")
    try:
        gen = GeneratorSpec(**d["generator"])
        algo = AlgorithmSpec(**d["algorithm"])
        rest = {k: v for k, v in d.items() if k not in ("generator", "algorithm")}
        return RunConfig(generator=gen, algorithm=algo, **rest)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad config: {exc}") from exc


def _resolve_eta_reg(value, n, epsilon) -> float:
    if value == "theoretical":
        return theoretical_eta(n, epsilon)
    return float(value)


def run_algorithm(instance, algo: AlgorithmSpec, epsilon, budget,
                  measure_every, reference_value):
    """Dispatch one solve under a matvec budget. Returns (plan, trace)."""
    p = dict(algo.params)
    if algo.name == "extragrad":
        mode = p.pop("mode", "fine_tuned")
        t_max = max(1, math.ceil(budget / 2.0))   # 2 matvecs per iteration
        if mode == "theoretical":
            sp = derive_params(instance.n, epsilon, instance.w_inf, instance.c)
            sp = dataclasses.replace(sp, t_max=t_max)
        elif mode == "fine_tuned":
            sp = fine_tuned_params(instance.c, t_max)
        elif mode == "manual":
            sp = manual_params(instance.c, t_max=t_max, **p)
            p = {}
        else:
            raise ValueError(f"unknown extragrad mode {mode!r}")
        if p:
            raise ValueError(f"unused extragrad params: {sorted(p)}")
        feasible, _, trace = solve(instance, sp, reference_value=reference_value,
                                   measure_every=measure_every)
        return feasible, trace
    if algo.name == "sinkhorn":
        eta = _resolve_eta_reg(p.pop("eta_reg"), instance.n, epsilon)
        omega = p.pop("omega", 1.0)
        if p:
            raise ValueError(f"unused sinkhorn params: {sorted(p)}")
        raw, trace = sinkhorn(instance, eta, budget, omega,
                              reference_value=reference_value,
                              measure_every=measure_every)
        return raw, trace
    eta = _resolve_eta_reg(p.pop("eta_reg"), instance.n, epsilon)
    batch = p.pop("batch_size", 1)
    if p:
        raise ValueError(f"unused greenkhorn params: {sorted(p)}")
    raw, trace = greenkhorn(instance, eta, budget, batch,
                            reference_value=reference_value,
                            measure_every=measure_every)
    return raw, trace


def _trial_seed(master_seed, trials, k):
    return np.random.SeedSequence(master_seed).spawn(trials)[k]


def run_trial(config: RunConfig, k: int):
    """One trial: generate, oracle, solve, return trial-stamped records."""
    seed = _trial_seed(config.master_seed, config.trials, k)
    instance = config.generator.make(seed)
    reference = None
    if config.oracle_enabled:
        if instance.n > config.oracle_n_limit:
            raise ValueError(
                f"oracle requested but n={instance.n} exceeds n_limit="
                f"{config.oracle_n_limit}; disable the oracle or raise the limit")
        reference = exact_ot(instance, n_limit=config.oracle_n_limit).value
    _, trace = run_algorithm(instance, config.algorithm, config.epsilon,
                             config.budget, config.measure_every, reference)
    return [dataclasses.replace(rec, trial=k) for rec in trace]


def _curves_from_trace(records, grid):
    x = np.array([rec.matvec_equiv for rec in records])
    gap = None
    if all(rec.gap is not None for rec in records):
        gap = np.interp(grid, x, np.array([rec.gap for rec in records]))
    cost = np.interp(grid, x, np.array([rec.rounded_cost for rec in records]))
    return gap, cost


def _mean_std(stack):
    # fsum is exact, so the aggregate cannot depend on trial order
    k = stack.shape[0]
    mean = np.array([math.fsum(col) for col in stack.T]) / k
    var = np.array([math.fsum((col - m) ** 2) for col, m in zip(stack.T, mean)]) / k
    return mean.tolist(), np.sqrt(var).tolist()


def _algorithm_summary(name, traces, budget):
    grid = np.linspace(0.0, float(budget), GRID_POINTS)
    curves = [_curves_from_trace(t, grid) for t in traces]
    entry = {"name": name, "grid": grid.tolist()}
    gaps = [g for g, _ in curves]
    if all(g is not None for g in gaps):
        entry["mean_gap"], entry["std_gap"] = _mean_std(np.stack(gaps))
    else:
        entry["mean_gap"] = None
        entry["std_gap"] = None
    entry["mean_cost"], entry["std_cost"] = _mean_std(np.stack([c for _, c in curves]))
    return entry


def _worker_count(trials) -> int:
    cpus = os.cpu_count() or 1
    return max(1, min(trials, cpus))


def _run_trials(config: RunConfig):
    workers = _worker_count(config.trials)
    if workers == 1:
        return [run_trial(config, k) for k in range(config.trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_pool_entry, [(config.to_dict(), k)
                                           for k in range(config.trials)]))


def _pool_entry(arg):
    config_dict, k = arg
    return run_trial(config_from_dict(config_dict), k)


def run(config: RunConfig) -> dict:
    """Execute all trials, write out/trial_{k}.csv per trial and out/summary.json,
    and return the summary dict."""
    os.makedirs(config.out, exist_ok=True)
    all_traces = _run_trials(config)
    for k, records in enumerate(all_traces):
        write_trace_csv(records, os.path.join(config.out, f"trial_{k}.csv"))
    summary = {
        "config_hash": config.config_hash(),
        "per_algorithm": [_algorithm_summary(config.algorithm.display_name,
                                             all_traces, config.budget)],
    }
    _write_summary(summary, os.path.join(config.out, "summary.json"))
    return summary


def compare(configs: list) -> dict:
    """Run several configs over one generator and merge their mean curves.
    Every config must share the generator spec; outputs nest under each
    config's own out directory, with the merged summary returned."""
    if not configs:
        raise ValueError("compare needs at least one config")
    gen0 = configs[0].generator
    for cfg in configs[1:]:
        if cfg.generator != gen0:
            raise ValueError("compare requires a shared generator spec, got "
                             f"{cfg.generator} vs {gen0}")
    names = [cfg.algorithm.display_name for cfg in configs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate algorithm labels in compare: {names}; "
                         "set distinct 'label' fields")
    entries = []
    hashes = []
    for cfg in configs:
        summary = run(cfg)
        hashes.append(summary["config_hash"])
        entries.extend(summary["per_algorithm"])
    return {
        "config_hash": hashlib.sha256(json.dumps(hashes).encode()).hexdigest(),
        "per_algorithm": entries,
    }


def _write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
