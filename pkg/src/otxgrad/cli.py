"""Command-line entry point.

Subcommands: gen (write an instance JSON), solve (one solve, trace CSV),
bench (multi-trial benchmark), compare (several algorithms on one generator).
Exit codes: 0 success, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import (GeneratorSpec, RunConfig, compare, config_from_dict, run,
                    run_algorithm)
from .core import NumericFailure, save_instance
from .oracle import exact_ot
from .trace import write_trace_csv


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otxgrad",
                                     description="optimal transport benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance and write it as JSON")
    gen.add_argument("--kind", required=True,
                     choices=["synthetic", "pointclouds", "mnist"])
    gen.add_argument("--size", type=int, required=True,
                     help="image side m, or cloud size n")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--squared", action="store_true",
                     help="squared Euclidean cost (pointclouds)")
    gen.add_argument("--images-path", help="IDX file (mnist)")
    gen.add_argument("--index-a", type=int, default=0)
    gen.add_argument("--index-b", type=int, default=1)
    gen.add_argument("--out", required=True)

    solve_p = sub.add_parser("solve", help="run one solve from a JSON config")
    solve_p.add_argument("--config", required=True)
    solve_p.add_argument("--seed", type=int, help="override master_seed")
    solve_p.add_argument("--out", help="trace CSV path (overrides config out)")

    bench_p = sub.add_parser("bench", help="multi-trial benchmark from a JSON config")
    bench_p.add_argument("--config", required=True)
    bench_p.add_argument("--seed", type=int, help="override master_seed")
    bench_p.add_argument("--out", help="output directory (overrides config out)")

    cmp_p = sub.add_parser("compare", help="run several configs on one generator")
    cmp_p.add_argument("--config", required=True,
                       help="JSON file holding a list of run configs")
    cmp_p.add_argument("--seed", type=int, help="override every master_seed")
    cmp_p.add_argument("--out", help="merged summary path")

    return parser


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc


def _config_with_overrides(d: dict, args) -> RunConfig:
    if args.seed is not None:
        d = {**d, "master_seed": args.seed}
    if getattr(args, "out", None):
        d = {**d, "out": args.out}
    return config_from_dict(d)


def _cmd_gen(args) -> int:
    spec = GeneratorSpec(kind=args.kind, size=args.size, squared=args.squared,
                         images_path=args.images_path, index_a=args.index_a,
                         index_b=args.index_b)
    instance = spec.make(args.seed)
    save_instance(instance, args.out)
    print(f"wrote n={instance.n} instance to {args.out}")
    return 0


def _cmd_solve(args) -> int:
    config = _config_with_overrides(_load_json(args.config), args)
    seed = config.master_seed
    instance = config.generator.make(seed)
    reference = None
    if config.oracle_enabled:
        if instance.n > config.oracle_n_limit:
            raise ValueError(f"oracle requested but n={instance.n} exceeds "
                             f"n_limit={config.oracle_n_limit}")
        reference = exact_ot(instance, n_limit=config.oracle_n_limit).value
    _, trace = run_algorithm(instance, config.algorithm, config.epsilon,
                             config.budget, config.measure_every, reference)
    out = args.out if args.out else f"{config.out}.csv"
    write_trace_csv(trace, out)
    last = trace[-1]
    line = f"rounded_cost={last.rounded_cost!r}"
    if last.gap is not None:
        line += f" gap={last.gap!r}"
    print(f"{line} trace={out}")
    return 0


def _cmd_bench(args) -> int:
    config = _config_with_overrides(_load_json(args.config), args)
    summary = run(config)
    print(f"wrote {config.trials} traces and summary.json to {config.out} "
          f"(config_hash={summary['config_hash'][:12]})")
    return 0


def _cmd_compare(args) -> int:
    raw = _load_json(args.config)
    if isinstance(raw, dict):
        raw = raw.get("configs", raw)
    if not isinstance(raw, list):
        raise ValueError("compare config must be a JSON list of run configs")
    configs = []
    for d in raw:
        if args.seed is not None:
            d = {**d, "master_seed": args.seed}
        configs.append(config_from_dict(d))
    merged = compare(configs)
    out = args.out if args.out else "compare_summary.json"
    with open(out, "w") as fh:
        json.dump(merged, fh, sort_keys=True, indent=1)
        fh.write("\n")
    names = [entry["name"] for entry in merged["per_algorithm"]]
    print(f"wrote merged summary for {names} to {out}")
    return 0


_COMMANDS = {"gen": _cmd_gen, "solve": _cmd_solve, "bench": _cmd_bench,
             "compare": _cmd_compare}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IndexError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
