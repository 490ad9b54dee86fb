"""Command line interface: ``retecs run|compare|sweep|generate``.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .evaluation import BLOCK_COLUMNS
from .experiment import (
    METHODS,
    ExperimentConfig,
    compare,
    load_config,
    run_experiment,
    sweep_history_length,
    sweep_schedule_ratio,
    write_blocks,
    write_evaluations,
    write_sweep,
)
from .ingestion import DataError, SyntheticSpec, generate_synthetic, load_csv, write_csv
from .rewards import REWARD_FUNCTIONS

log = logging.getLogger("retecs")


def _ratio(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"ratio must be in (0, 1], got {text}")
    return value


def _method_spec(text):
    method, _, reward = text.partition(":")
    if method not in METHODS:
        raise argparse.ArgumentTypeError(f"unknown method {method!r}")
    if reward and reward not in REWARD_FUNCTIONS:
        raise argparse.ArgumentTypeError(f"unknown reward {reward!r}")
    return method, reward or None


def _synthetic_args(p):
    g = p.add_argument_group("synthetic data (used when --data is not given)")
    g.add_argument("--tests", type=int, default=100)
    g.add_argument("--cycles", type=int, default=300)
    g.add_argument("--failure-rate", type=float, default=0.12)
    g.add_argument("--correlation", type=float, default=0.8)
    g.add_argument("--churn", type=float, default=0.0)
    g.add_argument("--min-duration", type=float, default=1.0)
    g.add_argument("--max-duration", type=float, default=60.0)
    g.add_argument("--data-seed", type=int, default=None,
                   help="seed of the synthetic dataset (defaults to --seed)")


def _experiment_args(p, method=True):
    p.add_argument("--data", help="CI history CSV (cycle,test_id,duration,verdict)")
    p.add_argument("--flip-verdicts", action="store_true",
                   help="input encodes failures as 1 and passes as 0")
    p.add_argument("--config", help="flat key = value file of experiment settings")
    if method:
        p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--reward", choices=tuple(REWARD_FUNCTIONS), default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--history", type=int, default=None)
    p.add_argument("--ratio", type=_ratio, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    _synthetic_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retecs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replay a dataset and write per-cycle NAPFD")
    _experiment_args(p)

    p = sub.add_parser("compare", help="30-cycle block differences between two methods")
    _experiment_args(p, method=False)
    p.add_argument("--a", type=_method_spec, required=True, metavar="METHOD[:REWARD]")
    p.add_argument("--b", type=_method_spec, required=True, metavar="METHOD[:REWARD]")

    p = sub.add_parser("sweep", help="mean NAPFD over a range of one parameter")
    _experiment_args(p)
    p.add_argument("--param", choices=("history", "ratio"), required=True)
    p.add_argument("--values", required=True, help="comma separated values")

    p = sub.add_parser("generate", help="write a seeded synthetic dataset CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _synthetic_args(p)
    return parser


def _load_dataset(args):
    if args.data:
        from .ingestion import FormatOptions

        return load_csv(args.data, FormatOptions(passed_value=0 if args.flip_verdicts else 1))
    seed = args.data_seed if args.data_seed is not None else (args.seed or 0)
    return generate_synthetic(_synthetic_spec(args, seed))


def _synthetic_spec(args, seed):
    return SyntheticSpec(
        n_tests=args.tests,
        n_cycles=args.cycles,
        failure_rate=args.failure_rate,
        temporal_correlation=args.correlation,
        churn_rate=args.churn,
        duration_range=(args.min_duration, args.max_duration),
        seed=seed,
    )


def _config(args, **extra) -> ExperimentConfig:
    overrides = dict(
        method=getattr(args, "method", None),
        reward=args.reward,
        repetitions=args.reps,
        base_seed=args.seed,
        history_length=args.history,
        schedule_ratio=args.ratio,
    )
    overrides.update(extra)
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_run(args) -> int:
    config = _config(args)
    result = run_experiment(_load_dataset(args), config, args.jobs)
    write_evaluations(args.out, [result])
    print(f"{config.label} mean NAPFD {result.overall_mean:.4f} "
          f"({config.repetitions} repetitions, {len(result.summary.cycle_ids)} cycles) -> {args.out}")
    return 0


def cmd_compare(args) -> int:
    base = _config(args)
    (method_a, reward_a), (method_b, reward_b) = args.a, args.b
    config_a = replace(base, method=method_a, reward=reward_a or base.reward)
    config_b = replace(base, method=method_b, reward=reward_b or base.reward)
    blocks = compare(_load_dataset(args), config_a, config_b, args.jobs)
    write_blocks(args.out, blocks)
    print(",".join(BLOCK_COLUMNS))
    for b in blocks:
        print(f"{b.block_start},{b.block_end},{b.mean_napfd_a:.4f},{b.mean_napfd_b:.4f},{b.difference:+.4f}")
    return 0


def cmd_sweep(args) -> int:
    config = _config(args)
    dataset = _load_dataset(args)
    try:
        if args.param == "history":
            values = [int(v) for v in args.values.split(",")]
            rows = sweep_history_length(dataset, config, values, args.jobs)
        else:
            values = [_ratio(v) for v in args.values.split(",")]
            rows = sweep_schedule_ratio(dataset, config, values, args.jobs)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise _UsageError(f"bad --values: {exc}") from None
    write_sweep(args.out, args.param, rows)
    for value, mean in rows:
        print(f"{args.param}={value} mean NAPFD {mean:.4f}")
    return 0


def cmd_generate(args) -> int:
    dataset = generate_synthetic(_synthetic_spec(args, args.seed))
    write_csv(dataset, args.out)
    print(f"wrote {dataset.n_verdicts} verdicts over {len(dataset)} cycles -> {args.out}")
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "generate": cmd_generate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad arguments
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"retecs: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, OSError) as exc:
        print(f"retecs: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
