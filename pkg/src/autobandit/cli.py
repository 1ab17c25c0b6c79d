"""Command line entry point.

Exit codes: 0 success, 2 config error, 3 data error, 4 IO error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import BanditError, ConfigError
from .runner import aggregate_runs, compare, emit_results, load_config, run_experiment
from .synthetic import generate_spec, grid_heatmap, load_spec, save_spec, write_heatmap_csv


def _dims(text: str) -> tuple[int, int]:
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'i,j', got {text!r}") from None
    return i, j


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autobandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one policy as configured")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_path")
    p.add_argument("--workers", type=int, help="override worker count")

    p = sub.add_parser("compare", help="run meta_learner, random and online_baseline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_path")
    p.add_argument("--workers", type=int, help="override worker count")

    p = sub.add_parser("gen-env", help="write a random synthetic environment as JSON")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--factors", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=_floats, default=[0.1, 0.3], help="lo,hi factor width range")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--base-prob", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("heatmap", help="mean reward probability over two context dims as CSV")
    p.add_argument("--env", required=True)
    p.add_argument("--dims", type=_dims, default=(0, 1))
    p.add_argument("--res", type=int, default=50)
    p.add_argument("--fixed", type=_floats, help="values for the remaining dims (default 0.5)")
    p.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> None:
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replace(output_path=args.out)
    results = run_experiment(cfg, workers=args.workers)
    out = emit_results(aggregate_runs(results), results, cfg.output_path, cfg)
    print(f"wrote {out}")


def _cmd_compare(args) -> None:
    cfg = load_config(args.config)
    out = args.out or cfg.output_path
    compare(cfg, out, workers=args.workers)
    print(f"wrote {out}")


def _cmd_gen_env(args) -> None:
    if len(args.sigma) != 2:
        raise ConfigError("--sigma needs exactly two values lo,hi")
    spec = generate_spec(args.d, args.k, args.factors, tuple(args.sigma), args.noise_std, args.seed,
                         base_prob=args.base_prob)
    save_spec(spec, args.out)
    print(f"wrote {args.out}")


def _cmd_heatmap(args) -> None:
    spec = load_spec(args.env)
    write_heatmap_csv(grid_heatmap(spec, args.dims, args.res, args.fixed), args.out)
    print(f"wrote {args.out}")


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "gen-env": _cmd_gen_env, "heatmap": _cmd_heatmap}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except BanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
