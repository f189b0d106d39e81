"""Command-line entry point: ``dnalpha <command> [--config PATH] [--out PATH] [--key value ...]``.

Every configuration key is also a ``--key`` option that overrides the file.
Exit codes: 0 success, 2 instability detected in a simulate (or refine)
run, 1 error.  The sweep worker count comes from ``DNALPHA_WORKERS``.
"""

from __future__ import annotations

import argparse
import sys

from .config import KEYS, KINDS, ConfigError, parse_config
from .experiments import EXIT_ERROR, WORKERS_ENV, run_experiment, write_csv
from .params import ParameterError

HELP = {
    "eigs": "added-mass eigenvalues: continuous, grid and closed-form discrete",
    "bounds": "per-mode SC and LC stability bounds at the configured alpha",
    "jury": "random check of the Jury conditions against polynomial roots",
    "simulate": "time-march one scheme (modal or grid) and classify stability",
    "sweep": "simulate over one parameter axis",
    "richardson": "block-system Richardson iteration and DN equivalence check",
    "refine": "time-step refinement study against the monolithic scheme",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dnalpha",
        description="Relaxed Dirichlet-Neumann coupling schemes on the membrane/channel benchmark.",
        epilog=f"Sweep workers: set {WORKERS_ENV} (default: all cores).",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for kind in KINDS:
        p = sub.add_parser(kind, help=HELP[kind], description=HELP[kind])
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--out", metavar="PATH", help="CSV output (default: stdout)")
        group = p.add_argument_group("overrides", "any configuration key")
        for key, spec in KEYS.items():
            group.add_argument(f"--{key}", dest=f"key_{key}", metavar="VALUE",
                               help=f"{spec.help} (default {spec.default!r})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, f"key_{key}") for key in KEYS if getattr(args, f"key_{key}") is not None
    }
    try:
        params, time, cfg, spec = parse_config(args.config, args.command, overrides, args.out)
        result = run_experiment(spec, params, time, cfg)
        text = write_csv(result, args.out)
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out is None:
        sys.stdout.write(text)
    if result.summary:
        print(result.summary, file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
