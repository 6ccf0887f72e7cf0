"""Command line front end: ``python -m tvflow <subcommand> [flags]``.

Exit status is 0 on success, 1 when some inner solve stopped at its
iteration cap, and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .experiments import ConfigError, run_experiment
from .io import load_config

SUBCOMMANDS = {
    "flow": ("ball", ("ball", "three_balls", "annulus", "inner_iters")),
    "rof": ("rof_demo", ("rof_demo",)),
    "compare": ("compare_reg", ("compare_reg",)),
    "convergence": ("ball", ("ball", "three_balls", "annulus", "rof")),
    "inner-iters": ("inner_iters", ("inner_iters",)),
}

FLAG_KEYS = ("h", "dt", "tau", "sigma", "c_stop_v", "c_stop_r", "bc", "store_every",
             "warm_start", "T", "levels", "alpha", "seed", "max_inner_iters", "cell_kind")


def parse_number(text) -> float:
    """Read ``0.25``, ``2^-5`` or ``6*2^-5``."""
    value = 1.0
    try:
        for factor in str(text).replace(" ", "").split("*"):
            if "^" in factor:
                base, exp = factor.split("^", 1)
                value *= float(base) ** float(exp)
            else:
                value *= float(factor)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (default, choices) in SUBCOMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--preset", choices=choices, default=None,
                       help=f"experiment preset (default {default})")
        p.add_argument("--config", help="key=value file with [sections]; flags win")
        p.add_argument("--out-dir", default=None, help="output directory (default ./out/<preset>)")
        p.add_argument("--h", type=parse_number, help="grid spacing, e.g. 2^-5")
        p.add_argument("--dt", type=parse_number)
        p.add_argument("--tau", type=parse_number)
        p.add_argument("--sigma", type=parse_number)
        p.add_argument("--c-stop-v", dest="c_stop_v", type=parse_number)
        p.add_argument("--c-stop-r", dest="c_stop_r", type=parse_number)
        p.add_argument("--bc", choices=("neumann", "dirichlet"))
        p.add_argument("--store-every", dest="store_every", type=int)
        p.add_argument("--warm-start", dest="warm_start", choices=("on", "off"))
        p.add_argument("--T", type=parse_number, help="final time")
        p.add_argument("--levels", type=int, help="mesh levels of a convergence study")
        p.add_argument("--alpha", type=parse_number, help="ROF fidelity weight")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-inner-iters", dest="max_inner_iters", type=int)
        p.add_argument("--cell-kind", dest="cell_kind", choices=("quad", "triangle", "interval"))
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _merge(args, file_values: dict) -> dict:
    merged = {}
    for key, raw in file_values.items():
        if key in ("preset", "out_dir", "config"):
            continue
        if key not in FLAG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in ("store_every", "levels", "seed", "max_inner_iters"):
            merged[key] = int(raw)
        elif key in ("bc", "warm_start", "cell_kind"):
            merged[key] = raw.strip()
        else:
            merged[key] = parse_number(raw)
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = load_config(args.config) if args.config else {}
        preset = args.preset or file_values.get("preset") or SUBCOMMANDS[args.command][0]
        if preset not in SUBCOMMANDS[args.command][1]:
            raise ConfigError(f"preset {preset!r} is not available for {args.command!r}")
        overrides = _merge(args, file_values)
        name = f"convergence:{preset}" if args.command == "convergence" else preset
        out_dir = args.out_dir or file_values.get("out_dir") or f"out/{name.replace(':', '_')}"
        result = run_experiment(name, overrides, out_dir)
    except (ConfigError, argparse.ArgumentTypeError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"experiment": result.name, "out_dir": str(result.out_dir),
                      "converged": result.converged, **result.summary},
                     indent=2, default=str))
    return 0 if result.converged else 1


if __name__ == "__main__":
    sys.exit(main())
