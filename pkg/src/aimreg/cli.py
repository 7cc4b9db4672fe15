"""Command-line runner: ``aimreg CONFIG [--out DIR] [--sweep | --tune] ...``.

Exit codes: 0 success, 1 threshold failure, 2 integration failure, 3 config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .exceptions import ConfigError
from .experiment import (
    EXIT_CONFIG,
    EXIT_INTEGRATION,
    EXIT_OK,
    EXIT_THRESHOLD,
    auto_tune,
    run_experiment,
    run_sweep,
    upward_closed,
)

log = logging.getLogger("aimreg")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aimreg", description="Adaptive internal-model regulator experiments.")
    ap.add_argument("config", help="experiment file (INI sections, key = value)")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--lambda", dest="lam", type=float, help="override gains.lambda")
    ap.add_argument("--k", type=float, help="override gains.k")
    ap.add_argument("--h", type=float, help="override integrator.h")
    ap.add_argument("--horizon", type=float, help="override integrator.horizon")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--sweep", action="store_true", help="run the lambda/k grid of the [sweep] section")
    mode.add_argument("--tune", action="store_true", help="double k then lambda until a run passes")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config)
        cfg = cfg.override(lam=args.lam, k=args.k, h=args.h, horizon=args.horizon, out_dir=args.out)
    except ConfigError as err:
        for problem in err.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.out_dir)
    if args.sweep:
        result = run_sweep(cfg, out)
        closed = upward_closed(result.passing(), cfg.sweep_lambda, cfg.sweep_k)
        print(f"sweep: {len(result.rows)} runs, best (lambda, k) = {result.best}, upward closed = {closed}")
        return EXIT_OK if result.best is not None else EXIT_THRESHOLD

    if args.tune:
        lam, k, tried = auto_tune(cfg)
        print(f"tune: {len(tried)} runs, first passing (lambda, k) = {(lam, k) if lam else None}")
        if lam is None:
            return EXIT_THRESHOLD
        cfg = cfg.override(lam=lam, k=k)

    result = run_experiment(cfg, out)
    s = result.summary
    print(f"{s.status}: sup|e| over final window = {s.sup_e_window:.3g}, "
          f"|theta_tilde| ratio = {s.theta_tilde_ratio:.3g}, outputs in {out}")
    if s.exit_code not in (EXIT_OK, EXIT_THRESHOLD, EXIT_INTEGRATION):
        return EXIT_INTEGRATION
    return s.exit_code


if __name__ == "__main__":
    sys.exit(main())
