#!/usr/bin/env python3
"""Command-line entry point: convergence studies, curvature sweeps and linear solves."""

import argparse
import logging
import sys
from typing import List, Optional

from src.api.commands import EXIT_CONFIG_ERROR, build_run_config, run_command
from src.core.config import settings
from src.core.exceptions import ValidationError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvfem",
        description="Nonvariational finite element solver for the prescribed Gauss curvature equation.",
    )
    parser.add_argument("--log-level", default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        help=f"Logging level (default from NVFEM_LOG_LEVEL, currently {settings.LOG_LEVEL})")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Flat key=value experiment file")
    common.add_argument("--levels", type=int, default=None, help="Number of refinement levels")
    common.add_argument("--n", type=int, default=None, help="Squares per side of the base mesh")
    common.add_argument("--half-width", type=float, default=None, help="Domain is [-X, X]^2")
    common.add_argument("--perturb", type=float, default=None, help="Interior vertex perturbation in [0, 0.3)")
    common.add_argument("--seed", type=int, default=None, help="Random seed of the mesh perturbation")
    common.add_argument("--out", default=None, help="Output directory")

    newton = argparse.ArgumentParser(add_help=False)
    newton.add_argument("--max-iter", type=int, default=None, help="Maximum Newton iterations")
    newton.add_argument("--tol", type=float, default=None, help="Newton stopping tolerance")
    newton.add_argument("--damping", type=float, default=None, help="Initial Newton step length in (0, 1]")
    newton.add_argument("--convexity-tol", type=float, default=None,
                        help="Allowed negative slack of the Hessian eigenvalues")
    newton.add_argument("--no-line-search", dest="line_search", action="store_const", const=False, default=None,
                        help="Take plain (damped) Newton steps without backtracking")

    sub = parser.add_subparsers(dest="command", required=True)

    converge = sub.add_parser("converge", parents=[common, newton],
                              help="Convergence study of a manufactured problem")
    converge.add_argument("--problem", default=None, help="quartic, exponential or sphere")

    sweep = sub.add_parser("sweep", parents=[common, newton], help="Constant curvature sweep with g = 0")
    sweep.add_argument("--k", default=None, help="Comma-separated curvature values, e.g. 0.01,0.1,2")
    sweep.add_argument("--no-continuation", dest="continuation", action="store_const", const=False, default=None,
                       help="Start every K from the initial guess instead of the previous solution")

    linear = sub.add_parser("solve-linear", parents=[common], help="Linear nonvariational solves")
    linear.add_argument("--coefficient", default=None, help="identity, constant-spd or manufactured")

    sub.add_parser("mesh-info", parents=[common], help="Mesh statistics and mesh files")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=args.log_level or settings.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logger = logging.getLogger(__name__)

    try:
        settings.validate_settings()
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config", "log_level")
    }
    try:
        cfg = build_run_config(args.command, overrides, args.config)
    except (ValidationError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    logger.info(f"Running '{cfg.command}' with output to {cfg.out_dir}")
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
