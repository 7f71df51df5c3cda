#!/usr/bin/env python3
"""
Command-line launcher for the chi-square tail toolkit
JSON (or CSV for compare) goes to stdout, logs to stderr
"""

import argparse
import sys
from typing import List, Optional

from config import VERSION, RunConfig, config
from errors import InputError, exit_code_for
from logger import ProcessingLogger
from processor import ExperimentRunner
from utils import validate_interval, validate_seed, validate_u_list, validate_weights


class ToolkitArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(exit_code_for(InputError(message)), f"{self.prog}: error: {message}\n")


def print_header(logger: ProcessingLogger):
    """Log application header."""
    logger.log("=" * 60)
    logger.log(f"     Chi-square Tail Toolkit {VERSION}")
    logger.log("=" * 60)


def _add_model_options(parser: argparse.ArgumentParser, trend: bool = True):
    parser.add_argument("--model", default="custom",
                        help="bridge, bm, bessel:n, fbm:H, ou:lambda, mixed:H or custom")
    parser.add_argument("--b", help="weights, e.g. 1,1,0.5")
    parser.add_argument("--c", help="local variance C(t) for custom models, e.g. '1/(2*t*(1-t))'")
    parser.add_argument("--alpha", type=float, help="kernel index for custom models")
    parser.add_argument("--params", help="expression parameters, e.g. 'a=1,b=2'")
    parser.add_argument("--kernel-scale", type=float, default=1.0)
    parser.add_argument("--beta", type=float, default=0.0, help="log-power of the kernel (custom models)")
    parser.add_argument("--interval", help="e.g. '0,1', '[0.001,0.999]' or '(0,1]'")
    if trend:
        parser.add_argument("--trend", default="zero", help="zero, const:c, gnu:nu, grho:rho, bessel, expr:...")


def _add_run_options(parser: argparse.ArgumentParser, randomized: bool = False):
    if randomized:
        parser.add_argument("--seed", type=int, help="required for randomized commands")
        parser.add_argument("--paths", type=int, default=100_000)
        parser.add_argument("--threads", type=int, help=f"worker threads (default {config.threads})")
    parser.add_argument("--output-dir", help=f"artifact directory (default {config.output_dir})")


def build_parser() -> argparse.ArgumentParser:
    parser = ToolkitArgumentParser(prog="run.py", description="Tail asymptotics of chi-square processes with trend")
    parser.add_argument("--quiet", action="store_true", help="keep logs off stderr")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approx", help="tail approximation and its decomposition")
    _add_model_options(p)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--pickands", type=float, help="override the Pickands constant")
    _add_run_options(p)

    p = sub.add_parser("admissible", help="admissibility report")
    _add_model_options(p)
    p.add_argument("--eta", type=float)
    _add_run_options(p)

    p = sub.add_parser("mc", help="Monte Carlo tail estimate")
    _add_model_options(p)
    p.add_argument("--u", type=float)
    p.add_argument("--truncation", type=float, default=1e-3)
    p.add_argument("--mesh-fraction", type=float)
    p.add_argument("--experiment", choices=["bessel-factor"])
    p.add_argument("--n", type=int, default=1, help="Bessel dimension for --experiment bessel-factor")
    p.add_argument("--p", type=float, help="target probability for --experiment bessel-factor")
    p.add_argument("--dump", help="write one block of simulated paths (.bin or .csv)")
    _add_run_options(p, randomized=True)

    p = sub.add_parser("pickands", help="Monte Carlo Pickands constant")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--mesh", type=float, default=0.01)
    p.add_argument("--method", choices=["ratio", "truncated"], default="ratio")
    p.add_argument("--save", help="Pickands table (JSON) to update")
    _add_run_options(p, randomized=True)

    p = sub.add_parser("critical", help="level u at which the approximation equals p")
    _add_model_options(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--u-min", type=float)
    p.add_argument("--pickands", type=float)
    _add_run_options(p)

    p = sub.add_parser("gof", help="goodness-of-fit statistic and asymptotic p-value")
    p.add_argument("--input", required=True, help="sample file, or - for stdin")
    p.add_argument("--column", type=int, help="CSV column (0-based)")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--method", choices=["interval", "grid"], default="interval")
    _add_run_options(p)

    p = sub.add_parser("compare", help="asymptotic vs Monte Carlo table (CSV)")
    _add_model_options(p)
    p.add_argument("--u", required=True, help="increasing levels, e.g. 6,8,10,12")
    p.add_argument("--truncation", type=float, default=1e-3)
    p.add_argument("--mesh-fraction", type=float)
    p.add_argument("--pickands", type=float)
    _add_run_options(p, randomized=True)

    p = sub.add_parser("slepian", help="empirical check of the 2^n Slepian-type bound")
    _add_model_options(p)
    p.add_argument("--model-y", required=True)
    p.add_argument("--u", type=float, required=True)
    _add_run_options(p, randomized=True)

    p = sub.add_parser("replay", help="re-run a manifest")
    p.add_argument("manifest")
    return parser


def to_run_config(args: argparse.Namespace) -> RunConfig:
    """Validate parsed arguments into a RunConfig; raises InputError."""
    values = {k: v for k, v in vars(args).items() if v is not None and k not in ("quiet", "manifest")}
    randomized = args.command in ("mc", "pickands", "compare", "slepian")

    ok, error, seed = validate_seed(values.get("seed"), randomized)
    if not ok:
        raise InputError(error)

    if "b" in values:
        ok, error, weights = validate_weights(values["b"])
        if not ok:
            raise InputError(error)
        values["b"] = weights

    if "interval" in values:
        ok, error, _ = validate_interval(values["interval"])
        if not ok:
            raise InputError(error)

    if args.command == "compare":
        ok, error, u_list = validate_u_list(values.pop("u"))
        if not ok:
            raise InputError(error)
        values["u_list"] = u_list

    return RunConfig(**values)


def main(argv: Optional[List[str]] = None) -> int:
    """Main launcher logic; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logger = ProcessingLogger(quiet=True if args.quiet else None)
    print_header(logger)
    runner = ExperimentRunner(logger)

    try:
        if args.command == "replay":
            result = runner.replay(args.manifest)
        else:
            result = runner.run(to_run_config(args))
    except (InputError, ValueError) as e:
        logger.log_error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)

    print(result.content)
    if result.status == "Error":
        print(f"error: {result.payload.get('message', result.status)}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
