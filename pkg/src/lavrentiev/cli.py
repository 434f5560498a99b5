"""Command-line interface.

Subcommands::

    lavrentiev simulate      --config cfg.json --f f.csv --f-delta fdelta.csv [--truth u.csv]
    lavrentiev solve         --data f.csv --kernel SPEC --alpha A --out u.csv --certificate cert.json
    lavrentiev check-kernel  --kernel SPEC --T T [--N 64] [--n 256] [--seed 0] --out report.json
    lavrentiev rates         --config cfg.json --out table.csv
    lavrentiev estimate-rate --table table.csv [--out fit.json]

Exit status is 0 on success, 1 for usage errors (bad arguments, unreadable or
malformed input) and 2 when a solver or a numerical procedure fails.
"""

import argparse
import json
import logging
import math
import sys

import numpy as np

from .errors import LavrentievError, NumericFailure, SolverFailure
from .grid import lp_norm, read_signal_csv, write_signal_csv
from .harness import (ExperimentConfig, RateTable, add_noise, estimate_rate,
                      run_rate_experiment, simulate)
from .monotonicity import check_kernel
from .oracle import SplitConfig, extragradient_solve
from .tv import check_optimality, solve_tv_lavrentiev
from .volterra import discretize, parse_kernel

log = logging.getLogger("lavrentiev")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(obj, path=None):
    """Deterministic JSON: sorted keys, shortest round-trip floats, non-finite as null."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def certificate_tol(alpha, f):
    return 1e-8 * max(alpha, lp_norm(f, math.inf) * f.grid.T)


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args):
    cfg = ExperimentConfig.from_json(args.config)
    if not 0 <= args.delta_index < len(cfg.deltas):
        raise UsageError(f"--delta-index must lie in [0, {len(cfg.deltas)})")
    A, u_true, f = simulate(cfg)
    delta = cfg.deltas[args.delta_index]
    if cfg.relative_noise:
        delta *= lp_norm(f, 2)
    f_delta = add_noise(f, delta, seed=(cfg.master_seed, args.delta_index, args.trial))
    write_signal_csv(f, args.f)
    write_signal_csv(f_delta, args.f_delta)
    if args.truth:
        write_signal_csv(u_true, args.truth)
    return EXIT_OK


def cmd_solve(args):
    f = read_signal_csv(args.data)
    A = discretize(parse_kernel(args.kernel), f.grid)
    status = EXIT_OK
    trace = None
    if args.solver == "dp":
        u, trace = solve_tv_lavrentiev(A, f, args.alpha)
    else:
        cfg = SplitConfig.default(A, tol=args.tol, max_iter=args.max_iter, tau=args.tau)
        result = extragradient_solve(A, f, args.alpha, cfg)
        u = result.u
        trace = {"iterations": result.iterations, "residual": result.residual,
                 "converged": result.converged, "tau": cfg.tau, "op_norm": cfg.op_norm}
        if not result.converged:
            log.error("oracle stopped after %d iterations (residual %.3e)",
                      result.iterations, result.residual)
            status = EXIT_FAILURE
    cert = check_optimality(A, u, f, args.alpha, args.cert_tol or certificate_tol(args.alpha, f))
    write_signal_csv(u, args.out)
    if args.certificate:
        write_json(cert.to_dict(), args.certificate)
    if args.trace:
        write_json(trace.to_dict() if hasattr(trace, "to_dict") else trace, args.trace)
    if not cert.passed:
        log.error("solution failed the optimality check (max|L| = %.3e, L(T) = %.3e)",
                  cert.max_abs_L, cert.terminal_L)
        status = EXIT_FAILURE
    return status


def cmd_check_kernel(args):
    kernel = parse_kernel(args.kernel)
    report = check_kernel(kernel, args.T, N=args.N, n=args.n, seed=args.seed, probes=args.probes)
    write_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_rates(args):
    cfg = ExperimentConfig.from_json(args.config)
    table = run_rate_experiment(cfg)
    table.write_csv(args.out)
    failed = sum(r.failures for r in table.rows)
    if failed:
        log.warning("%d trial(s) failed; their rows carry nan errors", failed)
    return EXIT_OK


def cmd_estimate_rate(args):
    fit = estimate_rate(RateTable.read_csv(args.table))
    write_json(fit.to_dict(), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="lavrentiev", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="phantom -> exact and noisy data CSVs")
    s.add_argument("--config", required=True, help="experiment config JSON")
    s.add_argument("--f", required=True, help="output CSV for the exact data")
    s.add_argument("--f-delta", required=True, help="output CSV for the noisy data")
    s.add_argument("--truth", help="optional output CSV for the phantom")
    s.add_argument("--delta-index", type=int, default=0)
    s.add_argument("--trial", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="solve A u + alpha dTV(u) ∋ f")
    s.add_argument("--data", required=True, help="data CSV (t,value)")
    s.add_argument("--kernel", required=True, help="const:<v> | exp:<c> | abel:<s> | table:<csv>")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--out", required=True, help="output CSV for u")
    s.add_argument("--certificate", help="output JSON for the optimality certificate")
    s.add_argument("--trace", help="output JSON for solver diagnostics")
    s.add_argument("--solver", choices=("dp", "oracle"), default="dp")
    s.add_argument("--tol", type=float, default=1e-10, help="oracle stopping tolerance")
    s.add_argument("--max-iter", type=int, default=1_000_000, help="oracle iteration cap")
    s.add_argument("--tau", type=float, default=None, help="oracle step size")
    s.add_argument("--cert-tol", type=float, default=None,
                   help="certificate tolerance (default 1e-8 * max(alpha, max|f| T))")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("check-kernel", help="monotonicity report for a kernel")
    s.add_argument("--kernel", required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--N", type=int, default=64)
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--probes", type=int, default=256)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_check_kernel)

    s = sub.add_parser("rates", help="run a convergence-rate experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("estimate-rate", help="fit log(error) against log(delta)")
    s.add_argument("--table", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_estimate_rate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (SolverFailure, NumericFailure) as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    except (UsageError, LavrentievError, OSError, ValueError, KeyError, TypeError) as exc:
        # remaining package errors are parameter, grid or kernel problems
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
