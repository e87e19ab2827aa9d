"""Command-line front end: strict (eps, delta) brackets for composed mechanisms."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from .error_analysis import ErrorBudget
from .fourier import epsilon_for_delta
from .grid import GridSpec
from .mechanisms import (
    RR,
    Binomial,
    CombinedBracket,
    ExpCount,
    LatticeNoise,
    MechanismSpec,
    SubsampledGaussian,
    UserAtoms,
    directional_plds,
    mechanism_bracket,
    subsampled_gaussian_density,
)
from .oracles import (
    ENUMERATION_BUDGET,
    continuous_delta_quadrature,
    exact_atom_convolution_delta,
    rr_closed_form_delta,
)
from .pld import PrivacyBound, parse_pld_csv

logger = logging.getLogger("fourier_accountant.cli")

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_VERIFY = 3

DEFAULT_N = 2**17
DEFAULT_L = 20.0
DEFAULT_L_GAUSSIAN = 8.0
THREADS_ENV = "PLD_ACCT_THREADS"


def _curve_spec(text: str):
    try:
        a, b, n = text.split(":")
        lo, hi, pts = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("expected eps_min:eps_max:points") from None
    if not (0 <= lo <= hi and pts >= 1):
        raise argparse.ArgumentTypeError("need 0 <= eps_min <= eps_max and points >= 1")
    return lo, hi, pts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    target = common.add_mutually_exclusive_group()
    target.add_argument("--eps", type=float, help="report delta bounds at this epsilon")
    target.add_argument("--delta", type=float, help="report epsilon bounds for this delta")
    common.add_argument("--k", type=int, default=1, help="number of compositions")
    common.add_argument("--n-grid", type=int, default=None, help=f"grid points (default {DEFAULT_N})")
    common.add_argument("--L", type=float, default=None, help="grid half-width")
    common.add_argument("--lambda", dest="lam", type=float, default=None, help="MGF order (default L/2)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--verify", action="store_true", help="cross-check against a reference oracle")
    common.add_argument("--curve", type=_curve_spec, default=None, metavar="A:B:N")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="pld-accountant",
        description="Strict delta(eps) brackets for k-fold composed mechanisms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rr", parents=[common], help="randomised response")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, default=None, help="Poisson subsampling ratio")

    p = sub.add_parser("exp-count", parents=[common], help="exponential mechanism on a counting query")
    p.add_argument("--eps-tilde", type=float, default=0.05)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--n-total", type=int, default=100)
    p.add_argument("--q", type=float, default=None, help="Poisson subsampling ratio")

    p = sub.add_parser("binomial", parents=[common], help="binomial noise on a lattice query")
    p.add_argument("--n-trials", type=int, required=True)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--shift", type=int, default=None, help="shift in lattice units (1D form)")
    p.add_argument("--scale", type=float, default=1.0, help="lattice spacing (labels only)")
    p.add_argument("--dim", type=int, default=None, help="query dimension for equal per-coordinate sensitivity")
    p.add_argument("--coord-delta", type=str, default="1", help="per-coordinate sensitivity, e.g. 1/10")
    p.add_argument("--q", type=float, default=None, help="Poisson subsampling ratio")

    p = sub.add_parser("subsampled-gaussian", parents=[common], help="Poisson subsampled Gaussian")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)

    p = sub.add_parser("compose", parents=[common], help="compose a PLD read from CSV")
    p.add_argument("--pld-file", required=True)
    return parser


def spec_from_args(args) -> MechanismSpec:
    cmd = args.command
    if cmd == "rr":
        return MechanismSpec(RR(args.p), subsample_q=args.q)
    if cmd == "exp-count":
        return MechanismSpec(ExpCount(args.eps_tilde, args.m, args.n_total), subsample_q=args.q)
    if cmd == "binomial":
        if args.dim is not None:
            if args.shift is not None:
                raise ValueError("give either --shift or --dim, not both")
            variant = LatticeNoise((args.coord_delta,) * args.dim, args.n_trials, args.p)
        else:
            variant = Binomial(args.n_trials, args.p, 1 if args.shift is None else args.shift, args.scale)
        return MechanismSpec(variant, subsample_q=args.q)
    if cmd == "subsampled-gaussian":
        return MechanismSpec(SubsampledGaussian(args.q, args.sigma))
    return MechanismSpec(UserAtoms(args.pld_file))


def grid_from_args(args) -> GridSpec:
    L, n = args.L, args.n_grid
    if args.command == "compose" and (L is None or n is None):
        with open(args.pld_file, encoding="utf-8") as fh:
            _, header = parse_pld_csv(fh.read())
        if header is not None:
            L = header[0] if L is None else L
            n = header[1] if n is None else n
    if L is None:
        L = DEFAULT_L_GAUSSIAN if args.command == "subsampled-gaussian" else DEFAULT_L
    return GridSpec(L, DEFAULT_N if n is None else n)


def _budget_fields(bound: PrivacyBound) -> dict:
    budgets = bound.budgets
    worst: ErrorBudget = max(budgets.values(), key=lambda b: b.total)
    return {
        "err_total": worst.total,
        "err_tail": worst.tail,
        "err_trunc": worst.truncation,
        "err_period": worst.periodisation,
        "lambda": worst.lambda_used,
        "error_budget": {side: b.as_dict() for side, b in budgets.items()},
    }


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def emit_curve(bracket: CombinedBracket, eps_min: float, eps_max: float, points: int) -> List[dict]:
    """delta bounds on an eps sweep, made monotone in eps.

    The true delta is non-increasing, so a running minimum of upper bounds
    (left to right) and running maximum of lower bounds (right to left)
    remain valid bounds.
    """
    eps = np.linspace(eps_min, eps_max, points)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        bounds = list(pool.map(bracket.at, eps.tolist()))
    upper = np.minimum.accumulate([b.delta_upper for b in bounds])
    lower = np.maximum.accumulate([b.delta_lower for b in bounds][::-1])[::-1]
    return [
        {"eps": float(e), "delta_lower": float(lo), "delta_upper": float(hi)}
        for e, lo, hi in zip(eps, lower, upper)
    ]


def reference_delta(spec: MechanismSpec, k: int, eps: float):
    """Oracle delta(eps) for the configured mechanism, or (None, reason)."""
    v = spec.variant
    if isinstance(v, SubsampledGaussian):
        if k != 1:
            return None, "quadrature oracle covers k = 1 only"
        omega = subsampled_gaussian_density(v.q, v.sigma)
        return continuous_delta_quadrature(omega, eps, omega.support_left), "quadrature"
    if isinstance(v, RR) and spec.subsample_q is None and k == 1 and v.p != 0.5:
        return rr_closed_form_delta(max(v.p, 1 - v.p), eps), "closed_form"
    values = []
    for _, lower, upper in directional_plds(spec):
        if upper.delta_inf != lower.delta_inf:
            return None, "underflowed atoms make the exact reference ambiguous"
        if math.comb(k + len(lower) - 1, max(len(lower) - 1, 0)) > ENUMERATION_BUDGET:
            return None, "exact enumeration exceeds its budget"
        values.append(exact_atom_convolution_delta(lower, k, eps))
    return max(values), "exact_atom_convolution"


def _csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    flat = [{k: v for k, v in r.items() if not isinstance(v, dict)} for r in rows]
    writer = csv.DictWriter(buf, fieldnames=list(flat[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat)
    return buf.getvalue()


def run(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.eps is None and args.delta is None and args.curve is None:
        parser.error("one of --eps, --delta or --curve is required")

    start = time.perf_counter()
    try:
        if args.k < 1:
            raise ValueError("k must be a positive integer")
        spec = spec_from_args(args)
        grid = grid_from_args(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            bracket = mechanism_bracket(spec, grid, args.k, args.lam)
        for w in caught:
            logger.warning("%s", w.message)

        report = {"command": args.command, "k": args.k, "grid": {"L": grid.L, "n": grid.n}}
        checks = []
        if args.curve is not None:
            rows = emit_curve(bracket, *args.curve)
            report["curve"] = rows
            checks = [(r["eps"], r["delta_lower"], r["delta_upper"]) for r in rows]
            # the error budget does not depend on eps
            report.update(_budget_fields(bracket.at(args.curve[0])))
        else:
            if args.eps is not None:
                bound = bracket.at(args.eps)
                report.update(eps=args.eps, delta_lower=bound.delta_lower, delta_upper=bound.delta_upper)
                checks = [(args.eps, bound.delta_lower, bound.delta_upper)]
            else:
                if not 0 < args.delta < 1:
                    raise ValueError("--delta must lie in (0, 1)")
                span = (0.0, 2.0 * grid.L * args.k)
                eps_upper = epsilon_for_delta(lambda e: bracket.at(e).delta_upper, args.delta, span)
                try:
                    eps_lower = epsilon_for_delta(
                        lambda e: bracket.at(e).delta_lower, args.delta, span, side="lower"
                    )
                except ValueError:
                    eps_lower = span[1]
                bound = bracket.at(eps_upper)
                low = bracket.at(eps_lower)
                report.update(delta=args.delta, eps_lower=eps_lower, eps_upper=eps_upper,
                              delta_lower=bound.delta_lower, delta_upper=bound.delta_upper)
                checks = [(eps_upper, bound.delta_lower, bound.delta_upper),
                          (eps_lower, low.delta_lower, low.delta_upper)]
            report.update(_budget_fields(bound))

        status = EXIT_OK
        if args.verify:
            status, report["verify"] = _verify(spec, args.k, checks)
        report["wall_ms"] = 1000.0 * (time.perf_counter() - start)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION

    if args.format == "json":
        out.write(json.dumps(report, indent=2) + "\n")
    elif args.curve is not None:
        out.write(_csv(report["curve"]))
    else:
        out.write(_csv([report]))
    return status


def _verify(spec: MechanismSpec, k: int, checks):
    results = []
    status = EXIT_OK
    for eps, lo, hi in checks:
        ref, method = reference_delta(spec, k, eps)
        if ref is None:
            logger.info("verify skipped at eps=%g: %s", eps, method)
            results.append({"eps": eps, "applicable": False, "reason": method})
            continue
        ok = lo <= ref <= hi
        logger.info("verify eps=%g: %s reference %.17g in [%.17g, %.17g]: %s", eps, method, ref, lo, hi, ok)
        results.append({"eps": eps, "method": method, "reference": ref, "ok": ok})
        if not ok:
            status = EXIT_VERIFY
    return status, results


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
