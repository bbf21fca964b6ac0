"""Command-line interface: ``certify``, ``sweep``, ``max-advantage``, ``verify``.

Exit codes: 0 success, 1 usage or domain error, 2 infeasible statistics,
3 solver failure (or a failed verification), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .conic import SolverSettings
from .experiments import (
    DEFAULT_CONFUSABILITIES,
    FORMATS,
    PAIRS,
    SIGNIFICANT,
    SweepSpec,
    SweepSpecError,
    max_advantage,
    render_advantage,
    render_records,
    run_sweep,
    run_verification,
    write_text,
)
from .noncontextual import (
    NoncontextualProgram,
    max_confidence_nc,
    pg_nc_device_quantum_eve,
    pg_noncontextual,
)
from .quantum import QuantumProgram, max_confidence_quantum, pg_quantum
from .result import InfeasibleStatisticsError, SolverFailure
from .scenario import (
    NONCONTEXTUAL,
    QUANTUM,
    DomainError,
    Overlap,
    Priors,
    UnsupportedConfigurationError,
    classify_region,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

THEORIES = ("quantum", "nc", "nc-quantum-eve")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract here reserves 2 for
    infeasible statistics, so usage errors exit with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _confidence(text: str):
    if text == "max":
        return "max"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'max', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcdcert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cert = sub.add_parser("certify", help="certify one set of observed statistics")
    cert.add_argument("--theory", choices=THEORIES, required=True,
                      help="device and eavesdropper model")
    overlap = cert.add_mutually_exclusive_group(required=True)
    overlap.add_argument("--delta-sq", type=float, help="squared quantum overlap")
    overlap.add_argument("--delta", type=float, help="quantum overlap")
    overlap.add_argument("--confusability", type=float, help="noncontextual confusability")
    cert.add_argument("--eta0", type=float, required=True, help="rate of outcome 0")
    cert.add_argument("--c0", type=_confidence, default="max",
                      help="confidence of outcome 0, or 'max' (default)")
    cert.add_argument("--p0", type=float, default=0.5, help="prior of input 0")
    cert.add_argument("--output", help="write the JSON record here instead of stdout")

    sweep = sub.add_parser("sweep", help="grid over confusability and rate")
    sweep.add_argument("--config", help="JSON file with SweepSpec fields")
    sweep.add_argument("--pair", choices=PAIRS)
    sweep.add_argument("--confusabilities", type=float, nargs="+")
    sweep.add_argument("--eta-start", type=float)
    sweep.add_argument("--eta-stop", type=float)
    sweep.add_argument("--eta-count", type=int)
    sweep.add_argument("--c0", dest="confidence", type=_confidence)
    sweep.add_argument("--p0", type=float)
    sweep.add_argument("--format", dest="fmt", choices=FORMATS)
    sweep.add_argument("--output")
    sweep.add_argument("--workers", type=int, default=1)

    adv = sub.add_parser("max-advantage", help="rate of largest quantum advantage")
    adv.add_argument("--config", help="JSON file with confusabilities, count, fmt, output")
    adv.add_argument("--confusabilities", type=float, nargs="+")
    adv.add_argument("--count", type=int, help="rate grid size before refinement")
    adv.add_argument("--format", dest="fmt", choices=FORMATS)
    adv.add_argument("--output")

    ver = sub.add_parser("verify", help="run the invariant suite")
    ver.add_argument("--density", type=int, default=10)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--gap-tol", type=float, default=None,
                     help="solver gap tolerance (for fault injection)")
    ver.add_argument("--output")
    return parser


# -- certify -------------------------------------------------------------------------


def _certify(args) -> tuple[int, dict]:
    if args.delta_sq is not None:
        if not 0.0 <= args.delta_sq <= 1.0:
            raise UsageError(f"--delta-sq {args.delta_sq} outside [0, 1]")
        overlap = Overlap.from_confusability(args.delta_sq)
    elif args.delta is not None:
        overlap = Overlap.from_delta(args.delta)
    else:
        overlap = Overlap.from_confusability(args.confusability)
    priors = Priors(args.p0, 1.0 - args.p0)
    device = QUANTUM if args.theory == "quantum" else NONCONTEXTUAL
    region = classify_region(device, overlap, args.eta0).label
    if args.c0 == "max":
        if device == QUANTUM:
            c0 = max_confidence_quantum(overlap.delta, args.eta0, priors)
        else:
            c0 = max_confidence_nc(overlap.confusability, args.eta0, priors)
    else:
        c0 = args.c0
    record = {
        "theory": args.theory,
        "delta": overlap.delta,
        "confusability": overlap.confusability,
        "eta0": args.eta0,
        "c0": c0,
        "region": region,
    }
    try:
        if device == QUANTUM:
            result = pg_quantum(QuantumProgram(overlap.delta, args.eta0, c0, priors))
        else:
            nprog = NoncontextualProgram(overlap.confusability, args.eta0, c0, priors)
            solver = pg_noncontextual if args.theory == "nc" else pg_nc_device_quantum_eve
            result = solver(nprog)
    except InfeasibleStatisticsError as exc:
        record.update(status="infeasible-statistics", reason=str(exc))
        return EXIT_INFEASIBLE, record
    except SolverFailure as exc:
        status = exc.solution.status if exc.solution is not None else "failure"
        record.update(status=status, reason=str(exc))
        return EXIT_SOLVER, record
    record.update(
        p_guess=result.p_guess,
        hmin=result.min_entropy,
        status=result.status,
        gap=result.gap,
        certificate_valid=result.certificate_valid,
    )
    return (EXIT_OK if result.ok else EXIT_SOLVER), record


def _round(value):
    if isinstance(value, float):
        return float(f"{value:.{SIGNIFICANT}g}") if math.isfinite(value) else None
    return value


def _emit_json(payload, path):
    write_text(json.dumps(payload, indent=2) + "\n", path, sys.stdout)


# -- config handling -----------------------------------------------------------------


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path}: expected a JSON object")
    return data


def _merge(config: dict, args, names) -> dict:
    """Flags that were given override the config file."""
    merged = dict(config)
    for name in names:
        value = getattr(args, name)
        if value is not None:
            merged[name] = value
    return merged


def _sweep(args) -> int:
    data = _merge(_load_config(args.config), args,
                  ("pair", "confusabilities", "eta_start", "eta_stop", "eta_count",
                   "confidence", "p0", "fmt", "output"))
    try:
        spec = SweepSpec.from_mapping(data)
    except (SweepSpecError, DomainError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    records = run_sweep(spec, workers=args.workers)
    write_text(render_records(records, spec.fmt), spec.output, sys.stdout)
    return EXIT_OK


def _max_advantage(args) -> int:
    data = _merge(_load_config(args.config), args, ("confusabilities", "count", "fmt", "output"))
    unknown = set(data) - {"confusabilities", "count", "fmt", "output"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    confusabilities = tuple(float(d) for d in data.get("confusabilities", DEFAULT_CONFUSABILITIES))
    count = int(data.get("count", 41))
    fmt = data.get("fmt", "csv")
    if fmt not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}")
    if count < 1 or not confusabilities:
        raise UsageError("need at least one confusability and a positive count")
    for d in confusabilities:
        if not 0.0 <= d <= 1.0:
            raise UsageError(f"confusability {d} outside [0, 1]")
    records = [max_advantage(d, count) for d in confusabilities]
    write_text(render_advantage(records, fmt), data.get("output"), sys.stdout)
    return EXIT_OK


def _verify(args) -> int:
    if args.density < 2:
        raise UsageError("--density must be at least 2")
    settings = None
    if args.gap_tol is not None:
        settings = SolverSettings(gap_tol=args.gap_tol, feas_tol=args.gap_tol,
                                  fallback_tol=None, polish=False)
    report = run_verification(args.density, args.seed, settings)
    write_text(report.to_json(), args.output, sys.stdout)
    return EXIT_OK if report.passed else EXIT_SOLVER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "certify":
            code, record = _certify(args)
            _emit_json({k: _round(v) for k, v in record.items()}, args.output)
            return code
        if args.command == "sweep":
            return _sweep(args)
        if args.command == "max-advantage":
            return _max_advantage(args)
        return _verify(args)
    except (UsageError, DomainError, UnsupportedConfigurationError) as exc:
        print(f"mcdcert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mcdcert: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
