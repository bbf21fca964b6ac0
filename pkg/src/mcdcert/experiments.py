"""Batch experiments: grid sweeps, quantum-advantage scans and the
verification suite behind the ``verify`` command."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy.optimize

from . import conic
from .conic import SolverSettings
from .noncontextual import (
    NoncontextualProgram,
    honest_witness_nc,
    max_confidence_nc,
    pg_nc_device_quantum_eve,
    pg_noncontextual,
)
from .oracles import (
    dual_point_from_multipliers,
    duality_cross_check,
    nc_vertex_oracle,
    quantum_grid_oracle,
)
from .quantum import (
    QuantumProgram,
    honest_witness_quantum,
    max_confidence_quantum,
    nudge_eta0,
    pg_quantum,
)
from .result import InfeasibleStatisticsError, SolverFailure
from .scenario import (
    INTERIOR,
    NONCONTEXTUAL,
    QUANTUM,
    DomainError,
    Overlap,
    Priors,
    UnsupportedConfigurationError,
    classify_region,
    helstrom_error,
    min_entropy,
    region_boundaries,
    usd_inconclusive_rate,
)

RESPECTIVE = "respective"
QUANTUM_EVE = "quantum-eve"
PAIRS = (RESPECTIVE, QUANTUM_EVE)
FORMATS = ("csv", "json")
DEFAULT_CONFUSABILITIES = (0.3, 0.5, 0.7)
NUDGE = 1e-9
SIGNIFICANT = 12

# statuses recorded when no solve happens
INFEASIBLE_STATS = "infeasible-statistics"
UNSUPPORTED = "unsupported"


class SweepSpecError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class SweepSpec:
    """Grid over confusability and output rate.

    ``confidence`` is ``"max"`` (each device at its own maximal confidence)
    or a fixed value used for both devices.
    """

    pair: str = RESPECTIVE
    confusabilities: tuple = DEFAULT_CONFUSABILITIES
    eta_start: float = 0.01
    eta_stop: float = 1.0
    eta_count: int = 100
    priors: Priors = field(default_factory=Priors)
    confidence: object = "max"
    fmt: str = "csv"
    output: str | None = None

    def __post_init__(self):
        if self.pair not in PAIRS:
            raise SweepSpecError(f"pair must be one of {PAIRS}, got {self.pair!r}")
        if self.fmt not in FORMATS:
            raise SweepSpecError(f"format must be one of {FORMATS}, got {self.fmt!r}")
        if int(self.eta_count) != self.eta_count or self.eta_count < 2:
            raise SweepSpecError("eta grid needs at least 2 points")
        if not self.confusabilities:
            raise SweepSpecError("at least one confusability is required")
        for d in self.confusabilities:
            if not 0.0 <= d <= 1.0:
                raise SweepSpecError(f"confusability {d} outside [0, 1]")
        for name in ("eta_start", "eta_stop"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SweepSpecError(f"{name} outside [0, 1]")
        if self.confidence != "max":
            try:
                c = float(self.confidence)
            except (TypeError, ValueError):
                raise SweepSpecError("confidence must be 'max' or a number") from None
            if not 0.0 <= c <= 1.0:
                raise SweepSpecError(f"fixed confidence {c} outside [0, 1]")
            object.__setattr__(self, "confidence", c)
        object.__setattr__(self, "confusabilities", tuple(float(d) for d in self.confusabilities))
        object.__setattr__(self, "eta_count", int(self.eta_count))

    def eta_grid(self) -> np.ndarray:
        return np.linspace(self.eta_start, self.eta_stop, self.eta_count)

    @classmethod
    def from_mapping(cls, data: dict) -> "SweepSpec":
        """Build from a config mapping; keys mirror the field names, with
        ``p0`` standing in for ``priors``."""
        data = dict(data)
        known = {f.name for f in fields(cls)} | {"p0"}
        unknown = set(data) - known
        if unknown:
            raise SweepSpecError(f"unknown config keys: {sorted(unknown)}")
        if "p0" in data:
            p0 = float(data.pop("p0"))
            try:
                data["priors"] = Priors(p0, 1.0 - p0)
            except DomainError as exc:
                raise SweepSpecError(str(exc)) from None
        if "confusabilities" in data:
            data["confusabilities"] = tuple(data["confusabilities"])
        return cls(**data)


@dataclass(frozen=True)
class SweepRecord:
    """One grid point.  Field order is the CSV column order."""

    confusability: float
    eta0: float
    c0_quantum: float
    c0_nc: float
    pg_quantum: float
    pg_nc: float
    hmin_quantum: float
    hmin_nc: float
    region_quantum: str
    region_nc: str
    status_quantum: str
    status_nc: str
    gap_quantum: float
    gap_nc: float
    nudged: bool

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def formatted(self) -> dict:
        """Values as emitted: floats rounded to 12 significant digits,
        non-finite floats as ``None``."""
        out = {}
        for name, value in asdict(self).items():
            if isinstance(value, bool):
                out[name] = value
            elif isinstance(value, float):
                out[name] = float(f"{value:.{SIGNIFICANT}g}") if math.isfinite(value) else None
            else:
                out[name] = value
        return out


def _fmt_cell(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{SIGNIFICANT}g}"
    return str(value)


def _solve_side(solver, program, settings):
    """``(p_guess, hmin, status, gap)`` for one theory at one grid point."""
    try:
        res = solver(program, settings)
    except InfeasibleStatisticsError:
        return math.nan, math.nan, INFEASIBLE_STATS, math.nan
    except SolverFailure as exc:
        sol = exc.solution
        return math.nan, math.nan, sol.status if sol is not None else "failure", math.nan
    return res.p_guess, min_entropy(res.p_guess), res.status, res.gap


def run_point(spec: SweepSpec, confusability: float, eta0: float,
              settings: SolverSettings | None = None) -> SweepRecord:
    """Certify both devices at one grid point.

    ``eta0`` sitting on a region boundary (within 1e-9) is moved 1e-9 into
    the adjacent UI region and the record is flagged.
    """
    overlap = Overlap.from_confusability(confusability)
    eta0, nudged = nudge_eta0(eta0, region_boundaries(QUANTUM, overlap), NUDGE)
    if not nudged:
        eta0, nudged = nudge_eta0(eta0, region_boundaries(NONCONTEXTUAL, overlap), NUDGE)
    regions = (
        classify_region(QUANTUM, overlap, eta0).label,
        classify_region(NONCONTEXTUAL, overlap, eta0).label,
    )
    try:
        if spec.confidence == "max":
            c0q = max_confidence_quantum(overlap.delta, eta0, spec.priors)
            c0n = max_confidence_nc(confusability, eta0, spec.priors)
        else:
            c0q = c0n = float(spec.confidence)
    except (DomainError, UnsupportedConfigurationError) as exc:
        status = UNSUPPORTED if isinstance(exc, UnsupportedConfigurationError) else INFEASIBLE_STATS
        nan = math.nan
        return SweepRecord(confusability, eta0, nan, nan, nan, nan, nan, nan, *regions,
                           status, status, nan, nan, nudged)

    qp = QuantumProgram(overlap.delta, eta0, c0q, spec.priors)
    nprog = NoncontextualProgram(confusability, eta0, c0n, spec.priors)
    pgq, hq, sq, gq = _solve_side(pg_quantum, qp, settings)
    nc_solver = pg_noncontextual if spec.pair == RESPECTIVE else pg_nc_device_quantum_eve
    pgn, hn, sn, gn = _solve_side(nc_solver, nprog, settings)
    return SweepRecord(confusability, eta0, c0q, c0n, pgq, pgn, hq, hn, *regions,
                       sq, sn, gq, gn, nudged)


def _run_point_args(args):
    return run_point(*args)


def run_sweep(spec: SweepSpec, workers: int = 1,
              settings: SolverSettings | None = None) -> list[SweepRecord]:
    """All records, confusability-major and rate-minor, whatever ``workers``."""
    jobs = [(spec, d, float(e), settings) for d in spec.confusabilities for e in spec.eta_grid()]
    if workers <= 1:
        return [run_point(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_point_args, jobs, chunksize=8))


def render_records(records, fmt: str) -> str:
    """Serialize records; CSV and JSON carry identical values."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SweepRecord.columns())
        for rec in records:
            row = rec.formatted()
            writer.writerow([_fmt_cell(row[c]) for c in SweepRecord.columns()])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([r.formatted() for r in records], indent=2) + "\n"
    raise SweepSpecError(f"unknown format {fmt!r}")


def write_text(text: str, path: str | None, stream=None) -> None:
    """Write UTF-8 with LF line endings to ``path``, or to ``stream``."""
    if path is None:
        stream.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- quantum advantage -------------------------------------------------------------


@dataclass(frozen=True)
class AdvantageRecord:
    confusability: float
    eta0_star: float
    hmin_quantum: float
    hmin_nc_device: float
    advantage: float

    def formatted(self) -> dict:
        return {
            k: float(f"{v:.{SIGNIFICANT}g}") if math.isfinite(v) else None
            for k, v in asdict(self).items()
        }


def advantage_at(confusability: float, eta0: float, settings=None) -> tuple[float, float]:
    """``(H_Q, H_NC-device)`` against a quantum eavesdropper, each device at
    its own maximal confidence; NaNs when either solve fails."""
    delta = math.sqrt(confusability)
    try:
        q = pg_quantum(QuantumProgram(delta, eta0, max_confidence_quantum(delta, eta0)), settings)
        n = pg_nc_device_quantum_eve(NoncontextualProgram.maximal(confusability, eta0), settings)
    except SolverFailure:
        return math.nan, math.nan
    return min_entropy(q.p_guess), min_entropy(n.p_guess)


def max_advantage(confusability: float, count: int = 41, settings=None) -> AdvantageRecord:
    """Rate maximizing ``H_Q - H(NC device, quantum eavesdropper)``.

    Outside the interior region both devices report identical statistics,
    so only interior rates are scanned; the best grid point is refined by a
    bounded scalar search between its neighbours.  Rates where a solve fails
    are skipped.
    """
    lo, hi = region_boundaries(NONCONTEXTUAL, Overlap.from_confusability(confusability))
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    if hi - lo <= 4 * NUDGE:
        hq, hn = advantage_at(confusability, 0.5, settings)
        return AdvantageRecord(confusability, 0.5, hq, hn, hq - hn)
    grid = np.linspace(lo, hi, count + 2)[1:-1]
    values = [advantage_at(confusability, float(e), settings) for e in grid]
    gains = np.array([hq - hn for hq, hn in values])
    if np.all(np.isnan(gains)):
        nan = math.nan
        return AdvantageRecord(confusability, nan, nan, nan, nan)
    k = int(np.nanargmax(gains))
    left = grid[k - 1] if k > 0 else lo + NUDGE
    right = grid[k + 1] if k + 1 < len(grid) else hi - NUDGE

    def loss(e):
        hq, hn = advantage_at(confusability, float(e), settings)
        return -(hq - hn) if math.isfinite(hq - hn) else math.inf

    res = scipy.optimize.minimize_scalar(loss, bounds=(left, right), method="bounded",
                                         options={"xatol": 1e-6})
    best_eta, (hq, hn) = float(grid[k]), values[k]
    if -res.fun > gains[k]:
        best_eta = float(res.x)
        hq, hn = advantage_at(confusability, best_eta, settings)
    return AdvantageRecord(confusability, best_eta, hq, hn, hq - hn)


def render_advantage(records, fmt: str) -> str:
    cols = [f.name for f in fields(AdvantageRecord)]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            row = rec.formatted()
            writer.writerow([_fmt_cell(row[c]) for c in cols])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([r.formatted() for r in records], indent=2) + "\n"
    raise SweepSpecError(f"unknown format {fmt!r}")


# -- verification suite --------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    count: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, **detail) -> None:
        self.failures.append({k: _plain(v) for k, v in detail.items()})

    def as_dict(self, limit: int = 20) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "count": self.count,
            "failures": self.failures[:limit],
            "n_failures": len(self.failures),
        }


def _plain(value):
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.{SIGNIFICANT}g}") if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


@dataclass(frozen=True)
class VerificationReport:
    seed: int
    density: int
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        body = {
            "passed": self.passed,
            "seed": self.seed,
            "density": self.density,
            "checks": [c.as_dict() for c in self.checks],
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


GAP_LIMIT = 1e-8


def _check_closed_forms() -> CheckResult:
    chk = CheckResult("closed-forms", 3)
    if abs(helstrom_error(Priors(), 0.6) - 0.1) > 1e-15:
        chk.fail(quantity="helstrom_error", value=helstrom_error(Priors(), 0.6))
    for d in (0.0, 0.4, 1.0):
        if usd_inconclusive_rate(d) != d:
            chk.fail(quantity="usd_inconclusive_rate", delta=d)
    if min_entropy(0.5) != 1.0:
        chk.fail(quantity="min_entropy", value=min_entropy(0.5))
    return chk


def _check_regions(confusabilities) -> CheckResult:
    chk = CheckResult("region-boundaries")
    for d in confusabilities:
        delta = math.sqrt(d)
        lo = 0.5 * (1.0 - d)
        hi = 0.5 * (1.0 + d)
        for name, fn, arg in (("quantum", max_confidence_quantum, delta),
                              ("noncontextual", max_confidence_nc, d)):
            chk.count += 1
            if lo > 1e-9 and fn(arg, lo - 1e-9) != 1.0:
                chk.fail(theory=name, confusability=d, where="below lower boundary")
            if lo + 1e-9 < 1.0 and d < 1.0 and fn(arg, lo + 1e-9) >= 1.0:
                chk.fail(theory=name, confusability=d, where="above lower boundary")
            for b in (lo, hi):
                if 1e-6 < b < 1 - 1e-6:
                    jump = abs(fn(arg, b + 1e-6) - fn(arg, b - 1e-6))
                    if jump >= 1e-4:
                        chk.fail(theory=name, confusability=d, boundary=b, jump=jump)
    return chk


def _certified(result) -> bool:
    return result.status == conic.OPTIMAL and result.gap <= GAP_LIMIT and result.certificate_valid


def _check_grid(confusabilities, etas, settings):
    """Gap/certificate, oracle equality, UI equality, dominance and witness
    checks over one grid of maximal-confidence instances."""
    gaps = CheckResult("gap-and-certificate")
    oracle = CheckResult("nc-oracle-equality")
    equal = CheckResult("ui-region-equality")
    dominance = CheckResult("quantum-dominance")
    witness = CheckResult("honest-witness-lower-bound")
    for d in confusabilities:
        overlap = Overlap.from_confusability(d)
        bounds = region_boundaries(QUANTUM, overlap)
        for e in etas:
            e, _ = nudge_eta0(float(e), bounds, NUDGE)
            point = {"confusability": d, "eta0": e}
            qp = QuantumProgram(overlap.delta, e, max_confidence_quantum(overlap.delta, e))
            nprog = NoncontextualProgram.maximal(d, e)
            results = {}
            for label, solver, prog in (("quantum", pg_quantum, qp),
                                        ("noncontextual", pg_noncontextual, nprog),
                                        ("nc-device", pg_nc_device_quantum_eve, nprog)):
                gaps.count += 1
                try:
                    res = solver(prog, settings)
                except (SolverFailure, InfeasibleStatisticsError) as exc:
                    gaps.fail(program=label, error=str(exc), **point)
                    continue
                if not _certified(res):
                    gaps.fail(program=label, status=res.status, gap=res.gap,
                              violation=res.certificate_violation, **point)
                results[label] = res
            if "noncontextual" in results:
                oracle.count += 1
                ref = nc_vertex_oracle(nprog)
                if abs(ref - results["noncontextual"].p_guess) > 1e-9:
                    oracle.fail(oracle=ref, solver=results["noncontextual"].p_guess, **point)
            if "quantum" in results and "noncontextual" in results:
                rq = classify_region(QUANTUM, overlap, e).label
                rn = classify_region(NONCONTEXTUAL, overlap, e).label
                if rq != INTERIOR and rn != INTERIOR:
                    equal.count += 1
                    diff = results["quantum"].min_entropy - results["noncontextual"].min_entropy
                    if abs(diff) > 1e-6:
                        equal.fail(difference=diff, **point)
            if "quantum" in results and "nc-device" in results:
                dominance.count += 1
                diff = results["quantum"].min_entropy - results["nc-device"].min_entropy
                interior = classify_region(QUANTUM, overlap, e).label == INTERIOR and \
                    classify_region(NONCONTEXTUAL, overlap, e).label == INTERIOR
                if diff < -1e-8 or (interior and 0.0 < d < 1.0 and diff < 1e-4):
                    dominance.fail(difference=diff, interior=interior, **point)
            for label, build in (("quantum", lambda: honest_witness_quantum(overlap.delta, e)),
                                 ("noncontextual", lambda: honest_witness_nc(d, e))):
                if label not in results:
                    continue
                witness.count += 1
                _, _, value = build()
                if value > results[label].p_guess + 1e-8:
                    witness.fail(theory=label, witness=value,
                                 certified=results[label].p_guess, **point)
    return [gaps, oracle, equal, dominance, witness]


def _check_random(rng, count, settings):
    """Grid-oracle brackets and dual cross-checks on random instances with
    confidences drawn between the smallest and largest feasible."""
    bracket = CheckResult("quantum-grid-oracle-bracket")
    cross = CheckResult("duality-cross-check")
    for _ in range(count):
        delta, eta0 = float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.05, 0.95))
        cmax = max_confidence_quantum(delta, eta0)
        c0 = float(rng.uniform(1.0 - cmax, cmax))
        point = {"delta": delta, "eta0": eta0, "c0": c0}
        qp = QuantumProgram(delta, eta0, c0)
        try:
            res = pg_quantum(qp, settings)
        except SolverFailure as exc:
            bracket.fail(error=str(exc), **point)
            continue
        bracket.count += 1
        bounds = quantum_grid_oracle(qp, grid_resolution=180, radial=11)
        if not bounds.brackets(res.p_guess, 1e-9) or bounds.width > 1e-3:
            bracket.fail(lower=bounds.lower, upper=bounds.upper, solver=res.p_guess, **point)

        nprog = NoncontextualProgram(delta * delta, eta0,
                                     float(rng.uniform(1.0 - max_confidence_nc(delta**2, eta0),
                                                       max_confidence_nc(delta**2, eta0))))
        for prog, solver in ((qp, None), (nprog, pg_noncontextual)):
            cross.count += 1
            sol_res = res if solver is None else solver(prog, settings)
            dual = dual_point_from_multipliers(prog, sol_res.solution.dual_multipliers)
            report = duality_cross_check(prog, dual)
            if not report.valid:
                cross.fail(violation=report.max_violation, theory=type(prog).__name__, **point)
            corrupted = duality_cross_check(prog, replace(dual, chi=dual.chi + 0.1))
            if corrupted.max_violation <= 1e-3:
                cross.fail(injected=True, violation=corrupted.max_violation, **point)
    return [bracket, cross]


def run_verification(density: int = 10, seed: int = 0,
                     settings: SolverSettings | None = None) -> VerificationReport:
    """Run the invariant suite.  ``density`` sets the rate-grid size (and
    scales the number of random instances); ``seed`` fixes the random ones."""
    if density < 2:
        raise ValueError("density must be at least 2")
    rng = np.random.default_rng(seed)
    confusabilities = DEFAULT_CONFUSABILITIES
    etas = np.linspace(0.01, 1.0, density)
    checks = [_check_closed_forms(), _check_regions(np.linspace(0.0, 1.0, density))]
    checks += _check_grid(confusabilities, etas, settings)
    checks += _check_random(rng, max(2, density // 4), settings)
    return VerificationReport(seed, density, tuple(checks))
