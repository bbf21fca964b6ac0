"""Guessing probability against a noncontextual eavesdropper.

Each strategy ``(lambda0, lambda1)`` carries three sub-normalized response
matrices ``M[l][b] = q_l xi_b``.  Their four entries are the weights the
response puts on the ontic regions ``T0, T10, T10bar, T1``; nonnegativity of
every entry is the whole cone, so the program is a linear program over 108
scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conic
from .conic import Block, ConicProblem, Constraint, SolverSettings
from .quantum import QuantumProgram, _snap_rate, build_primal, certify, max_confidence_quantum
from .result import CertificationResult, Feasibility, InfeasibleStatisticsError, SolverFailure
from .scenario import (
    API_TOL,
    NONCONTEXTUAL,
    OUTCOMES,
    QUANTUM,
    STRATEGIES,
    EpistemicMatrix,
    Priors,
    ResponseMatrix,
    UndefinedConfidenceError,
    UnsupportedConfigurationError,
    _check_unit,
    epistemic_states,
)

# matrix positions of the four region weights
ENTRIES = ((0, 0), (0, 1), (1, 0), (1, 1))
ENTRY_NAMES = ("A0", "B", "Bbar", "A1")


@dataclass(frozen=True)
class NoncontextualProgram:
    confusability: float
    eta0: float
    c0: float
    priors: Priors = Priors()

    def __post_init__(self):
        _check_unit("confusability", self.confusability, 0.0)
        _check_unit("eta0", self.eta0)
        _check_unit("c0", self.c0)

    @classmethod
    def maximal(cls, confusability: float, eta0: float, priors: Priors | None = None):
        """Program at the largest noncontextual confidence for ``eta0``."""
        return cls(confusability, eta0, max_confidence_nc(confusability, eta0, priors),
                   priors or Priors())

    @property
    def canonical_states(self) -> dict[str, EpistemicMatrix]:
        return epistemic_states(self.confusability)

    def prepared(self) -> tuple[np.ndarray, np.ndarray]:
        st = self.canonical_states
        return st["0"].m, st["1"].m

    def block_index(self, strategy: int, outcome: int, entry: int) -> int:
        return 12 * strategy + 4 * outcome + entry


def max_confidence_nc(confusability: float, eta0: float, priors: Priors | None = None) -> float:
    """Largest confidence ``C0`` a noncontextual measurement reaches at ``eta0``.

    Below ``(1 - D)/2`` the response sits on ``T0`` only (``C0 = 1``); in the
    middle it covers all of ``T0`` plus a fraction of ``T10``; above
    ``(1 + D)/2`` it also covers part of ``T1`` and ``C0 = 1 / (2 eta0)``.
    """
    if priors is not None and not priors.unbiased:
        raise UnsupportedConfigurationError("maximum confidence derived for unbiased priors only")
    _check_unit("confusability", confusability, 0.0)
    _check_unit("eta0", eta0)
    if eta0 <= 0.0:
        raise UndefinedConfidenceError("eta0 = 0: confidence undefined")
    eta0 = min(eta0, 1.0)
    d = confusability
    if eta0 <= 0.5 * (1.0 - d):
        return 1.0
    if eta0 >= 0.5 * (1.0 + d):
        return 1.0 / (2.0 * eta0)
    return min(1.0, 0.25 * (1.0 - d) / eta0 + 0.5)


def optimal_response(confusability: float, eta0: float) -> ResponseMatrix:
    """Outcome-0 response matrix reaching :func:`max_confidence_nc`.

    ``T10bar`` carries no weight for either prepared state; it is filled like
    ``T10`` so the response is symmetric.
    """
    _check_unit("eta0", eta0)
    d = confusability
    lo, hi = 0.5 * (1.0 - d), 0.5 * (1.0 + d)
    if eta0 <= lo:
        a00 = 2.0 * eta0 / (1.0 - d) if d < 1 else 0.0
        a10, beta = 0.0, 0.0
    elif eta0 >= hi:
        a00, beta = 1.0, 1.0
        a10 = min(1.0, max(0.0, (2.0 * eta0 - 2.0 * d) / (1.0 - d) - 1.0)) if d < 1 else 1.0
    else:
        a00, a10 = 1.0, 0.0
        beta = min(1.0, max(0.0, (2.0 * eta0 - 1.0 + d) / (2.0 * d)))
    return ResponseMatrix.from_entries(a00, beta, beta, a10)


def validate_statistics_nc(
    confusability: float, eta0: float, c0: float, priors: Priors | None = None
) -> Feasibility:
    priors = priors or Priors()
    for name, val in (("confusability", confusability), ("eta0", eta0), ("c0", c0)):
        if not (-API_TOL <= val <= 1 + API_TOL):
            return Feasibility(False, math.nan, f"{name} outside [0, 1]")
    if eta0 <= 0.0:
        return Feasibility(False, math.nan, "eta0 = 0: confidence undefined")
    if c0 * eta0 > priors.p0 + API_TOL:
        return Feasibility(False, math.nan, "eta0*c0 exceeds p0")
    if (1.0 - c0) * eta0 > priors.p1 + API_TOL:
        return Feasibility(False, math.nan, "eta0*(1-c0) exceeds p1")
    if not priors.unbiased:
        return Feasibility(True, math.nan, "biased priors: only necessary conditions checked")
    cmax = max_confidence_nc(confusability, eta0)
    if c0 > cmax + API_TOL:
        return Feasibility(
            False, cmax, f"c0={c0} exceeds maximal noncontextual confidence {cmax}"
        )
    # swapping the inputs maps the largest confidence to the smallest
    if c0 < 1.0 - cmax - API_TOL:
        return Feasibility(False, cmax, f"c0={c0} below minimal noncontextual confidence {1.0 - cmax}")
    return Feasibility(True, cmax)


def _completeness_rows(nprog: NoncontextualProgram):
    """Rows forcing the four column sums ``sum_b M[l][b]`` to be equal.

    Written as ``(sum_b M_b)_ij - Tr[sum_b M_b mu_mixed] = 0``; the four rows
    sum to zero with weights ``mu_mixed_ij``, so the row with the largest
    weight is dropped.  Returns the rows and, per strategy, the list of kept
    entries.
    """
    mix = nprog.canonical_states["mixed"].m
    weights = [mix[j, i] for i, j in ENTRIES]
    drop = int(np.argmax(weights))
    kept = [e for e in range(4) if e != drop]
    rows = []
    for li, lam in enumerate(STRATEGIES):
        for e in kept:
            coeffs = {}
            for b in OUTCOMES:
                for f, (k, l) in enumerate(ENTRIES):
                    val = (1.0 if f == e else 0.0) - mix[l, k]
                    if val != 0.0:
                        coeffs[nprog.block_index(li, b, f)] = val
            rows.append(Constraint(coeffs, 0.0, f"complete[{lam.name}].{ENTRY_NAMES[e]}"))
    return rows, kept, drop


def build_primal_nc(nprog: NoncontextualProgram) -> ConicProblem:
    """108 nonnegative scalars, 27 completeness rows, normalization and the
    two rate-weighted statistics."""
    verdict = validate_statistics_nc(nprog.confusability, nprog.eta0, nprog.c0, nprog.priors)
    if not verdict:
        raise InfeasibleStatisticsError(verdict.reason)
    p = nprog.priors
    mu = nprog.prepared()
    # coefficient of entry (k, l) in Tr[M mu] is mu[l, k]
    coef = [np.array([mu[x][l, k] for k, l in ENTRIES]) for x in (0, 1)]
    mean = p[0] * coef[0] + p[1] * coef[1]

    blocks = tuple(
        Block(conic.NONNEG, f"M[{lam.name}][{b}].{name}")
        for lam in STRATEGIES
        for b in OUTCOMES
        for name in ENTRY_NAMES
    )
    objective = {}
    for li, lam in enumerate(STRATEGIES):
        for b in OUTCOMES:
            vec = sum((p[x] * coef[x] for x in (0, 1) if lam[x] == b), np.zeros(4))
            for e in range(4):
                if vec[e] != 0.0:
                    objective[nprog.block_index(li, b, e)] = float(vec[e])

    rows, _, _ = _completeness_rows(nprog)
    norm = {}
    for li in range(len(STRATEGIES)):
        for b in OUTCOMES:
            for e in range(4):
                if mean[e] != 0.0:
                    norm[nprog.block_index(li, b, e)] = float(mean[e])
    rows.append(Constraint(norm, 1.0, "normalization"))
    rate0, rate1 = nprog.eta0 * nprog.c0, nprog.eta0 * (1.0 - nprog.c0)
    rate0, rate1 = _snap_rate(rate0, p[0]), _snap_rate(rate1, p[1])
    for x, rhs in ((0, rate0), (1, rate1)):
        coeffs = {}
        for li in range(len(STRATEGIES)):
            for e in range(4):
                if coef[x][e] != 0.0:
                    coeffs[nprog.block_index(li, 0, e)] = float(p[x] * coef[x][e])
        rows.append(Constraint(coeffs, rhs, f"stat[x={x}]"))
    # every entry of sum_b M[l][b] equals q_l, so the entries sum to 4
    return ConicProblem(
        blocks, objective, tuple(rows), trace_bound=4.0,
        exposing=_exposing_vectors(nprog, rate0, rate1),
    )


def _exposing_vectors(nprog, rate0, rate1) -> tuple:
    """Noncontextual analogue of the quantum exposing vectors.

    A zero rate for input ``x`` pins outcome 0 off the support of ``mu_x``.
    A rate equal to ``p_x`` pins the other outcomes off the support of
    ``mu_x``: the completeness rows weighted by ``(mu_x - mu_mean)^T`` turn
    the normalization row into ``sum Tr[M mu_x]``, and subtracting the scaled
    row for ``x`` leaves only outcomes 1 and inconclusive.
    """
    n_comp = 3 * len(STRATEGIES)
    norm_row = n_comp
    out = []
    p = nprog.priors
    mu = nprog.prepared()
    mix = nprog.canonical_states["mixed"].m
    for x, rate in ((0, rate0), (1, rate1)):
        stat = n_comp + 1 + x
        if rate == 0.0 and p[x] > 0:
            out.append({stat: 1.0})
        elif rate == p[x] and p[x] > 0:
            diff = mu[x] - (p.p0 * mu[0] + p.p1 * mu[1])
            _, kept, drop = _completeness_rows(nprog)
            w = np.array([diff[j, i] for i, j in ENTRIES])
            mw = np.array([mix[j, i] for i, j in ENTRIES])
            # rewrite the dropped row through the kept ones
            w_kept = {e: w[e] - w[drop] * mw[e] / mw[drop] for e in kept}
            weights = {}
            for li in range(len(STRATEGIES)):
                for pos, e in enumerate(kept):
                    weights[3 * li + pos] = w_kept[e]
            weights[norm_row] = 1.0
            weights[stat] = -1.0 / p[x]
            out.append(weights)
    return tuple(out)


def pg_noncontextual(
    nprog: NoncontextualProgram, settings: SolverSettings | None = None
) -> CertificationResult:
    """Certified guessing probability of a noncontextual eavesdropper."""
    problem = build_primal_nc(nprog)
    try:
        return certify(problem, NONCONTEXTUAL, NONCONTEXTUAL, settings)
    except SolverFailure as exc:
        raise SolverFailure(
            f"noncontextual program (confusability={nprog.confusability}, "
            f"eta0={nprog.eta0}, c0={nprog.c0}): {exc}",
            exc.solution,
        ) from None


def pg_nc_device_quantum_eve(
    nprog: NoncontextualProgram, settings: SolverSettings | None = None
) -> CertificationResult:
    """Quantum eavesdropper facing statistics of a noncontextual device.

    Solves the quantum program at ``delta = sqrt(confusability)`` with the
    noncontextual program's ``(eta0, c0)``.
    """
    verdict = validate_statistics_nc(nprog.confusability, nprog.eta0, nprog.c0, nprog.priors)
    if not verdict:
        raise InfeasibleStatisticsError(verdict.reason)
    qp = QuantumProgram(math.sqrt(nprog.confusability), nprog.eta0, nprog.c0, nprog.priors)
    problem = build_primal(qp)
    try:
        return certify(problem, NONCONTEXTUAL, QUANTUM, settings)
    except SolverFailure as exc:
        raise SolverFailure(
            f"quantum program on noncontextual statistics (confusability="
            f"{nprog.confusability}, eta0={nprog.eta0}, c0={nprog.c0}): {exc}",
            exc.solution,
        ) from None


def honest_witness_nc(confusability: float, eta0: float, priors: Priors | None = None):
    """Single-strategy eavesdropper running the optimal-confidence response.

    Returns ``(strategy, responses, value)``.
    """
    priors = priors or Priors()
    if not priors.unbiased:
        raise UnsupportedConfigurationError("witness constructed for unbiased priors only")
    xi0 = optimal_response(confusability, eta0)
    xi1 = ResponseMatrix(np.ones((2, 2)) - xi0.m)
    responses = [xi0, xi1, ResponseMatrix(np.zeros((2, 2)))]
    st = epistemic_states(confusability)
    mus = (st["0"].m, st["1"].m)
    probs = np.array([[float(np.trace(r.m @ mu)) for r in responses] for mu in mus])
    eta = sum(priors[x] * probs[x, 0] for x in (0, 1))
    cmax = max_confidence_nc(confusability, eta0)
    if abs(eta - eta0) > 1e-9 or (eta > 0 and abs(priors[0] * probs[0, 0] / eta - cmax) > 1e-9):
        raise AssertionError(
            f"witness does not reproduce statistics: eta={eta}, eta0={eta0}, cmax={cmax}"
        )
    lam = (int(np.argmax(probs[0])), int(np.argmax(probs[1])))
    value = sum(priors[x] * probs[x, lam[x]] for x in (0, 1))
    return lam, responses, float(value)


def quantum_vs_nc_confidence(confusability: float, eta0: float) -> tuple[float, float]:
    """Maximal confidences of the two theories at ``delta^2 = confusability``."""
    return (
        max_confidence_quantum(math.sqrt(confusability), eta0),
        max_confidence_nc(confusability, eta0),
    )
