"""Guessing probability against a quantum eavesdropper.

The eavesdropper holds a classical label of one of nine deterministic guessing
strategies ``(lambda0, lambda1)``; each strategy carries its own three-outcome
qubit POVM.  With sub-normalized POVM elements ``M[l][b] = q_l Pi_l_b`` the
problem becomes a semidefinite program over 27 Hermitian 2x2 blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conic
from .conic import Block, Constraint, ConicProblem, SolverSettings
from .result import (
    CertificationResult,
    Feasibility,
    InfeasibleStatisticsError,
    SolverFailure,
)
from .scenario import (
    API_TOL,
    INCONCLUSIVE,
    OUTCOMES,
    QUANTUM,
    STRATEGIES,
    DomainError,
    PovmElement,
    Priors,
    QubitState,
    UndefinedConfidenceError,
    UnsupportedConfigurationError,
    _check_unit,
    state_pair,
)

FACE_SNAP = 1e-12
_BELOW_ONE = math.nextafter(1.0, 0.0)

_PAULI_XYZ = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class QuantumProgram:
    delta: float
    eta0: float
    c0: float
    priors: Priors = Priors()

    def __post_init__(self):
        _check_unit("delta", self.delta, 0.0)
        _check_unit("eta0", self.eta0)
        _check_unit("c0", self.c0)

    @property
    def fixed_states(self) -> tuple[QubitState, QubitState]:
        return state_pair(self.delta)

    def density_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        s0, s1 = self.fixed_states
        return s0.density_matrix(), s1.density_matrix()

    def block_index(self, strategy: int, outcome: int) -> int:
        return 3 * strategy + outcome


def max_confidence_quantum(delta: float, eta0: float, priors: Priors | None = None) -> float:
    """Largest confidence ``C0`` a qubit measurement reaches at rate ``eta0``.

    Three regimes: ``Pi0`` a sub-normalized projector orthogonal to the second
    state (C0 = 1), a rank-one projector rotating towards the first state, and
    the complement of a sub-normalized projector orthogonal to the first
    state (C0 = 1 / (2 eta0)).
    """
    if priors is not None and not priors.unbiased:
        raise UnsupportedConfigurationError("maximum confidence derived for unbiased priors only")
    _check_unit("delta", delta, 0.0)
    _check_unit("eta0", eta0)
    if eta0 <= 0.0:
        raise UndefinedConfidenceError("eta0 = 0: confidence undefined")
    eta0 = min(eta0, 1.0)
    d2 = delta * delta
    lo, hi = 0.5 * (1.0 - d2), 0.5 * (1.0 + d2)
    if eta0 <= lo:
        return 1.0
    if eta0 >= hi:
        return 1.0 / (2.0 * eta0)
    c = min(1.0, max(-1.0, (2.0 * eta0 - 1.0) / delta))
    # 1 - C0 written without cancellation; it vanishes quadratically at the
    # lower boundary, so round down to keep C0 < 1 strictly inside
    shift = (2.0 * eta0 - 1.0 + d2) / delta
    denom = 1.0 + delta * c + math.sqrt(max(0.0, (1.0 - c * c) * (1.0 - d2)))
    deficit = shift * shift / (4.0 * eta0 * denom)
    if deficit <= 0.0:
        return 1.0
    return min(1.0 - deficit, _BELOW_ONE)


def optimal_povm_element(delta: float, eta0: float) -> PovmElement:
    """The outcome-0 element reaching :func:`max_confidence_quantum`."""
    _check_unit("eta0", eta0)
    phi = math.acos(min(1.0, max(0.0, delta)))
    d2 = delta * delta
    lo, hi = 0.5 * (1.0 - d2), 0.5 * (1.0 + d2)
    if eta0 <= lo:
        weight = 2.0 * eta0 / (1.0 - d2) if d2 < 1 else 0.0
        return PovmElement(weight, 1.0, phi + math.pi)
    if eta0 >= hi:
        comp = 2.0 * (1.0 - eta0) / (1.0 - d2) if d2 < 1 else 0.0
        weight = 2.0 - comp
        return PovmElement(weight, comp / weight, 2.0 * math.pi - phi)
    c = min(1.0, max(-1.0, (2.0 * eta0 - 1.0) / delta))
    return PovmElement(1.0, 1.0, 2.0 * math.pi - math.acos(c))


def validate_statistics_quantum(
    delta: float, eta0: float, c0: float, priors: Priors | None = None
) -> Feasibility:
    priors = priors or Priors()
    for name, val in (("delta", delta), ("eta0", eta0), ("c0", c0)):
        if not (-API_TOL <= val <= 1 + API_TOL):
            return Feasibility(False, math.nan, f"{name} outside [0, 1]")
    if eta0 <= 0.0:
        return Feasibility(False, math.nan, "eta0 = 0: confidence undefined")
    if c0 * eta0 > priors.p0 + API_TOL:
        return Feasibility(False, math.nan, "eta0*c0 exceeds p0")
    if (1.0 - c0) * eta0 > priors.p1 + API_TOL:
        return Feasibility(False, math.nan, "eta0*(1-c0) exceeds p1")
    if not priors.unbiased:
        # no closed form; the solver decides
        return Feasibility(True, math.nan, "biased priors: only necessary conditions checked")
    cmax = max_confidence_quantum(delta, eta0)
    if c0 > cmax + API_TOL:
        return Feasibility(False, cmax, f"c0={c0} exceeds maximal quantum confidence {cmax}")
    # swapping the inputs maps the largest confidence to the smallest
    if c0 < 1.0 - cmax - API_TOL:
        return Feasibility(False, cmax, f"c0={c0} below minimal quantum confidence {1.0 - cmax}")
    return Feasibility(True, cmax)


def _snap_rate(rate: float, prior: float) -> float:
    if abs(rate) <= FACE_SNAP:
        return 0.0
    if abs(rate - prior) <= FACE_SNAP:
        return prior
    return rate


def build_primal(qp: QuantumProgram) -> ConicProblem:
    """27 PSD blocks ``M[l][b]`` and 30 equality rows.

    Rows: three Pauli components of ``sum_b M[l][b]`` vanish for each strategy
    (the sum is a multiple of the identity), then normalization, then the two
    rate-weighted statistics ``p0 Tr[M_0 rho0] = eta0 c0`` and
    ``p1 Tr[M_0 rho1] = eta0 (1 - c0)``.
    """
    verdict = validate_statistics_quantum(qp.delta, qp.eta0, qp.c0, qp.priors)
    if not verdict:
        raise InfeasibleStatisticsError(verdict.reason)
    rho = qp.density_matrices()
    p = qp.priors
    mixed = p[0] * rho[0] + p[1] * rho[1]

    blocks = tuple(
        Block(conic.PSD2, f"M[{lam.name}][{b}]") for lam in STRATEGIES for b in OUTCOMES
    )
    objective = {}
    for li, lam in enumerate(STRATEGIES):
        for b in OUTCOMES:
            coeff = sum(p[x] * rho[x] for x in (0, 1) if lam[x] == b)
            if not np.isscalar(coeff):
                objective[qp.block_index(li, b)] = coeff

    rows = []
    for li, lam in enumerate(STRATEGIES):
        for axis, sigma in zip("xyz", _PAULI_XYZ):
            coeffs = {qp.block_index(li, b): sigma for b in OUTCOMES}
            rows.append(Constraint(coeffs, 0.0, f"complete[{lam.name}].{axis}"))
    all_blocks = range(len(blocks))
    rows.append(Constraint({k: mixed for k in all_blocks}, 1.0, "normalization"))
    rate0, rate1 = qp.eta0 * qp.c0, qp.eta0 * (1.0 - qp.c0)
    # snap round-off so the exposing vectors below are exact
    rate0, rate1 = _snap_rate(rate0, p[0]), _snap_rate(rate1, p[1])
    zero_blocks = [qp.block_index(li, 0) for li in range(len(STRATEGIES))]
    rows.append(Constraint({k: p[0] * rho[0] for k in zero_blocks}, rate0, "stat[x=0]"))
    rows.append(Constraint({k: p[1] * rho[1] for k in zero_blocks}, rate1, "stat[x=1]"))
    # sum_l,b Tr M[l][b] = 2 sum_l q_l = 2
    return ConicProblem(
        blocks, objective, tuple(rows), trace_bound=2.0,
        exposing=_exposing_vectors(qp, rho, rate0, rate1),
    )


def _exposing_vectors(qp, rho, rate0, rate1) -> tuple:
    """Row combinations proving that the statistics pin some blocks to a face.

    A zero rate for input ``x`` makes every outcome-0 element orthogonal to
    ``rho_x``.  A rate equal to ``p_x`` means the outcome-0 elements catch
    all of ``rho_x``, so the other outcomes are orthogonal to it:
    normalization plus the Pauli rows rewrite ``sum_l,b Tr[M rho_x]`` and
    subtracting the scaled row for ``x`` leaves
    ``sum_l sum_(b != 0) Tr[M_b rho_x] = 0``.
    """
    n_pauli = 3 * len(STRATEGIES)
    norm_row = n_pauli
    p = qp.priors
    mixed = p[0] * rho[0] + p[1] * rho[1]
    out = []
    for x, rate in ((0, rate0), (1, rate1)):
        stat = n_pauli + 1 + x
        if rate == 0.0 and p[x] > 0:
            out.append({stat: 1.0})
        elif rate == p[x] and p[x] > 0:
            comps = _pauli_components(rho[x] - mixed)
            weights = {3 * li + a: comps[a] for li in range(len(STRATEGIES)) for a in range(3)}
            weights[norm_row] = 1.0
            weights[stat] = -1.0 / p[x]
            out.append(weights)
    if 0.0 < rate0 < p[0] and 0.0 < rate1 < p[1] and p.unbiased:
        el = optimal_povm_element(qp.delta, qp.eta0)
        # the smallest confidence is reached by the mirror image across Z
        if rate0 < rate1:
            el = PovmElement(el.weight, el.radius, 2.0 * math.pi - el.theta)
        hint = _supporting_vector(qp, rho, el)
        if hint is not None:
            out.append(hint)
    return tuple(out)


def _pauli_components(mat) -> list[float]:
    return [0.5 * float(np.real(np.trace(mat @ sg))) for sg in _PAULI_XYZ]


def _supporting_vector(qp, rho, el):
    """Exposing vector at extremal confidence between the UI regions.

    There the outcome-0 element ``el`` is a rank-one projector
    ``P = |v><v|``.  With ``Z = a p0 rho0 + b p1 rho1`` chosen to have ``v``
    as eigenvector (positive eigenvalue ``mu``, the other negative),
    ``Tr[Pi0 Z] <= mu`` for every ``0 <= Pi0 <= 1`` with equality only on the
    face, so ``mu * normalization - a * stat0 - b * stat1`` plus the Pauli
    rows is the required combination.  Invalid when the statistics are off
    the boundary; the solver then ignores it.
    """
    if abs(el.weight - 1.0) > 1e-12 or abs(el.radius - 1.0) > 1e-12:
        return None
    pi0 = np.real(el.matrix())
    _, vecs = np.linalg.eigh(pi0)
    w, v = vecs[:, 0], vecs[:, 1]
    psi = [np.linalg.eigh(np.real(r))[1][:, 1] for r in rho]
    p = qp.priors
    a = p[1] * (w @ psi[1]) * (psi[1] @ v)
    b = -p[0] * (w @ psi[0]) * (psi[0] @ v)
    Z = a * p[0] * np.real(rho[0]) + b * p[1] * np.real(rho[1])
    if v @ Z @ v < 0:
        a, b, Z = -a, -b, -Z
    mu, nu = float(v @ Z @ v), float(w @ Z @ w)
    if not (mu > 0 > nu) or abs(w @ Z @ v) > 1e-12 * (abs(mu) + abs(nu)):
        return None
    scale = 1.0 / mu
    mixed = p[0] * rho[0] + p[1] * rho[1]
    comps = _pauli_components(np.outer(v, v) - mixed)
    n_pauli = 3 * len(STRATEGIES)
    weights = {3 * li + k: comps[k] for li in range(len(STRATEGIES)) for k in range(3)}
    weights[n_pauli] = 1.0
    weights[n_pauli + 1] = -a * scale
    weights[n_pauli + 2] = -b * scale
    return weights


def certify(problem: ConicProblem, device: str, adversary: str, settings=None) -> CertificationResult:
    sol = conic.solve(problem, settings)
    if not sol.optimal:
        raise SolverFailure(f"solver status {sol.status}", sol)
    report = conic.check_dual_certificate(problem, sol)
    return CertificationResult(
        p_guess=min(1.0, sol.primal_value),
        adversary=adversary,
        device=device,
        status=sol.status,
        gap=sol.gap,
        certificate_valid=report.valid,
        certificate_violation=report.max_violation,
        problem=problem,
        solution=sol,
    )


def pg_quantum(qp: QuantumProgram, settings: SolverSettings | None = None) -> CertificationResult:
    """Certified guessing probability of a quantum eavesdropper."""
    problem = build_primal(qp)
    try:
        return certify(problem, QUANTUM, QUANTUM, settings)
    except SolverFailure as exc:
        raise SolverFailure(
            f"quantum program (delta={qp.delta}, eta0={qp.eta0}, c0={qp.c0}): {exc}",
            exc.solution,
        ) from None


def honest_witness_quantum(delta: float, eta0: float, priors: Priors | None = None):
    """Single-strategy eavesdropper running the optimal-confidence measurement.

    Returns ``(strategy, povm, value)`` where ``povm`` lists the three element
    matrices and ``value`` is the eavesdropper's guessing probability, a lower
    bound on the certified one.
    """
    priors = priors or Priors()
    if not priors.unbiased:
        raise UnsupportedConfigurationError("witness constructed for unbiased priors only")
    el = optimal_povm_element(delta, eta0)
    pi0 = el.matrix()
    povm = [pi0, np.eye(2) - pi0, np.zeros((2, 2), dtype=complex)]
    rho = [s.density_matrix() for s in state_pair(delta)]
    probs = np.array([[np.real(np.trace(P @ r)) for P in povm] for r in rho])
    eta = sum(priors[x] * probs[x, 0] for x in (0, 1))
    cmax = max_confidence_quantum(delta, eta0)
    if abs(eta - eta0) > 1e-9 or (eta > 0 and abs(priors[0] * probs[0, 0] / eta - cmax) > 1e-9):
        raise AssertionError(
            f"witness does not reproduce statistics: eta={eta}, eta0={eta0}, cmax={cmax}"
        )
    lam = (int(np.argmax(probs[0])), int(np.argmax(probs[1])))
    value = sum(priors[x] * probs[x, lam[x]] for x in (0, 1))
    return lam, povm, float(value)


def nudge_eta0(eta0: float, boundaries, eps: float = 1e-9) -> tuple[float, bool]:
    """Move ``eta0`` off any boundary it sits on (within ``eps``) into the
    closed UI region it already belongs to."""
    lo, hi = boundaries
    if abs(eta0 - lo) <= eps and 0.0 < lo:
        return lo - eps, True
    if abs(eta0 - hi) <= eps and hi < 1.0:
        return hi + eps, True
    return eta0, False


__all__ = [
    "QuantumProgram",
    "build_primal",
    "pg_quantum",
    "max_confidence_quantum",
    "optimal_povm_element",
    "validate_statistics_quantum",
    "honest_witness_quantum",
    "nudge_eta0",
    "DomainError",
    "INCONCLUSIVE",
]
