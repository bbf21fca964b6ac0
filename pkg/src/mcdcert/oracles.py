"""Independent reference computations for both certification pipelines.

Nothing here calls the conic solver.  The noncontextual oracle is exact (a
finite linear program solved by support enumeration); the quantum oracle
brackets the semidefinite value between a gridded primal mixture and a dual
point found by direct search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
import scipy.optimize
import scipy.spatial

from .noncontextual import NoncontextualProgram, honest_witness_nc, validate_statistics_nc
from .quantum import (
    QuantumProgram,
    _PAULI_XYZ,
    honest_witness_quantum,
    optimal_povm_element,
    validate_statistics_quantum,
)
from .result import InfeasibleStatisticsError
from .scenario import (
    NONCONTEXTUAL,
    OUTCOMES,
    QUANTUM,
    STRATEGIES,
    Overlap,
    PovmElement,
    Priors,
    ResponseMatrix,
    epistemic_states,
    state_pair,
)

WEIGHT_TOL = 1e-12


# -- noncontextual ------------------------------------------------------------


@dataclass(frozen=True)
class ExtremalResponseSet:
    """The 81 deterministic response triples.

    Each of the four ontic regions ``T0, T10, T10bar, T1`` is assigned wholly
    to one outcome.  Member ``k`` is a tuple of three :class:`ResponseMatrix`
    (outcomes 0, 1 and inconclusive).
    """

    members: tuple = field(default_factory=lambda: ExtremalResponseSet._enumerate())

    @staticmethod
    def _enumerate() -> tuple:
        cells = ((0, 0), (0, 1), (1, 0), (1, 1))
        out = []
        for assignment in product(OUTCOMES, repeat=4):
            mats = [np.zeros((2, 2)) for _ in OUTCOMES]
            for (i, j), b in zip(cells, assignment):
                mats[b][i, j] = 1.0
            out.append(tuple(ResponseMatrix(m) for m in mats))
        return tuple(out)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def contains_mixture(self, responses, tol: float = 1e-9) -> bool:
        """Whether ``responses`` is a convex combination of members.

        Region cells are independent, so it suffices that every cell is a
        probability vector over outcomes.
        """
        stack = np.array([r.m for r in responses])
        return bool(np.all(stack >= -tol) and np.allclose(stack.sum(axis=0), 1.0, atol=tol))


def _nc_columns(nprog: NoncontextualProgram):
    """Distinct ``(p(0|0), p(0|1))`` columns with their best guessing value.

    Columns are (strategy, extremal response) pairs.  Only the outcome-0
    statistics enter the constraints, so among columns sharing them only the
    largest objective can appear in an optimal mixture.
    """
    st = epistemic_states(nprog.confusability)
    mus = (st["0"].m, st["1"].m)
    p = nprog.priors
    best: dict[tuple, tuple] = {}
    for member in ExtremalResponseSet():
        probs = np.array([[float(np.trace(r.m @ mu)) for r in member] for mu in mus])
        key = tuple(member[0].m.astype(int).ravel())
        stats = (p[0] * probs[0, 0], p[1] * probs[1, 0])
        for lam in STRATEGIES:
            g = p[0] * probs[0, lam[0]] + p[1] * probs[1, lam[1]]
            # T10bar carries no weight for the prepared states
            k = (key[0], key[1], key[3])
            if k not in best or g > best[k][2]:
                best[k] = (stats[0], stats[1], g)
    return np.array(list(best.values()))


def _best_mixture(columns: np.ndarray, target: np.ndarray, tol: float = 1e-10):
    """Maximize ``g . w`` over ``w >= 0`` with ``sum w = 1`` and
    ``sum w (a, b) = target``, by enumerating supports of size at most 3.

    ``columns`` rows are ``(a, b, g)``.  Returns ``(value, support, weights)``
    or ``None`` if no support reproduces the target.
    """
    n = len(columns)
    lhs = np.vstack([np.ones(n), columns[:, 0], columns[:, 1]])
    rhs = np.array([1.0, target[0], target[1]])
    best = None
    for size in (1, 2, 3):
        for support in combinations(range(n), size):
            sub = lhs[:, support]
            w, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
            if np.abs(sub @ w - rhs).max() > tol or w.min() < -WEIGHT_TOL:
                continue
            val = float(columns[list(support), 2] @ w)
            if best is None or val > best[0]:
                best = (val, support, w)
    return best


def nc_vertex_oracle(nprog: NoncontextualProgram) -> float:
    """Exact noncontextual guessing probability by support enumeration."""
    verdict = validate_statistics_nc(nprog.confusability, nprog.eta0, nprog.c0, nprog.priors)
    if not verdict:
        raise InfeasibleStatisticsError(verdict.reason)
    target = np.array([nprog.eta0 * nprog.c0, nprog.eta0 * (1.0 - nprog.c0)])
    found = _best_mixture(_nc_columns(nprog), target)
    if found is None:
        raise InfeasibleStatisticsError("no mixture of extremal responses reproduces the statistics")
    return found[0]


# -- quantum: primal grid -------------------------------------------------------


def _sqrtm_psd(mats: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mats)
    return (v * np.sqrt(np.maximum(w, 0.0))[..., None, :]) @ np.swapaxes(v, -1, -2)


def _povm_values(pi0: np.ndarray, rho, priors: Priors) -> np.ndarray:
    """Best guessing value of any strategy whose outcome-0 element is ``pi0``
    (a stack of real 2x2 matrices).

    The remainder ``Q = I - pi0`` is split between outcomes 1 and
    inconclusive in the way that suits the strategy; when the strategy guesses
    a different non-zero outcome for each input the best split is worth
    ``Tr[(Q^1/2 D Q^1/2)_+]`` with ``D = p0 rho0 - p1 rho1`` on top of
    ``p1 Tr[Q rho1]``.
    """
    q = np.eye(2) - pi0
    p0, p1 = priors.p0, priors.p1
    r0, r1 = np.real(rho[0]), np.real(rho[1])
    a0, a1 = np.einsum("nij,ji->n", pi0, r0), np.einsum("nij,ji->n", pi0, r1)
    c0, c1 = np.einsum("nij,ji->n", q, r0), np.einsum("nij,ji->n", q, r1)
    qh = _sqrtm_psd(q)
    split = np.linalg.eigvalsh(qh @ (p0 * r0 - p1 * r1) @ qh)
    values = np.stack([
        p0 * a0 + p1 * a1, p0 * a0 + p1 * c1, p0 * c0 + p1 * a1, p0 * c0 + p1 * c1,
        p1 * c1 + np.maximum(split, 0.0).sum(axis=1),
    ])
    return values.max(axis=0)


def _grid_elements(qp: QuantumProgram, angles: int, radial: int):
    """Outcome-0 elements in the X-Z plane: a rank-one grid, a full-weight
    grid of shrinking Bloch radius, the critical directions and the honest
    optimal element."""
    phi = math.acos(min(1.0, max(0.0, qp.delta)))
    thetas = np.linspace(0.0, 2.0 * math.pi, angles, endpoint=False)
    levels = np.linspace(0.0, 1.0, radial)
    out = [np.zeros((2, 2)), np.eye(2)]
    for th in thetas:
        for t in levels[1:]:
            out.append(PovmElement(t, 1.0, th).matrix())
            out.append(PovmElement(2.0 - t, t / (2.0 - t), th).matrix())
    for th in (phi + math.pi, 2.0 * math.pi - phi, math.pi - phi, phi):
        for t in np.linspace(0.0, 1.0, 4 * radial + 1)[1:]:
            out.append(PovmElement(t, 1.0, th).matrix())
            out.append(PovmElement(2.0 - t, t / (2.0 - t), th).matrix())
    if qp.priors.unbiased:
        out.append(optimal_povm_element(qp.delta, qp.eta0).matrix())
    return out


def _upper_hull_value(columns: np.ndarray, target: np.ndarray):
    """Concave envelope of ``g`` over ``(a, b)`` at ``target``.

    Optimal supports of the mixture problem are vertices of upper facets of
    the 3-d hull, so only those are enumerated.  Degenerate (flat) point sets
    fall back to enumeration over the hull vertices in the plane.
    """
    try:
        hull = scipy.spatial.ConvexHull(columns)
    except scipy.spatial.QhullError:
        keep = _planar_candidates(columns)
        return _best_mixture(columns[keep], target)
    upper = hull.simplices[hull.equations[:, 2] > 0]
    tri = columns[upper][:, :, :2]
    edge1, edge2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    det = edge1[:, 0] * edge2[:, 1] - edge1[:, 1] * edge2[:, 0]
    rel = target[None, :] - tri[:, 0]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = (rel[:, 0] * edge2[:, 1] - rel[:, 1] * edge2[:, 0]) / det
        v = (edge1[:, 0] * rel[:, 1] - edge1[:, 1] * rel[:, 0]) / det
        slack = 1e-9
        inside = (u >= -slack) & (v >= -slack) & (u + v <= 1 + slack) & (np.abs(det) > 1e-300)
    best = None
    for simplex in upper[inside]:
        found = _best_mixture(columns[simplex], target)
        if found is not None and (best is None or found[0] > best[0]):
            best = found
    return best


def _planar_candidates(columns: np.ndarray) -> np.ndarray:
    """Indices worth enumerating when the points do not span 3-d: the best
    point per distinct ``(a, b)`` location on the hull of those locations."""
    keys = np.round(columns[:, :2], 12)
    best = {}
    for i, k in enumerate(map(tuple, keys)):
        if k not in best or columns[i, 2] > columns[best[k], 2]:
            best[k] = i
    idx = np.array(sorted(best.values()))
    pts = columns[idx, :2]
    try:
        hull2 = scipy.spatial.ConvexHull(pts)
        extra = np.argsort(-columns[idx, 2])[:20]
        return np.unique(np.concatenate([idx[hull2.vertices], idx[extra]]))
    except scipy.spatial.QhullError:
        order = np.lexsort((-columns[idx, 2], pts[:, 1], pts[:, 0]))
        return idx[np.unique(np.concatenate([order[:1], order[-1:], np.argsort(-columns[idx, 2])[:20]]))]


# -- quantum: dual search ----------------------------------------------------------


class _DualCuts:
    """Dual points of the quantum program by an outer-approximation LP.

    Variables are ``(nu0, nu1, chi)`` and the X and Z components of ``H``
    for each strategy; every state and Pauli matrix is real, so ``H`` can be
    taken real.  ``K <= 0`` holds iff ``v^T K v <= 0`` for every real unit
    ``v``, which is linear in the variables: the LP keeps these cuts for a
    grid of directions plus the top eigenvectors of previous iterates.
    The LP solution is then made exactly feasible by lowering ``chi``.
    """

    def __init__(self, qp: QuantumProgram, rho, angles: int, box: float = 1e4):
        self.p = qp.priors
        self.rho = [np.real(r) for r in rho]
        self.mixed = self.p[0] * self.rho[0] + self.p[1] * self.rho[1]
        self.sigmas = (np.real(_PAULI_XYZ[0]), np.real(_PAULI_XYZ[2]))
        self.box = box
        theta = np.linspace(0.0, math.pi, angles, endpoint=False)
        self.directions = [np.array([math.cos(t), math.sin(t)]) for t in theta]

    @property
    def n_vars(self) -> int:
        return 3 + 2 * len(STRATEGIES)

    def _cut(self, li, b, v):
        """Row ``(coeffs, const)`` of ``v^T K[l][b] v <= 0``."""
        lam = STRATEGIES[li]
        row = np.zeros(self.n_vars)
        q = [float(v @ r @ v) for r in self.rho]
        const = sum(self.p[x] * q[x] for x in (0, 1) if lam[x] == b)
        if b == 0:
            row[0], row[1] = self.p[0] * q[0], self.p[1] * q[1]
        row[2] = float(v @ self.mixed @ v)
        row[3 + 2 * li] = float(v @ self.sigmas[0] @ v)
        row[4 + 2 * li] = float(v @ self.sigmas[1] @ v)
        return row, const

    def constraint_matrices(self, z):
        out = []
        for li, lam in enumerate(STRATEGIES):
            H = z[3 + 2 * li] * self.sigmas[0] + z[4 + 2 * li] * self.sigmas[1]
            for b in OUTCOMES:
                K = H + sum(
                    self.p[x] * self.rho[x] * ((lam[x] == b) + z[x] * (b == 0) + z[2])
                    for x in (0, 1)
                )
                out.append((li, b, K))
        return out

    def search(self, rates, rounds: int = 40):
        rows, rhs = [], []
        for li in range(len(STRATEGIES)):
            for b in OUTCOMES:
                for v in self.directions:
                    row, const = self._cut(li, b, v)
                    rows.append(row)
                    rhs.append(-const)
        cost = np.zeros(self.n_vars)
        cost[0], cost[1], cost[2] = -rates[0], -rates[1], -1.0
        best = None
        for _ in range(rounds):
            res = scipy.optimize.linprog(
                cost, A_ub=np.array(rows), b_ub=np.array(rhs),
                bounds=[(-self.box, self.box)] * self.n_vars, method="highs",
            )
            if res.status != 0:
                break
            z = res.x
            cand = self.repair(z, rates)
            if best is None or cand[0] < best[0]:
                best = cand
            added = 0
            for li, b, K in self.constraint_matrices(z):
                w, vecs = np.linalg.eigh(K)
                if w[-1] > 1e-13:
                    row, const = self._cut(li, b, vecs[:, -1])
                    rows.append(row)
                    rhs.append(-const)
                    added += 1
            if not added:
                break
        return best

    def repair(self, z, rates):
        """Lower ``chi`` until every ``K`` is negative semidefinite and
        return ``(bound, z)``."""
        w, v = np.linalg.eigh(self.mixed)
        r = (v / np.sqrt(w)) @ v.T
        need = max(float(np.linalg.eigvalsh(r @ K @ r)[-1]) for _, _, K in self.constraint_matrices(z))
        z = np.array(z, dtype=float)
        # margin covers round-off in the eigenvalue test
        z[2] -= max(need, 0.0) + 1e-13 * (1.0 + np.abs(z).max())
        return -float(z[0] * rates[0] + z[1] * rates[1]) - z[2], z


@dataclass(frozen=True)
class GridBounds:
    lower: float
    upper: float
    lower_found: bool
    dual_point: tuple = ()

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def brackets(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def quantum_grid_oracle(
    qp: QuantumProgram, grid_resolution: int = 720, radial: int = 11, dual_search: bool = True
) -> GridBounds:
    """Bracket the quantum guessing probability without the conic solver.

    Lower bound: best mixture of gridded outcome-0 elements (each with its
    own best strategy) reproducing the statistics.  Upper bound: a dual
    point ``(nu, chi, H)`` from an outer-approximation LP, repaired to exact
    feasibility.  The trivial point ``nu = 0, chi = -1,
    H = 0`` gives 1 and is used when the mixed state is singular.
    If no grid mixture reproduces the statistics the lower bound widens to 0;
    with ``dual_search`` off the upper bound is the trivial one.
    """
    verdict = validate_statistics_quantum(qp.delta, qp.eta0, qp.c0, qp.priors)
    if not verdict:
        raise InfeasibleStatisticsError(verdict.reason)
    rho = qp.density_matrices()
    p = qp.priors
    mixed = p[0] * rho[0] + p[1] * rho[1]
    rates = np.array([qp.eta0 * qp.c0, qp.eta0 * (1.0 - qp.c0)])

    elements = np.real(np.array(_grid_elements(qp, grid_resolution, radial)))
    cols = np.column_stack([
        p[0] * np.einsum("nij,ji->n", elements, np.real(rho[0])),
        p[1] * np.einsum("nij,ji->n", elements, np.real(rho[1])),
        _povm_values(elements, rho, p),
    ])
    found = _upper_hull_value(cols, rates)
    lower = found[0] if found is not None else 0.0

    upper, nu, hs = 1.0, (0.0, 0.0), ()
    if dual_search and np.linalg.eigvalsh(np.real(mixed))[0] > 1e-9:
        found_dual = _DualCuts(qp, rho, 90).search(rates)
        if found_dual is not None and found_dual[0] < upper:
            upper, z = found_dual
            nu = (float(z[0]), float(z[1]))
            hs = tuple((float(z[3 + 2 * k]), float(z[4 + 2 * k])) for k in range(len(STRATEGIES)))
    return GridBounds(min(lower, upper), upper, found is not None, (nu, hs))


# -- witnesses and dual cross-check --------------------------------------------------


@dataclass(frozen=True)
class Witness:
    theory: str
    strategy: tuple[int, int]
    elements: tuple
    value: float


def honest_strategy_witness(theory: str, overlap: Overlap, eta0: float) -> Witness:
    """The optimal-confidence measurement run by a single-strategy
    eavesdropper; its value is a lower bound on the certified guessing
    probability.  Raises ``AssertionError`` if the construction fails to
    reproduce the maximal-confidence statistics."""
    if theory == QUANTUM:
        lam, els, val = honest_witness_quantum(overlap.delta, eta0)
        return Witness(QUANTUM, lam, tuple(els), val)
    if theory == NONCONTEXTUAL:
        lam, els, val = honest_witness_nc(overlap.confusability, eta0)
        return Witness(NONCONTEXTUAL, lam, tuple(els), val)
    raise ValueError(f"unknown theory {theory!r}")


@dataclass(frozen=True)
class DualPoint:
    """Dual variables in physical form: ``nu`` for the two statistics rows,
    ``chi`` for normalization and one completeness matrix per strategy."""

    nu: tuple[float, float]
    chi: float
    completeness: tuple


@dataclass(frozen=True)
class CrossCheckReport:
    max_violation: float
    bound: float
    valid: bool


def dual_point_from_multipliers(program, multipliers) -> DualPoint:
    """Translate solver multipliers (rows in builder order) to
    ``(nu, chi, H)``.  The solver's dual slack is ``-K``, so each physical
    variable is the negated multiplier."""
    y = -np.asarray(multipliers, dtype=float)
    n_comp = 3 * len(STRATEGIES)
    hs = []
    if isinstance(program, QuantumProgram):
        for li in range(len(STRATEGIES)):
            hs.append(sum(y[3 * li + a] * _PAULI_XYZ[a] for a in range(3)))
    else:
        from .noncontextual import ENTRIES, _completeness_rows

        _, kept, _ = _completeness_rows(program)
        for li in range(len(STRATEGIES)):
            H = np.zeros((2, 2))
            for pos, e in enumerate(kept):
                i, j = ENTRIES[e]
                H[j, i] = y[3 * li + pos]
            hs.append(H)
    return DualPoint((y[n_comp + 1], y[n_comp + 2]), y[n_comp], tuple(hs))


def duality_cross_check(program, dual: DualPoint, tol: float = 1e-7) -> CrossCheckReport:
    """Rebuild every ``K[l][b]`` from the physical states and report the
    worst violation of ``K <= 0`` (quantum: largest eigenvalue;
    noncontextual: largest entry)."""
    p = program.priors
    if isinstance(program, QuantumProgram):
        states = [s.density_matrix() for s in state_pair(program.delta)]
        half = 0.5 * np.eye(2)

        def adjust(H):
            return H - np.real(np.trace(H)) * half

        def worst(K):
            return float(np.linalg.eigvalsh(0.5 * (K + K.conj().T))[-1])

    else:
        st = epistemic_states(program.confusability)
        states = [st["0"].m, st["1"].m]
        mix = st["mixed"].m

        def adjust(H):
            return H - float(np.sum(H)) * mix

        def worst(K):
            return float(np.max(np.real(K)))

    viol = -math.inf
    for lam, H in zip(STRATEGIES, dual.completeness):
        for b in OUTCOMES:
            K = sum(
                p[x] * states[x] * ((lam[x] == b) + dual.nu[x] * (b == 0) + dual.chi)
                for x in (0, 1)
            ) + adjust(np.asarray(H))
            viol = max(viol, worst(K))
    rates = (program.eta0 * program.c0, program.eta0 * (1.0 - program.c0))
    bound = -(dual.nu[0] * rates[0] + dual.nu[1] * rates[1]) - dual.chi
    viol = max(viol, 0.0)
    return CrossCheckReport(viol, float(bound), viol <= tol)
