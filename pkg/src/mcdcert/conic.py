"""Small block-diagonal conic programs.

Solves

    maximize    sum_k <C_k, X_k>
    subject to  sum_k <A_ik, X_k> = b_i,   i = 1..m
                X_k in K_k

where every block ``K_k`` is either the cone of 2x2 Hermitian positive
semidefinite matrices (``psd2``) or the nonnegative half-line (``nonneg``).
The inner product is ``Re Tr[A X]`` for matrix blocks and the ordinary
product for scalar blocks.

The dual program is

    minimize    b^T y
    subject to  S_k = sum_i y_i A_ik - C_k in K_k.

Internally a 2x2 Hermitian block is written in the orthonormal basis
``{I, sx, sy, sz} / sqrt(2)``, which maps the PSD cone isometrically onto the
4-dimensional second-order cone.  Eigenvalues, determinants, the Nesterov-Todd
scaling and step-to-boundary computations therefore all have closed forms.

The algorithm is a primal-dual path-following method on the homogeneous
self-dual embedding with Mehrotra predictor-corrector steps.  Infeasible or
unbounded programs are detected from the embedding's certificates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

PSD2 = "psd2"
NONNEG = "nonneg"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max-iterations"

_SQRT2 = math.sqrt(2.0)
_PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class ConicError(ValueError):
    """Malformed conic program."""


class DegenerateConstraintError(ConicError):
    """A constraint row has zero norm."""


class DualInfeasibleError(ValueError):
    """The multipliers do not certify a bound."""


@dataclass(frozen=True)
class Block:
    kind: str
    label: str = ""

    def __post_init__(self):
        if self.kind not in (PSD2, NONNEG):
            raise ConicError(f"unknown block kind {self.kind!r}")

    @property
    def size(self) -> int:
        return 4 if self.kind == PSD2 else 1


@dataclass(frozen=True)
class Constraint:
    """One equality row: ``sum_k <coeffs[k], X_k> = rhs``.

    ``coeffs`` maps block index to a 2x2 Hermitian matrix (``psd2``) or a
    float (``nonneg``); absent blocks have coefficient zero.
    """

    coeffs: Mapping[int, object]
    rhs: float
    label: str = ""


@dataclass(frozen=True)
class ConicProblem:
    """A maximization program over a product of ``psd2`` and ``nonneg`` cones.

    ``trace_bound``, when known, bounds ``sum_k Tr X_k`` over the feasible set
    (scalar blocks count as their value).  It turns any dual point, feasible or
    not, into a rigorous upper bound (see :func:`extract_bound`).

    ``row_scale`` is set by :func:`scale_and_precondition`: row ``i`` of this
    problem equals row ``i`` of the original divided by ``row_scale[i]``.

    ``exposing`` lists known exposing vectors as maps from row index to
    weight.  Each combination ``y`` must satisfy ``b^T y = 0`` with
    ``sum_i y_i A_ik`` in the cone for every block; it then proves that every
    feasible point lies on a proper face, which :func:`restrict_to_face` uses
    to remove the degeneracy before solving.
    """

    blocks: tuple[Block, ...]
    objective: Mapping[int, object]
    constraints: tuple[Constraint, ...]
    trace_bound: float | None = None
    row_scale: np.ndarray | None = field(default=None, compare=False)
    exposing: tuple = ()

    def __post_init__(self):
        nb = len(self.blocks)
        for k, coeff in self.objective.items():
            _check_coeff(self.blocks, k, coeff, "objective")
        for i, con in enumerate(self.constraints):
            if not np.isfinite(con.rhs):
                raise ConicError(f"constraint {i} has non-finite right-hand side")
            for k, coeff in con.coeffs.items():
                _check_coeff(self.blocks, k, coeff, f"constraint {i}")
        if nb == 0:
            raise ConicError("program has no blocks")

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def offsets(self) -> list[int]:
        out, pos = [], 0
        for blk in self.blocks:
            out.append(pos)
            pos += blk.size
        return out

    def standard_form(self):
        """Return ``(c, A, b)`` in the vectorized coordinates.

        Scalar blocks come first in the order they appear, followed by the
        ``psd2`` blocks (4 coordinates each); see :meth:`layout`.
        """
        order = self.layout()
        n = sum(blk.size for blk in self.blocks)
        c = np.zeros(n)
        for k, coeff in self.objective.items():
            c[order[k]] = _vectorize(self.blocks[k].kind, coeff)
        A = np.zeros((len(self.constraints), n))
        b = np.zeros(len(self.constraints))
        for i, con in enumerate(self.constraints):
            b[i] = con.rhs
            for k, coeff in con.coeffs.items():
                A[i, order[k]] = _vectorize(self.blocks[k].kind, coeff)
        return c, A, b

    def layout(self) -> list[slice]:
        """Slice of the standard-form vector owned by each block."""
        n_lp = sum(1 for blk in self.blocks if blk.kind == NONNEG)
        lp_pos, soc_pos = 0, n_lp
        out = []
        for blk in self.blocks:
            if blk.kind == NONNEG:
                out.append(slice(lp_pos, lp_pos + 1))
                lp_pos += 1
            else:
                out.append(slice(soc_pos, soc_pos + 4))
                soc_pos += 4
        return out

    def cone_dims(self) -> tuple[int, int]:
        n_lp = sum(1 for blk in self.blocks if blk.kind == NONNEG)
        return n_lp, len(self.blocks) - n_lp

    def restore_multipliers(self, y: np.ndarray) -> np.ndarray:
        """Map multipliers of this (scaled) problem back to the original rows."""
        if self.row_scale is None:
            return np.asarray(y, dtype=float).copy()
        return np.asarray(y, dtype=float) / self.row_scale


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float = 1e-10
    feas_tol: float = 1e-10
    infeas_tol: float = 1e-9
    max_iter: int = 200
    step_fraction: float = 0.99
    precondition: bool = True
    facial_reduction: bool = True
    polish: bool = True
    # retry tolerance when the tight one stalls (near-degenerate faces)
    fallback_tol: float | None = 1e-8
    debug: bool = False
    trace: Callable[[str], object] | None = None


@dataclass(frozen=True)
class ConicSolution:
    status: str
    primal_value: float
    dual_value: float
    gap: float
    primal_residual: float
    dual_residual: float
    primal_variables: tuple
    dual_multipliers: np.ndarray
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _check_coeff(blocks, k, coeff, where):
    if not 0 <= k < len(blocks):
        raise ConicError(f"{where}: block index {k} out of range")
    if blocks[k].kind == PSD2:
        mat = np.asarray(coeff, dtype=complex)
        if mat.shape != (2, 2):
            raise ConicError(f"{where}: psd2 coefficient must be 2x2")
        if not np.allclose(mat, mat.conj().T, atol=1e-12):
            raise ConicError(f"{where}: psd2 coefficient must be Hermitian")
    elif np.ndim(coeff) != 0:
        raise ConicError(f"{where}: nonneg coefficient must be a scalar")


def _vectorize(kind, coeff):
    if kind == NONNEG:
        return float(coeff)
    mat = np.asarray(coeff, dtype=complex)
    return np.real(np.einsum("kij,ji->k", _PAULI, mat)) / _SQRT2


def hermitian_from_vector(v) -> np.ndarray:
    """Inverse of the Pauli-basis vectorization of a 2x2 Hermitian matrix."""
    v = np.asarray(v, dtype=float)
    return np.einsum("k,kij->ij", v, _PAULI) / _SQRT2


def hermitian_to_vector(mat) -> np.ndarray:
    return _vectorize(PSD2, mat)


def psd2_eigenvalues(mat) -> tuple[float, float]:
    """Eigenvalues of a 2x2 Hermitian matrix, smallest first (closed form)."""
    v = hermitian_to_vector(mat)
    r = math.sqrt(v[1] ** 2 + v[2] ** 2 + v[3] ** 2)
    return (v[0] - r) / _SQRT2, (v[0] + r) / _SQRT2


# ---------------------------------------------------------------------------
# Cone algebra on the vectorized coordinates.  ``x`` is split into a scalar
# part of length n_lp and a (n_soc, 4) array of second-order-cone blocks.


class _Cones:
    def __init__(self, n_lp: int, n_soc: int):
        self.n_lp = n_lp
        self.n_soc = n_soc
        self.n = n_lp + 4 * n_soc
        self.degree = n_lp + 2 * n_soc
        self._J = np.diag([1.0, -1.0, -1.0, -1.0])

    def split(self, x):
        return x[: self.n_lp], x[self.n_lp :].reshape(self.n_soc, 4)

    def join(self, lp, soc):
        return np.concatenate([lp, soc.reshape(-1)])

    def identity(self):
        soc = np.zeros((self.n_soc, 4))
        soc[:, 0] = 1.0
        return self.join(np.ones(self.n_lp), soc)

    def product(self, u, v):
        ul, us = self.split(u)
        vl, vs = self.split(v)
        out = np.empty_like(us)
        out[:, 0] = np.einsum("ij,ij->i", us, vs)
        out[:, 1:] = us[:, :1] * vs[:, 1:] + vs[:, :1] * us[:, 1:]
        return self.join(ul * vl, out)

    def divide(self, lam, r):
        """Solve ``lam o w = r`` for ``w``."""
        ll, ls = self.split(lam)
        rl, rs = self.split(r)
        l0 = ls[:, 0]
        l1 = ls[:, 1:]
        det = l0**2 - np.einsum("ij,ij->i", l1, l1)
        w0 = (l0 * rs[:, 0] - np.einsum("ij,ij->i", l1, rs[:, 1:])) / det
        w1 = (rs[:, 1:] - w0[:, None] * l1) / l0[:, None]
        return self.join(rl / ll, np.column_stack([w0, w1]))

    def min_eig(self, x):
        """Smallest spectral value over all blocks (vector coordinates)."""
        xl, xs = self.split(x)
        vals = [np.inf]
        if self.n_lp:
            vals.append(xl.min())
        if self.n_soc:
            vals.append((xs[:, 0] - np.linalg.norm(xs[:, 1:], axis=1)).min())
        return float(min(vals))

    def max_step(self, x, d):
        """Largest ``a`` with ``x + a d`` in the cone, for interior ``x``."""
        xl, xs = self.split(x)
        dl, ds = self.split(d)
        alpha = np.inf
        if self.n_lp:
            neg = dl < 0
            if neg.any():
                alpha = min(alpha, float(np.min(-xl[neg] / dl[neg])))
        if self.n_soc:
            xjx = xs[:, 0] ** 2 - np.einsum("ij,ij->i", xs[:, 1:], xs[:, 1:])
            nrm = np.sqrt(np.maximum(xjx, 1e-300))
            xb = xs / nrm[:, None]
            rho0 = xb[:, 0] * ds[:, 0] - np.einsum("ij,ij->i", xb[:, 1:], ds[:, 1:])
            rho1 = ds[:, 1:] - ((rho0 + ds[:, 0]) / (xb[:, 0] + 1.0))[:, None] * xb[:, 1:]
            denom = np.linalg.norm(rho1, axis=1) - rho0
            pos = denom > 0
            if pos.any():
                alpha = min(alpha, float(np.min(nrm[pos] / denom[pos])))
        return alpha

    def nt_scaling(self, x, s):
        """Nesterov-Todd scaling ``W`` (dense, symmetric) with ``W s = W^-1 x``."""
        xl, xs = self.split(x)
        sl, ss = self.split(s)
        W = np.zeros((self.n, self.n))
        Winv = np.zeros((self.n, self.n))
        idx = np.arange(self.n_lp)
        d = np.sqrt(xl / sl)
        W[idx, idx] = d
        Winv[idx, idx] = 1.0 / d
        J = self._J
        for k in range(self.n_soc):
            xk, sk = xs[k], ss[k]
            a = math.sqrt(max(xk @ J @ xk, 1e-300))
            b = math.sqrt(max(sk @ J @ sk, 1e-300))
            xb, sb = xk / a, sk / b
            gamma = math.sqrt(max((1.0 + xb @ sb) / 2.0, 1e-300))
            wbar = (xb + J @ sb) / (2.0 * gamma)
            v = wbar.copy()
            v[0] += 1.0
            v /= math.sqrt(2.0 * v[0])
            beta = math.sqrt(a / b)
            o = self.n_lp + 4 * k
            W[o : o + 4, o : o + 4] = beta * (2.0 * np.outer(v, v) - J)
            Jv = J @ v
            Winv[o : o + 4, o : o + 4] = (2.0 * np.outer(Jv, Jv) - J) / beta
        return W, Winv


# ---------------------------------------------------------------------------


def scale_and_precondition(problem: ConicProblem) -> ConicProblem:
    """Normalize every constraint row to unit Euclidean norm.

    The returned problem records ``row_scale`` so multipliers can be mapped
    back with :meth:`ConicProblem.restore_multipliers`.  Optimal values are
    unchanged.
    """
    _, A, _ = problem.standard_form()
    norms = np.linalg.norm(A, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DegenerateConstraintError(f"constraint rows {bad.tolist()} have zero norm")
    prior = problem.row_scale if problem.row_scale is not None else np.ones(len(norms))
    cons = []
    for con, nrm in zip(problem.constraints, norms):
        coeffs = {k: np.asarray(v) / nrm for k, v in con.coeffs.items()}
        cons.append(Constraint(coeffs, con.rhs / nrm, con.label))
    return replace(problem, constraints=tuple(cons), row_scale=prior * norms)


def _independent_rows(A, b, tol=1e-10):
    """Indices of a maximal independent row subset, and whether the dropped
    rows are consistent with the kept ones."""
    if A.shape[0] == 0:
        return np.arange(0), True
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag[0])))
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(A.shape[0]), keep)
    if drop.size == 0:
        return keep, True
    coef, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
    consistent = np.allclose(coef.T @ b[keep], b[drop], atol=1e-9 * (1 + np.abs(b).max()))
    return keep, bool(consistent)


class InteriorPointSolver:
    """Single-use homogeneous self-dual interior-point solver."""

    def __init__(self, problem: ConicProblem, settings: SolverSettings | None = None):
        self.problem = problem
        self.settings = settings or SolverSettings()
        self._used = False

    def _emit(self, record):
        if self.settings.trace is not None:
            self.settings.trace(json.dumps(record, sort_keys=True))

    def solve(self) -> ConicSolution:
        if self._used:
            raise RuntimeError("InteriorPointSolver instances are single-use")
        self._used = True
        original = self.problem
        work = scale_and_precondition(original) if self.settings.precondition else original
        c, A, b = work.standard_form()
        n_lp, n_soc = work.cone_dims()
        cones = _Cones(n_lp, n_soc)

        keep, consistent = _independent_rows(A, b)
        if not consistent:
            return self._failure(INFEASIBLE, 0)
        Ak, bk = A[keep], b[keep]
        status, x, y, it, pres, dres = self._hsde(cones, c, Ak, bk)
        if n_soc == 0 and self.settings.polish and x is not None and np.all(np.isfinite(x)):
            # a linear program: move to an exact vertex when the iterate
            # identifies one (also rescues stalls on nearly flat faces)
            if status == OPTIMAL or (status == MAX_ITERATIONS and max(pres, dres) < 1e-5):
                polished = _polish_vertex(Ak, bk, c, x, y)
                if polished is not None:
                    x, y, pres, dres = polished
                    status = OPTIMAL
        if status != OPTIMAL:
            return self._failure(status, it, x, y, keep, work)

        u = np.zeros(len(b))
        u[keep] = y
        u = work.restore_multipliers(u)
        if original.row_scale is not None:
            u = u * original.row_scale
        pval = float(c @ x)
        dval = float(original.standard_form()[2] @ u)
        return ConicSolution(
            status=OPTIMAL,
            primal_value=pval,
            dual_value=dval,
            gap=abs(dval - pval),
            primal_residual=pres,
            dual_residual=dres,
            primal_variables=_unvectorize(work, x),
            dual_multipliers=u,
            iterations=it,
        )

    def _failure(self, status, it, x=None, y=None, keep=None, work=None):
        u = np.full(self.problem.n_constraints, np.nan)
        xs = ()
        if x is not None and y is not None and work is not None:
            u = np.zeros(self.problem.n_constraints)
            u[keep] = y
            u = work.restore_multipliers(u)
            if self.problem.row_scale is not None:
                u = u * self.problem.row_scale
            xs = _unvectorize(work, x)
        return ConicSolution(
            status=status,
            primal_value=math.nan,
            dual_value=math.nan,
            gap=math.inf,
            primal_residual=math.inf,
            dual_residual=math.inf,
            primal_variables=xs,
            dual_multipliers=u,
            iterations=it,
        )

    def _hsde(self, cones: _Cones, cmax, A, b):
        """Run the embedding.  Returns ``(status, x, y, iters, pres, dres)``
        with ``y`` the multipliers of the maximization dual."""
        st = self.settings
        c = -cmax  # internal minimization
        m, n = A.shape
        scale = max(1.0, float(np.abs(b).max()) if m else 1.0)
        e = cones.identity()
        x = scale * e
        s = e.copy()
        y = np.zeros(m)
        tau = kappa = 1.0
        nu = cones.degree
        bnorm = 1.0 + np.linalg.norm(b)
        cnorm = 1.0 + np.linalg.norm(c)
        xt = x / tau
        yt = y / tau
        for it in range(st.max_iter + 1):
            rp = A @ x - b * tau
            rd = A.T @ y + s - c * tau
            rg = c @ x - b @ y + kappa
            mu = (x @ s + tau * kappa) / (nu + 1)

            xt, yt, stt = x / tau, y / tau, s / tau
            pobj, dobj = c @ xt, b @ yt
            pres = float(np.linalg.norm(A @ xt - b) / bnorm)
            dres = float(np.linalg.norm(A.T @ yt + stt - c) / cnorm)
            gap = float(abs(pobj - dobj))
            self._emit(
                {"iteration": it, "primal": -pobj, "dual": -dobj, "gap": gap,
                 "primal_residual": pres, "dual_residual": dres, "tau": tau, "kappa": kappa}
            )
            if st.debug:
                # weak duality up to the residual terms
                margin = (-dobj) - (-pobj)
                slack = np.linalg.norm(A @ xt - b) * np.linalg.norm(yt) + np.linalg.norm(
                    A.T @ yt + stt - c
                ) * np.linalg.norm(xt)
                assert margin >= -slack - 1e-10 * (1 + abs(pobj)), "weak duality violated"
            if pres <= st.feas_tol and dres <= st.feas_tol and gap <= st.gap_tol:
                return OPTIMAL, xt, -yt, it, pres, dres
            by = b @ y
            if by > 0 and np.linalg.norm(A.T @ y + s) / by <= st.infeas_tol:
                return INFEASIBLE, None, None, it, pres, dres
            cx = c @ x
            if cx < 0 and np.linalg.norm(A @ x) / -cx <= st.infeas_tol:
                return UNBOUNDED, None, None, it, pres, dres
            if it == st.max_iter:
                break

            with np.errstate(over="ignore", invalid="ignore"):
                W, Winv = cones.nt_scaling(x, s)
                lam = W @ s
                AW = A @ W
                cW = W @ c
                AWc = AW @ cW
                M = np.empty((m + 1, m + 1))
                M[:m, :m] = AW @ AW.T
                M[:m, m] = -(AWc + b)
                M[m, :m] = AWc - b
                M[m, m] = -(cW @ cW + kappa / tau)
            if not np.all(np.isfinite(M)):
                self._emit({"iteration": it, "stop": "non-finite system"})
                break
            # tiny static regularization; iterative refinement removes its bias
            reg = 1e-14 * (1.0 + float(np.abs(np.diag(M)).max()))
            M[np.arange(m), np.arange(m)] += reg
            M[m, m] -= reg
            try:
                lu = scipy.linalg.lu_factor(M, check_finite=True)
            except (ValueError, np.linalg.LinAlgError):
                self._emit({"iteration": it, "stop": "singular system"})
                break

            def kkt_solve(r_p, r_d, r_g, u, r_t):
                # A dx - b dtau = r_p;  A'dy + ds - c dtau = r_d
                # c dx - b dy + dkappa = r_g;  W^-1 dx + W ds = u
                # kappa dtau + tau dkappa = r_t
                g = Winv @ u - r_d
                W2g = W @ (W @ g)
                rhs = np.empty(m + 1)
                rhs[:m] = r_p - A @ W2g
                rhs[m] = r_g - c @ W2g - r_t / tau
                sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
                dy, dtau = sol[:m], sol[m]
                dx = W @ (W @ (A.T @ dy - c * dtau)) + W2g
                ds = r_d - A.T @ dy + c * dtau
                dkappa = (r_t - kappa * dtau) / tau
                return dx, dy, ds, dtau, dkappa

            def kkt_residual(rhs, d):
                dx, dy, ds, dtau, dkappa = d
                return (
                    rhs[0] - (A @ dx - b * dtau),
                    rhs[1] - (A.T @ dy + ds - c * dtau),
                    rhs[2] - (c @ dx - b @ dy + dkappa),
                    rhs[3] - (Winv @ dx + W @ ds),
                    rhs[4] - (kappa * dtau + tau * dkappa),
                )

            def res_norm(res):
                return max(float(np.max(np.abs(r))) if np.ndim(r) else abs(float(r)) for r in res)

            def direction(eta, rc, rt):
                rhs = (-eta * rp, -eta * rd, -eta * rg, cones.divide(lam, rc), rt)
                d = kkt_solve(*rhs)
                res = kkt_residual(rhs, d)
                err = res_norm(res)
                for _ in range(3):
                    if not np.isfinite(err) or err == 0.0:
                        break
                    corr = kkt_solve(*res)
                    cand = tuple(a + b_ for a, b_ in zip(d, corr))
                    cand_res = kkt_residual(rhs, cand)
                    cand_err = res_norm(cand_res)
                    if not cand_err < err:
                        break
                    d, res, err = cand, cand_res, cand_err
                return d

            def step_length(dx, ds, dtau, dkappa):
                a = min(cones.max_step(x, dx), cones.max_step(s, ds))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dkappa < 0:
                    a = min(a, -kappa / dkappa)
                return a

            lam2 = cones.product(lam, lam)
            dxa, dya, dsa, dta, dka = direction(1.0, -lam2, -tau * kappa)
            alpha_a = min(1.0, step_length(dxa, dsa, dta, dka))
            sigma = (1.0 - alpha_a) ** 3
            rc = -lam2 - cones.product(Winv @ dxa, W @ dsa) + sigma * mu * e
            rt = -tau * kappa - dta * dka + sigma * mu
            dx, dy, ds, dtau, dkappa = direction(1.0 - sigma, rc, rt)
            alpha = min(1.0, st.step_fraction * step_length(dx, ds, dtau, dkappa))
            if not np.isfinite(alpha) or alpha <= 0:
                self._emit({"iteration": it, "stop": "zero step"})
                break
            if not all(np.all(np.isfinite(v)) for v in (dx, dy, ds, dtau, dkappa)):
                self._emit({"iteration": it, "stop": "non-finite direction"})
                break
            x = x + alpha * dx
            y = y + alpha * dy
            s = s + alpha * ds
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkappa
        return MAX_ITERATIONS, xt, -yt, it, pres, dres


def _polish_vertex(A, b, c, x, y, tol=1e-11):
    """Exact optimal pair of a linear program guided by an interior iterate.

    The iterate suggests which columns are positive at the optimum (``x_j``
    large against the dual slack ``s_j``).  Projecting ``x`` onto
    ``{A_P x_P = b}`` for a primal support ``P`` and solving
    ``A_D^T y = c_D`` for a dual support ``D`` gives a candidate pair; it is
    accepted only if both are feasible and the objective values agree, all to
    ``tol``.  Otherwise ``None`` is returned and the interior solution stands.
    """
    s = A.T @ y - c
    scale = 1.0 + float(np.abs(c).max())
    candidates = [(1.0, 1.0), (1e-3, 1e3), (1e-6, 1e6), (None, 1e3), (None, 1e6)]
    for ratio_p, ratio_d in candidates:
        if ratio_p is None:
            # nonnegative least squares on every column with a small slack;
            # recovers optimal entries too small for the iterate to resolve
            xp = _nnls_primal(A, b, x, np.flatnonzero(s < 1e-6 * scale))
        else:
            xp = _project_primal(A, b, x, np.flatnonzero(x > ratio_p * s))
        if xp is None or np.linalg.norm(A @ xp - b) > tol * (1.0 + np.linalg.norm(b)):
            continue
        yp = _project_dual(A, c, y, np.flatnonzero(x > ratio_d * s))
        red = A.T @ yp - c
        if red.min() < -tol * (1.0 + float(np.abs(yp).max())):
            continue
        if abs(float(c @ xp - b @ yp)) > tol * scale:
            continue
        pres = float(np.linalg.norm(A @ xp - b) / (1.0 + np.linalg.norm(b)))
        dres = float(np.linalg.norm(np.minimum(red, 0.0)) / (1.0 + np.linalg.norm(c)))
        return xp, yp, pres, dres
    return _simplex_crossover(A, b, c, tol)


def _simplex_crossover(A, b, c, tol):
    """Fall back to a dense two-phase simplex when projection fails, which
    happens when optimal entries are smaller than the interior iterate's
    accuracy (statistics nudged off a region boundary)."""
    found = _simplex(A, b, c)
    if found is None:
        return None
    xv, yv = found
    red = A.T @ yv - c
    pres = float(np.linalg.norm(A @ xv - b) / (1.0 + np.linalg.norm(b)))
    dres = float(np.linalg.norm(np.minimum(red, 0.0)) / (1.0 + np.linalg.norm(c)))
    if max(pres, dres) > tol:
        return None
    return xv, yv, pres, dres


def _simplex(A, b, c, tol=1e-12, max_iter=5000):
    """Maximize ``c x`` subject to ``A x = b, x >= 0`` by the revised simplex
    method with Bland's rule.  ``A`` must have full row rank.  Returns
    ``(x, y)`` or ``None`` if infeasible, unbounded or out of iterations."""
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = np.hstack([A * sign[:, None], np.eye(m)])
    b1 = b * sign

    def run(cost, basis, allowed):
        for _ in range(max_iter):
            B = A1[:, basis]
            try:
                lu = scipy.linalg.lu_factor(B)
            except (ValueError, np.linalg.LinAlgError):
                return None
            xb = scipy.linalg.lu_solve(lu, b1)
            y = scipy.linalg.lu_solve(lu, cost[basis], trans=1)
            red = cost - A1.T @ y
            red[basis] = 0.0
            enter = next((j for j in allowed if red[j] > tol * (1.0 + abs(cost[j]))), None)
            if enter is None:
                return basis, xb, y
            u = scipy.linalg.lu_solve(lu, A1[:, enter])
            rows = np.flatnonzero(u > 1e-11)
            if rows.size == 0:
                return None
            ratios = np.maximum(xb[rows], 0.0) / u[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-15]
            leave = min(ties, key=lambda r: basis[r])
            basis = basis.copy()
            basis[leave] = enter
        return None

    phase1 = np.concatenate([np.zeros(n), -np.ones(m)])
    out = run(phase1, list(range(n, n + m)), range(n + m))
    if out is None:
        return None
    basis, xb, _ = out
    if phase1[basis] @ xb < -1e-10 * (1.0 + np.abs(b1).max()):
        return None
    # pivot remaining zero-level artificials out of the basis
    for r, j in enumerate(list(basis)):
        if j < n:
            continue
        B = A1[:, basis]
        row = np.linalg.solve(B, np.eye(m)[:, r]) @ A1[:, :n]
        cand = [k for k in np.flatnonzero(np.abs(row) > 1e-9) if k not in basis]
        if not cand:
            return None
        basis[r] = int(cand[0])
    cost = np.concatenate([c, np.zeros(m)])
    out = run(cost, basis, range(n))
    if out is None:
        return None
    basis, xb, y = out
    x = np.zeros(n + m)
    x[basis] = np.maximum(xb, 0.0)
    if np.any(np.asarray(basis) >= n) and x[n:].max() > 1e-12:
        return None
    return x[:n], y * sign


def _project_primal(A, b, x, support):
    if support.size == 0:
        return None
    AP = A[:, support]
    xs = x[support] + np.linalg.lstsq(AP, b - AP @ x[support], rcond=None)[0]
    if xs.min() < 0.0:
        if xs.min() < -1e-13 * (1.0 + float(np.abs(xs).max())):
            return None
        xs = np.maximum(xs, 0.0)
    out = np.zeros_like(x)
    out[support] = xs
    return out


def _nnls_primal(A, b, x, support):
    if support.size == 0:
        return None
    z, _ = scipy.optimize.nnls(A[:, support], b)
    out = np.zeros_like(x)
    out[support] = z
    return out


def _project_dual(A, c, y, support):
    if support.size == 0:
        return y
    AP = A[:, support]
    return y + np.linalg.lstsq(AP.T, c[support] - AP.T @ y, rcond=None)[0]


def _unvectorize(problem: ConicProblem, x) -> tuple:
    out = []
    for blk, sl in zip(problem.blocks, problem.layout()):
        if blk.kind == NONNEG:
            out.append(float(x[sl][0]))
        else:
            out.append(hermitian_from_vector(x[sl]))
    return tuple(out)


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``problem`` with a fresh :class:`InteriorPointSolver`.

    When the problem carries exposing vectors (and ``facial_reduction`` is on)
    the solve runs on the restricted problem and the solution is lifted back.
    """
    settings = settings or SolverSettings()
    sol = _solve_once(problem, settings)
    loose = settings.fallback_tol
    if loose is None or loose <= settings.gap_tol:
        return sol
    if sol.status == MAX_ITERATIONS:
        relaxed = replace(settings, gap_tol=loose, feas_tol=max(loose, settings.feas_tol),
                          fallback_tol=None)
        sol = _solve_once(problem, relaxed)
    return sol


def _solve_once(problem: ConicProblem, settings: SolverSettings) -> ConicSolution:
    # stalled iterates can overflow; the iteration guards turn that into a status
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve_restricted(problem, settings)


def _solve_restricted(problem: ConicProblem, settings: SolverSettings) -> ConicSolution:
    if settings.facial_reduction and problem.exposing:
        face = restrict_to_face(problem)
        if face is not None:
            if face.infeasible:
                return InteriorPointSolver(problem, settings)._failure(INFEASIBLE, 0)
            return face.lift(InteriorPointSolver(face.problem, settings).solve())
    return InteriorPointSolver(problem, settings).solve()


# ---------------------------------------------------------------------------
# Facial reduction with caller-supplied exposing vectors.

_FACE_TOL = 1e-9
_SHIFT_LADDER = (0.0, *np.logspace(-12, -4, 33))
# larger multipliers lose the slack to cancellation even in extended precision
_LIFT_SLACK = 1e-8


def _combine_rows(problem: ConicProblem, weights: Mapping[int, float]) -> np.ndarray:
    y = np.zeros(problem.n_constraints)
    for i, w in weights.items():
        y[i] += w
    return y


@dataclass(frozen=True)
class FaceRestriction:
    """A problem restricted to the face exposed by ``direction``.

    ``block_map[k]`` is ``(j, None)`` for a block kept as block ``j``,
    ``(j, v)`` for a ``psd2`` block replaced by the ray ``t v v^H`` (scalar
    block ``j``) and ``(None, None)`` for a block forced to zero.
    """

    original: ConicProblem
    problem: ConicProblem | None
    direction: np.ndarray
    block_map: tuple
    row_map: tuple
    infeasible: bool = False

    def lift_primal(self, values) -> tuple:
        out = []
        for blk, (j, v) in zip(self.original.blocks, self.block_map):
            if j is None:
                out.append(np.zeros((2, 2), dtype=complex) if blk.kind == PSD2 else 0.0)
            elif v is None:
                out.append(values[j])
            else:
                out.append(max(float(values[j]), 0.0) * np.outer(v, v.conj()))
        return tuple(out)

    def lift_dual(self, y_reduced, floor: float = -math.inf) -> np.ndarray:
        """Multipliers for the original problem with every slack in its cone.

        The reduced multipliers only control the slack on the face; adding a
        multiple of the exposing direction (which costs nothing in the
        objective) repairs the rest.  Slacks that vanish on the face would
        need an unbounded multiple, so a small shift along the normalization
        row buys margin first; the shift minimizing the rigorous bound wins.

        Bounds below ``floor`` (the restricted optimum) can only come from
        multipliers so large that they exploit the rounding of the data,
        which makes the exact problem marginally infeasible; such candidates
        rank last, the least extreme of them first.
        """
        orig = self.original
        y = np.zeros(orig.n_constraints)
        for i, yi in zip(self.row_map, y_reduced):
            y[i] = yi
        shift = _interior_dual_row(orig)
        # huge multipliers lose digits to cancellation; candidates whose slacks
        # visibly leave the cone only compete when nothing cleaner exists
        best, best_key = y, (True, True, math.inf)
        for eps in _SHIFT_LADDER:
            if eps and shift is None:
                break
            cand = y.copy()
            if eps:
                cand[shift] += eps
            cand = cand + _repair_multiple(orig, cand, self.direction) * self.direction
            viol = _slack_violations(orig, cand)
            worst = float(viol.max()) if viol.size else 0.0
            if worst > 0.0 and shift is not None:
                # storing the multipliers rounds them; pay for that residue
                # along the interior row instead of leaving the cone
                cand = _absorb_violation(orig, cand, shift, worst)
                viol = _slack_violations(orig, cand)
                worst = float(viol.max()) if viol.size else 0.0
            bound = _dual_objective(orig, cand)
            bound += worst * (orig.trace_bound if orig.trace_bound is not None else 1e6)
            bound += _rounding_allowance(orig, cand)
            below = bound < floor
            key = (worst > _LIFT_SLACK, below, -bound if below else bound)
            if key < best_key:
                best, best_key = cand, key
        return best

    def lift(self, sol: ConicSolution) -> ConicSolution:
        """Map a solution of the restricted problem back.

        Values, gap and residuals stay those of the restricted problem (the
        restriction is exact).  The lifted multipliers certify a bound that
        can exceed ``dual_value`` by round-off amplified through the repair
        multiple, typically around 1e-8; :func:`check_dual_certificate`
        reports it.
        """
        if not sol.optimal:
            y = np.full(self.original.n_constraints, np.nan)
            return replace(sol, dual_multipliers=y, primal_variables=())
        return replace(
            sol,
            primal_variables=self.lift_primal(sol.primal_variables),
            dual_multipliers=self.lift_dual(
                sol.dual_multipliers, min(sol.primal_value, sol.dual_value) - 1e-9
            ),
        )


def _rounding_allowance(problem: ConicProblem, y) -> float:
    """Worst-case floating-point error of ``b^T y`` and of the slacks (times
    the trace bound) when multipliers are large and cancel."""
    trace = problem.trace_bound if problem.trace_bound is not None else 1.0
    total = 0.0
    for yi, con in zip(y, problem.constraints):
        size = max((float(np.max(np.abs(c))) for c in con.coeffs.values()), default=0.0)
        total += abs(yi) * (abs(con.rhs) + size * trace)
    return 16.0 * float(np.finfo(_WIDE).eps) * total


def _interior_dual_row(problem: ConicProblem):
    """A row whose coefficients are strictly inside the cone on every block."""
    for i, con in enumerate(problem.constraints):
        if len(con.coeffs) != len(problem.blocks):
            continue
        ok = True
        for k, coeff in con.coeffs.items():
            if problem.blocks[k].kind == PSD2:
                ok = psd2_eigenvalues(coeff)[0] > 0
            else:
                ok = float(coeff) > 0
            if not ok:
                break
        if ok and con.rhs > 0:
            return i
    return None


def _absorb_violation(problem, y, row, worst) -> np.ndarray:
    """Raise multiplier ``row`` (an interior row, see :func:`_interior_dual_row`)
    so that every slack gains at least ``2 * worst``."""
    margin = min(
        psd2_eigenvalues(c)[0] if problem.blocks[k].kind == PSD2 else float(c)
        for k, c in problem.constraints[row].coeffs.items()
    )
    step = 2.0 * worst / margin
    out = y.copy()
    target = y[row] + step
    while target - y[row] < step:
        target = np.nextafter(target, np.inf)
    out[row] = target
    return out


def _repair_multiple(problem, y, direction) -> float:
    """Smallest ``t >= 0`` putting every slack of ``y + t direction`` in its
    cone, or the best available when a slack is negative on the face."""
    need = 0.0
    for blk, S, E in zip(
        problem.blocks, dual_slacks(problem, y), _direction_slacks(problem, direction)
    ):
        if blk.kind == NONNEG:
            if S < 0 and E > _FACE_TOL:
                need = max(need, -S / E)
            continue
        w, V = np.linalg.eigh(0.5 * (E + E.conj().T))
        if w[1] <= _FACE_TOL:
            continue
        if w[0] > _FACE_TOL:
            # E positive definite: t = -lambda_min(E^-1/2 S E^-1/2)
            r = V @ np.diag(1.0 / np.sqrt(w)) @ V.conj().T
            need = max(need, -float(np.linalg.eigvalsh(r @ S @ r)[0]))
            continue
        v, u = V[:, 0], V[:, 1]
        svv = float(np.real(v.conj() @ S @ v))
        suu = float(np.real(u.conj() @ S @ u))
        svu = complex(v.conj() @ S @ u)
        if svv <= 0:
            continue
        need = max(need, (abs(svu) ** 2 / svv - suu) / w[1])
    return need * (1.0 + 1e-12)


def _direction_slacks(problem, direction):
    out = []
    for blk in problem.blocks:
        out.append(np.zeros((2, 2), dtype=complex) if blk.kind == PSD2 else 0.0)
    for yi, con in zip(direction, problem.constraints):
        if yi == 0:
            continue
        for k, coeff in con.coeffs.items():
            if problem.blocks[k].kind == PSD2:
                out[k] = out[k] + yi * np.asarray(coeff, dtype=complex)
            else:
                out[k] = out[k] + yi * float(coeff)
    return out


def restrict_to_face(problem: ConicProblem) -> FaceRestriction | None:
    """Restrict ``problem`` to the face exposed by its exposing vectors.

    Returns ``None`` when no valid exposing vector is present (invalid ones
    are ignored, never trusted).
    """
    direction = np.zeros(problem.n_constraints)
    b = np.array([con.rhs for con in problem.constraints])
    for weights in problem.exposing:
        y = _combine_rows(problem, weights)
        if abs(float(b @ y)) > 1e-12 * (1.0 + np.abs(y).sum()):
            continue
        if any(_cone_margin(blk, E) < -1e-12 for blk, E in
               zip(problem.blocks, _direction_slacks(problem, y))):
            continue
        direction += y
    if not direction.any():
        return None

    blocks, block_map = [], []
    for blk, E in zip(problem.blocks, _direction_slacks(problem, direction)):
        if blk.kind == NONNEG:
            if E > _FACE_TOL:
                block_map.append((None, None))
            else:
                block_map.append((len(blocks), None))
                blocks.append(blk)
            continue
        w, V = np.linalg.eigh(0.5 * (E + E.conj().T))
        rank = int(np.sum(w > _FACE_TOL * max(1.0, w[1])))
        if rank == 0:
            block_map.append((len(blocks), None))
            blocks.append(blk)
        elif rank == 1:
            block_map.append((len(blocks), V[:, 0]))
            blocks.append(Block(NONNEG, f"{blk.label}|ray"))
        else:
            block_map.append((None, None))

    def remap(coeffs):
        out = {}
        for k, coeff in coeffs.items():
            j, v = block_map[k]
            if j is None:
                continue
            if v is None:
                out[j] = coeff
            else:
                val = float(np.real(v.conj() @ np.asarray(coeff, dtype=complex) @ v))
                if val != 0.0:
                    out[j] = val
        return out

    rows, row_map, infeasible = [], [], False
    for i, con in enumerate(problem.constraints):
        coeffs = remap(con.coeffs)
        if all(np.max(np.abs(c)) <= 1e-14 for c in coeffs.values()):
            if abs(con.rhs) > 1e-12:
                infeasible = True
            continue
        rows.append(Constraint(coeffs, con.rhs, con.label))
        row_map.append(i)
    reduced = None
    if not infeasible:
        reduced = ConicProblem(
            tuple(blocks), remap(problem.objective), tuple(rows), problem.trace_bound
        )
    return FaceRestriction(
        problem, reduced, direction, tuple(block_map), tuple(row_map), infeasible
    )


def _cone_margin(blk, E) -> float:
    if blk.kind == NONNEG:
        return float(E)
    return psd2_eigenvalues(E)[0]


def dual_slacks(problem: ConicProblem, y: Sequence[float]) -> list:
    """``S_k = sum_i y_i A_ik - C_k`` per block, assembled from the per-block
    coefficient matrices (not from the vectorized data the solver uses)."""
    out = []
    for k, blk in enumerate(problem.blocks):
        if blk.kind == PSD2:
            S = -np.asarray(problem.objective.get(k, np.zeros((2, 2))), dtype=complex)
        else:
            S = -float(problem.objective.get(k, 0.0))
        out.append(S)
    for yi, con in zip(y, problem.constraints):
        for k, coeff in con.coeffs.items():
            if problem.blocks[k].kind == PSD2:
                out[k] = out[k] + yi * np.asarray(coeff, dtype=complex)
            else:
                out[k] = out[k] + yi * float(coeff)
    return out


_WIDE = np.longdouble


def _wide_hermitian(mat) -> np.ndarray:
    """``(a, c, re b, im b)`` of a 2x2 Hermitian matrix in extended precision."""
    m = np.asarray(mat, dtype=complex)
    return np.array([m[0, 0].real, m[1, 1].real, m[0, 1].real, m[0, 1].imag], dtype=_WIDE)


def _slack_violations(problem, y):
    """Cone violation of every dual slack.  Accumulated in extended precision
    because lifted multipliers can be large and cancel."""
    y = np.asarray(y, dtype=_WIDE)
    acc = []
    for k, blk in enumerate(problem.blocks):
        c = problem.objective.get(k)
        if blk.kind == PSD2:
            acc.append(-_wide_hermitian(c) if c is not None else np.zeros(4, dtype=_WIDE))
        else:
            acc.append(-_WIDE(float(c)) if c is not None else _WIDE(0))
    for yi, con in zip(y, problem.constraints):
        for k, coeff in con.coeffs.items():
            if problem.blocks[k].kind == PSD2:
                acc[k] = acc[k] + yi * _wide_hermitian(coeff)
            else:
                acc[k] = acc[k] + yi * _WIDE(float(coeff))
    viol = []
    for blk, S in zip(problem.blocks, acc):
        if blk.kind == PSD2:
            a, c, br, bi = S
            root = np.sqrt((0.5 * (a - c)) ** 2 + br * br + bi * bi)
            high = 0.5 * (a + c) + root
            # det / lambda_max avoids the cancellation in tr/2 - root
            low = (a * c - br * br - bi * bi) / high if high > 0 else 0.5 * (a + c) - root
            viol.append(max(0.0, -float(low)))
        else:
            viol.append(max(0.0, -float(S)))
    return np.array(viol)


def _dual_objective(problem, y) -> float:
    y = np.asarray(y, dtype=_WIDE)
    return float(sum(yi * _WIDE(con.rhs) for yi, con in zip(y, problem.constraints)))


@dataclass(frozen=True)
class CertificateReport:
    valid: bool
    max_violation: float
    bound: float
    tolerance: float


def check_dual_certificate(
    problem: ConicProblem, solution: ConicSolution, tol: float = 1e-7
) -> CertificateReport:
    """Recompute every dual slack from the block coefficients and report the
    worst cone violation.  Valid iff the violation is at most ``tol``."""
    y = np.asarray(solution.dual_multipliers, dtype=float)
    if y.shape != (problem.n_constraints,) or not np.all(np.isfinite(y)):
        return CertificateReport(False, math.inf, math.nan, tol)
    viol = _slack_violations(problem, y)
    worst = float(viol.max()) if viol.size else 0.0
    bound = _dual_objective(problem, y)
    return CertificateReport(worst <= tol, worst, bound, tol)


def extract_bound(problem: ConicProblem, solution: ConicSolution, tol: float = 1e-7) -> float:
    """Certified upper bound on the primal optimum from the dual multipliers.

    The dual objective ``b^T y`` bounds the optimum whenever every slack lies
    in its cone.  If slacks violate the cone by at most ``eps_k`` and the
    program declares a ``trace_bound`` T, then ``b^T y + max_k eps_k * T`` is
    still a valid bound, so early-terminated solves remain usable.  Without a
    trace bound, violations above ``tol`` are rejected.
    """
    y = np.asarray(solution.dual_multipliers, dtype=float)
    if y.shape != (problem.n_constraints,) or not np.all(np.isfinite(y)):
        raise DualInfeasibleError("no finite dual multipliers")
    viol = _slack_violations(problem, y)
    worst = float(viol.max()) if viol.size else 0.0
    bound = _dual_objective(problem, y) + _rounding_allowance(problem, y)
    if worst == 0.0:
        return bound
    if problem.trace_bound is not None:
        return bound + worst * problem.trace_bound
    if worst <= tol:
        return bound
    raise DualInfeasibleError(f"dual slack violates its cone by {worst:.3g}")
