"""Domain types and closed-form quantities for two-input state discrimination.

Inputs ``x`` take values 0 and 1, outcomes ``b`` take values 0, 1 and the
inconclusive label ``"?"`` (index 2 in arrays).  Quantum preparations are pure
qubit states in the X-Z plane of the Bloch ball; noncontextual preparations are
2x2 epistemic matrices whose entries are the weights an epistemic state puts on
the four ontic regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

API_TOL = 1e-9
INTERNAL_TOL = 1e-12

INCONCLUSIVE = 2
OUTCOMES = (0, 1, INCONCLUSIVE)
OUTCOME_NAMES = {0: "0", 1: "1", INCONCLUSIVE: "?"}

UI_0 = "UI-0"
UI_1 = "UI-1"
INTERIOR = "interior"

QUANTUM = "quantum"
NONCONTEXTUAL = "noncontextual"


class DomainError(ValueError):
    """Argument outside the domain of a formula."""


class UndefinedConfidenceError(DomainError):
    """Confidence requested for an outcome that never occurs."""


class UnsupportedConfigurationError(ValueError):
    """Formula only known for a narrower configuration (e.g. unbiased priors)."""


def _check_unit(name, value, tol=API_TOL):
    if not (-tol <= value <= 1 + tol) or math.isnan(value):
        raise DomainError(f"{name}={value!r} outside [0, 1]")


@dataclass(frozen=True)
class Priors:
    p0: float = 0.5
    p1: float = 0.5

    def __post_init__(self):
        _check_unit("p0", self.p0, 0.0)
        _check_unit("p1", self.p1, 0.0)
        if abs(self.p0 + self.p1 - 1.0) > INTERNAL_TOL:
            raise DomainError(f"priors sum to {self.p0 + self.p1}, not 1")

    def __getitem__(self, x: int) -> float:
        return (self.p0, self.p1)[x]

    @property
    def unbiased(self) -> bool:
        return abs(self.p0 - 0.5) <= INTERNAL_TOL

    @classmethod
    def uniform(cls) -> "Priors":
        return cls(0.5, 0.5)


@dataclass(frozen=True)
class Overlap:
    """Quantum overlap ``delta`` and noncontextual confusability."""

    delta: float
    confusability: float

    def __post_init__(self):
        _check_unit("delta", self.delta, 0.0)
        _check_unit("confusability", self.confusability, 0.0)

    @classmethod
    def from_delta(cls, delta: float) -> "Overlap":
        return cls(delta, delta * delta)

    @classmethod
    def from_confusability(cls, confusability: float) -> "Overlap":
        return cls(math.sqrt(confusability), confusability)

    @property
    def calibrated(self) -> bool:
        return abs(self.confusability - self.delta**2) <= INTERNAL_TOL


@dataclass(frozen=True)
class ObservedStats:
    eta0: float
    c0: float

    def __post_init__(self):
        _check_unit("eta0", self.eta0)
        _check_unit("c0", self.c0)

    def check_priors(self, priors: Priors) -> None:
        if self.eta0 * self.c0 > priors.p0 + API_TOL:
            raise DomainError(
                f"eta0*c0={self.eta0 * self.c0} exceeds p0={priors.p0}"
            )


@dataclass(frozen=True)
class QubitState:
    bloch_x: float
    bloch_y: float
    bloch_z: float

    def __post_init__(self):
        if self.norm > 1 + INTERNAL_TOL:
            raise DomainError(f"Bloch vector norm {self.norm} exceeds 1")
        if abs(self.bloch_y) > INTERNAL_TOL:
            raise DomainError("states must lie in the X-Z plane (bloch_y = 0)")

    @property
    def norm(self) -> float:
        return math.sqrt(self.bloch_x**2 + self.bloch_y**2 + self.bloch_z**2)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.bloch_x, self.bloch_y, self.bloch_z])

    def density_matrix(self) -> np.ndarray:
        x, y, z = self.bloch_x, self.bloch_y, self.bloch_z
        return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])

    @classmethod
    def from_angle(cls, angle: float) -> "QubitState":
        """Pure state with Bloch vector ``(sin angle, 0, cos angle)``."""
        return cls(math.sin(angle), 0.0, math.cos(angle))


def state_pair(delta: float) -> tuple[QubitState, QubitState]:
    """Pure states symmetric about +Z with ``|<psi0|psi1>| = delta``.

    The Bloch vectors are ``(-sin phi, 0, cos phi)`` and ``(sin phi, 0,
    cos phi)`` with ``cos phi = delta``.
    """
    _check_unit("delta", delta, 0.0)
    phi = math.acos(min(1.0, max(0.0, delta)))
    return QubitState.from_angle(-phi), QubitState.from_angle(phi)


@dataclass(frozen=True)
class PovmElement:
    """``(R/2) [1 + r sin(theta) sx + r cos(theta) sz]``."""

    weight: float
    radius: float
    theta: float

    def __post_init__(self):
        if self.weight < 0:
            raise DomainError(f"POVM weight {self.weight} is negative")
        if abs(self.radius) > 1 + INTERNAL_TOL:
            raise DomainError(f"POVM radius {self.radius} outside [-1, 1]")

    @property
    def bloch(self) -> np.ndarray:
        r = self.radius
        return np.array([r * math.sin(self.theta), 0.0, r * math.cos(self.theta)])

    def matrix(self) -> np.ndarray:
        bx, _, bz = self.bloch
        return 0.5 * self.weight * np.array([[1 + bz, bx], [bx, 1 - bz]], dtype=complex)


def is_complete_povm(elements, tol: float = INTERNAL_TOL) -> bool:
    total = sum(el.weight for el in elements)
    vec = sum((el.weight * el.bloch for el in elements), np.zeros(3))
    return abs(total - 2.0) <= tol and np.all(np.abs(vec) <= tol)


def born_probability(state: QubitState, povm: PovmElement) -> float:
    return 0.5 * povm.weight * (1.0 + float(state.vector @ povm.bloch))


# -- noncontextual matrix representation -------------------------------------
#
# Entries of the transposed epistemic matrix are the weights on the regions
#     [[T0, T10], [T10bar, T1]]
# and a response matrix is [[alpha_0b, beta_b], [betabar_b, alpha_1b]], so that
# p(b|x) = Tr[xi_b mu_x] = sum(xi_b * mu_x^T).


@dataclass(frozen=True)
class EpistemicMatrix:
    m: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.m, dtype=float)
        if arr.shape != (2, 2):
            raise DomainError("epistemic matrix must be 2x2")
        if np.any(arr < -INTERNAL_TOL):
            raise DomainError("epistemic matrix has negative entries")
        object.__setattr__(self, "m", arr)

    @property
    def total(self) -> float:
        return float(self.m.sum())


@dataclass(frozen=True)
class ResponseMatrix:
    m: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.m, dtype=float)
        if arr.shape != (2, 2):
            raise DomainError("response matrix must be 2x2")
        if np.any(arr < -INTERNAL_TOL) or np.any(arr > 1 + INTERNAL_TOL):
            raise DomainError("response matrix entries must lie in [0, 1]")
        object.__setattr__(self, "m", arr)

    @classmethod
    def from_entries(cls, alpha0: float, beta: float, betabar: float, alpha1: float):
        return cls(np.array([[alpha0, beta], [betabar, alpha1]]))


def is_complete_response(responses, tol: float = INTERNAL_TOL) -> bool:
    total = sum(r.m for r in responses)
    return bool(np.all(np.abs(total - 1.0) <= tol))


def epistemic_states(confusability: float) -> dict[str, EpistemicMatrix]:
    """Canonical epistemic matrices for a given confusability.

    Keys: ``"0"``, ``"1"``, ``"0bar"``, ``"1bar"`` and ``"mixed"``.
    """
    _check_unit("confusability", confusability, 0.0)
    d = confusability
    e = 1.0 - d
    transposed = {
        "0": [[e, d], [0.0, 0.0]],
        "1": [[0.0, d], [0.0, e]],
        "0bar": [[0.0, 0.0], [d, e]],
        "1bar": [[e, 0.0], [d, 0.0]],
    }
    out = {k: EpistemicMatrix(np.array(v).T) for k, v in transposed.items()}
    out["mixed"] = EpistemicMatrix(0.5 * np.array([[e, d], [d, e]]))
    return out


def nc_probability(mu: EpistemicMatrix, xi: ResponseMatrix) -> float:
    """Outcome probability ``Tr[xi mu]``."""
    return float(np.trace(xi.m @ mu.m))


def nc_probability_hadamard(mu: EpistemicMatrix, xi: ResponseMatrix) -> float:
    """Same probability written as the entry sum of ``xi o mu^T``."""
    return float(np.sum(xi.m * mu.m.T))


# -- closed forms -------------------------------------------------------------


def confidence_from_stats(priors: Priors, p_xx: float, eta_x: float, x: int = 0) -> float:
    """Posterior probability of input ``x`` given outcome ``x``."""
    _check_unit("p_xx", p_xx)
    _check_unit("eta_x", eta_x)
    if eta_x <= 0.0:
        raise UndefinedConfidenceError("outcome rate is zero; confidence undefined")
    conf = priors[x] * p_xx / eta_x
    if conf > 1.0 + API_TOL:
        raise DomainError(f"inconsistent statistics: confidence {conf} > 1")
    return conf


def min_entropy(p_guess: float) -> float:
    """``-log2 p_guess`` in bits."""
    if not (0.0 < p_guess <= 1.0 + INTERNAL_TOL):
        raise DomainError(f"guessing probability {p_guess!r} outside (0, 1]")
    return 0.0 - math.log2(min(p_guess, 1.0))


def helstrom_error(priors: Priors, delta: float) -> float:
    _check_unit("delta", delta, 0.0)
    return 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * priors.p0 * priors.p1 * delta**2))


def usd_inconclusive_rate(delta: float, priors: Priors | None = None) -> float:
    """Optimal unambiguous-discrimination failure rate; unbiased priors only."""
    if priors is not None and not priors.unbiased:
        raise UnsupportedConfigurationError("closed form known only for p0 = p1 = 1/2")
    _check_unit("delta", delta, 0.0)
    return float(delta)


@dataclass(frozen=True)
class RegionInfo:
    label: str
    lower: float
    upper: float


def region_boundaries(theory: str, overlap: Overlap) -> tuple[float, float]:
    if theory == QUANTUM:
        w = overlap.delta**2
    elif theory == NONCONTEXTUAL:
        w = overlap.confusability
    else:
        raise ValueError(f"unknown theory {theory!r}")
    return 0.5 * (1.0 - w), 0.5 * (1.0 + w)


def classify_region(theory: str, overlap: Overlap, eta0: float) -> RegionInfo:
    """Unambiguous-identification region of ``eta0``; boundaries are closed."""
    _check_unit("eta0", eta0)
    lo, hi = region_boundaries(theory, overlap)
    if eta0 <= lo:
        label = UI_0
    elif eta0 >= hi:
        label = UI_1
    else:
        label = INTERIOR
    return RegionInfo(label, lo, hi)


# -- strategies ---------------------------------------------------------------


@dataclass(frozen=True, order=True)
class StrategyIndex:
    """Eavesdropper strategy: the outcome guessed for each input."""

    lambda0: int
    lambda1: int

    def __post_init__(self):
        if self.lambda0 not in OUTCOMES or self.lambda1 not in OUTCOMES:
            raise DomainError("strategy labels must be outcomes 0, 1 or inconclusive")

    def __getitem__(self, x: int) -> int:
        return (self.lambda0, self.lambda1)[x]

    @property
    def name(self) -> str:
        return OUTCOME_NAMES[self.lambda0] + OUTCOME_NAMES[self.lambda1]


STRATEGIES = tuple(StrategyIndex(a, b) for a, b in product(OUTCOMES, OUTCOMES))
