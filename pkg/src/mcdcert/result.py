from __future__ import annotations

import math
from dataclasses import dataclass

from .conic import ConicProblem, ConicSolution, OPTIMAL
from .scenario import min_entropy


class InfeasibleStatisticsError(ValueError):
    """Observed (eta0, c0) cannot be produced by any device of the theory."""


class SolverFailure(RuntimeError):
    """The conic solver did not reach an optimal, certified solution."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    max_c0: float
    reason: str = ""

    def __bool__(self):
        return self.feasible


@dataclass(frozen=True)
class CertificationResult:
    """Guessing probability certified for one set of observed statistics."""

    p_guess: float
    adversary: str
    device: str
    status: str
    gap: float
    certificate_valid: bool
    certificate_violation: float
    problem: ConicProblem | None = None
    solution: ConicSolution | None = None

    @property
    def min_entropy(self) -> float:
        return min_entropy(self.p_guess) if self.status == OPTIMAL else math.nan

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL and self.certificate_valid
