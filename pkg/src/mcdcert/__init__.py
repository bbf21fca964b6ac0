"""Randomness certification for maximum-confidence state discrimination
against quantum and noncontextual eavesdroppers."""

from .conic import ConicProblem, ConicSolution, SolverSettings, check_dual_certificate, extract_bound, solve
from .noncontextual import (
    NoncontextualProgram,
    max_confidence_nc,
    pg_nc_device_quantum_eve,
    pg_noncontextual,
)
from .quantum import QuantumProgram, max_confidence_quantum, pg_quantum
from .result import CertificationResult, InfeasibleStatisticsError, SolverFailure
from .scenario import (
    DomainError,
    Overlap,
    Priors,
    classify_region,
    helstrom_error,
    min_entropy,
    usd_inconclusive_rate,
)

__version__ = "0.1.0"

__all__ = [
    "CertificationResult",
    "ConicProblem",
    "ConicSolution",
    "DomainError",
    "InfeasibleStatisticsError",
    "NoncontextualProgram",
    "Overlap",
    "Priors",
    "QuantumProgram",
    "SolverFailure",
    "SolverSettings",
    "check_dual_certificate",
    "classify_region",
    "extract_bound",
    "helstrom_error",
    "max_confidence_nc",
    "max_confidence_quantum",
    "min_entropy",
    "pg_nc_device_quantum_eve",
    "pg_noncontextual",
    "pg_quantum",
    "solve",
    "usd_inconclusive_rate",
]
