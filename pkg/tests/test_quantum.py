import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcdcert.conic import PSD2, SolverSettings, solve
from mcdcert.quantum import (
    QuantumProgram,
    build_primal,
    honest_witness_quantum,
    max_confidence_quantum,
    nudge_eta0,
    optimal_povm_element,
    pg_quantum,
    validate_statistics_quantum,
)
from mcdcert.result import InfeasibleStatisticsError
from mcdcert.scenario import (
    Priors,
    UndefinedConfidenceError,
    UnsupportedConfigurationError,
    born_probability,
    state_pair,
)

DELTA_HALF = math.sqrt(0.5)


def _grid_max_confidence(delta, eta0, angles=4000, radii=400):
    """Largest C0 over a (theta, r) grid of outcome-0 elements; the rate fixes
    the weight R, and R (1 + r) / 2 <= 1 keeps the element below 1."""
    s0, s1 = state_pair(delta)
    theta = np.linspace(0, 2 * math.pi, angles, endpoint=False)[:, None]
    r = np.linspace(0, 1, radii)[None, :]
    direction = np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=-1)
    v0 = 1 + r * (direction @ s0.vector)
    v1 = 1 + r * (direction @ s1.vector)
    weight = 4 * eta0 / (v0 + v1)
    ok = weight * (1 + r) / 2 <= 1 + 1e-12
    return float(np.max(np.where(ok, 0.25 * weight * v0 / eta0, 0.0)))


def test_program_shape():
    problem = build_primal(QuantumProgram(DELTA_HALF, 0.5, 0.8))
    assert len(problem.blocks) == 27
    assert all(b.kind == PSD2 for b in problem.blocks)
    assert problem.n_constraints == 9 * 3 + 1 + 2


def test_identical_states_optimum():
    assert solve(build_primal(QuantumProgram(1.0, 0.6, 0.5))).primal_value == pytest.approx(1.0, abs=1e-8)


def test_orthogonal_states_optimum():
    assert solve(build_primal(QuantumProgram(0.0, 0.5, 1.0))).primal_value == pytest.approx(1.0, abs=1e-8)


def test_deterministic_output():
    res = pg_quantum(QuantumProgram(DELTA_HALF, 1.0, 0.5))
    assert res.p_guess == pytest.approx(1.0, abs=1e-9)
    assert res.min_entropy == pytest.approx(0.0, abs=1e-8)
    assert res.certificate_valid


def test_ui0_value_frozen():
    # grid+dual oracle at resolution 720 brackets this value within [0.8, 0.80004]
    res = pg_quantum(QuantumProgram(DELTA_HALF, 0.2, 1.0))
    assert res.p_guess == pytest.approx(0.8, abs=1e-6)
    assert res.ok


def test_max_confidence_examples():
    assert max_confidence_quantum(0.5, 0.3) == 1.0
    for delta in (0.1, 0.5, 0.9):
        assert max_confidence_quantum(delta, 1.0) == pytest.approx(0.5)
    # closed form: 1/2 + sqrt(3)/4 at delta = 1/2, eta0 = 1/2
    assert max_confidence_quantum(0.5, 0.5) == pytest.approx(0.9330127018922193, abs=1e-15)
    with pytest.raises(UndefinedConfidenceError):
        max_confidence_quantum(0.5, 0.0)
    with pytest.raises(UnsupportedConfigurationError):
        max_confidence_quantum(0.5, 0.5, Priors(0.4, 0.6))


@pytest.mark.parametrize("delta,eta0", [(0.5, 0.5), (0.5, 0.45), (0.8, 0.6), (0.3, 0.52)])
def test_max_confidence_matches_grid_search(delta, eta0):
    closed = max_confidence_quantum(delta, eta0)
    grid = _grid_max_confidence(delta, eta0)
    assert grid <= closed + 1e-12
    # the optimum sits on the corner R = r = 1, where the grid converges slowly
    assert closed - grid < 1e-3


@pytest.mark.parametrize("d2", [0.3, 0.5, 0.7])
def test_max_confidence_continuous_and_unit_in_ui0(d2):
    delta = math.sqrt(d2)
    lo, hi = 0.5 * (1 - delta**2), 0.5 * (1 + delta**2)
    for b in (lo, hi):
        jump = abs(max_confidence_quantum(delta, b + 1e-6) - max_confidence_quantum(delta, b - 1e-6))
        assert jump < 1e-4
    for eta0 in np.linspace(1e-3, lo, 30):
        assert max_confidence_quantum(delta, eta0) == 1.0
    assert max_confidence_quantum(delta, lo + 1e-9) < 1.0


@given(delta=st.floats(0.01, 0.99), eta0=st.floats(0.01, 1.0))
def test_optimal_element_reproduces_statistics(delta, eta0):
    el = optimal_povm_element(delta, eta0)
    s0, s1 = state_pair(delta)
    p0, p1 = born_probability(s0, el), born_probability(s1, el)
    assert 0.5 * (p0 + p1) == pytest.approx(eta0, abs=1e-9)
    assert 0.5 * p0 / eta0 == pytest.approx(max_confidence_quantum(delta, eta0), abs=1e-9)


def test_validator_examples():
    assert validate_statistics_quantum(0.5, 0.3, 1.0)
    assert not validate_statistics_quantum(0.5, 1.0, 0.9)
    assert not validate_statistics_quantum(0.5, 0.5, max_confidence_quantum(0.5, 0.5) + 0.01)
    # the mirror image bounds the confidence from below
    assert not validate_statistics_quantum(0.5, 0.5, 1 - max_confidence_quantum(0.5, 0.5) - 0.01)
    with pytest.raises(InfeasibleStatisticsError):
        build_primal(QuantumProgram(0.5, 1.0, 0.9))


def test_witness_reproduces_ui_statistics():
    lam, povm, value = honest_witness_quantum(0.5, 0.3)
    s0, s1 = state_pair(0.5)
    rho0, rho1 = s0.density_matrix(), s1.density_matrix()
    eta = 0.5 * np.real(np.trace(povm[0] @ rho0)) + 0.5 * np.real(np.trace(povm[0] @ rho1))
    assert eta == pytest.approx(0.3, abs=1e-12)
    assert np.real(np.trace(povm[0] @ rho1)) == pytest.approx(0.0, abs=1e-12)
    assert value <= pg_quantum(QuantumProgram(0.5, 0.3, 1.0)).p_guess + 1e-8


def test_monotone_in_constraint_set():
    # dropping the confidence constraint (any c0 is allowed) can only help the eavesdropper
    delta, eta0 = DELTA_HALF, 0.5
    cmax = max_confidence_quantum(delta, eta0)
    values = [pg_quantum(QuantumProgram(delta, eta0, c)).p_guess for c in np.linspace(1 - cmax, cmax, 7)]
    helstrom_like = max(values)
    assert all(v <= helstrom_like + 1e-9 for v in values)


def test_input_swap_symmetry():
    # relabeling inputs maps C0 to 1 - C0 at the same rate
    delta, eta0, c0 = DELTA_HALF, 0.5, 0.8
    a = pg_quantum(QuantumProgram(delta, eta0, c0)).p_guess
    b = pg_quantum(QuantumProgram(delta, eta0, 1 - c0)).p_guess
    assert a == pytest.approx(b, abs=1e-8)


@pytest.mark.parametrize("d2", [0.3, 0.5, 0.7])
def test_maximal_confidence_sweep_is_certified(d2):
    delta = math.sqrt(d2)
    bounds = (0.5 * (1 - d2), 0.5 * (1 + d2))
    for eta0 in np.linspace(0.01, 1.0, 100):
        eta0, _ = nudge_eta0(float(eta0), bounds)
        res = pg_quantum(QuantumProgram(delta, eta0, max_confidence_quantum(delta, eta0)))
        assert res.ok and res.gap <= 1e-8
        _, _, witness = honest_witness_quantum(delta, eta0)
        assert witness <= res.p_guess + 1e-8


def test_nudge_moves_boundary_points_into_ui_region():
    assert nudge_eta0(0.25, (0.25, 0.75)) == (0.25 - 1e-9, True)
    assert nudge_eta0(0.75, (0.25, 0.75)) == (0.75 + 1e-9, True)
    assert nudge_eta0(0.5, (0.25, 0.75)) == (0.5, False)


def test_fixed_settings_reproducible():
    qp = QuantumProgram(DELTA_HALF, 0.6, 0.75)
    a = pg_quantum(qp, SolverSettings())
    b = pg_quantum(qp, SolverSettings())
    assert a.p_guess == b.p_guess


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(0.05, 0.95), eta0=st.floats(0.05, 0.95))
def test_dominates_honest_witness(delta, eta0):
    res = pg_quantum(QuantumProgram(delta, eta0, max_confidence_quantum(delta, eta0)))
    _, _, witness = honest_witness_quantum(delta, eta0)
    assert witness <= res.p_guess + 1e-8
