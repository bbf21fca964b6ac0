import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcdcert.conic import NONNEG, solve
from mcdcert.noncontextual import (
    NoncontextualProgram,
    build_primal_nc,
    honest_witness_nc,
    max_confidence_nc,
    optimal_response,
    pg_nc_device_quantum_eve,
    pg_noncontextual,
    quantum_vs_nc_confidence,
    validate_statistics_nc,
)
from mcdcert.oracles import nc_vertex_oracle
from mcdcert.quantum import QuantumProgram, max_confidence_quantum, pg_quantum
from mcdcert.result import InfeasibleStatisticsError
from mcdcert.scenario import (
    Priors,
    UndefinedConfidenceError,
    UnsupportedConfigurationError,
    epistemic_states,
    nc_probability,
)


def test_program_has_108_scalar_blocks():
    problem = build_primal_nc(NoncontextualProgram(0.3, 0.5, 0.8))
    assert len(problem.blocks) == 108
    assert all(b.kind == NONNEG for b in problem.blocks)


def test_full_confusion_optimum():
    assert solve(build_primal_nc(NoncontextualProgram(1.0, 0.6, 0.5))).primal_value == pytest.approx(1.0, abs=1e-9)


def test_disjoint_states_optimum():
    nprog = NoncontextualProgram(0.0, 0.5, 1.0)
    assert pg_noncontextual(nprog).p_guess == pytest.approx(1.0, abs=1e-9)
    assert nc_vertex_oracle(nprog) == pytest.approx(1.0, abs=1e-12)


def test_deterministic_output():
    res = pg_noncontextual(NoncontextualProgram(0.5, 1.0, 0.5))
    assert res.p_guess == pytest.approx(1.0, abs=1e-12)
    assert res.min_entropy == pytest.approx(0.0, abs=1e-11)
    assert res.ok


def test_ui_value_matches_quantum():
    nc = pg_noncontextual(NoncontextualProgram(0.5, 0.2, 1.0)).p_guess
    q = pg_quantum(QuantumProgram(math.sqrt(0.5), 0.2, 1.0)).p_guess
    assert nc == pytest.approx(0.8, abs=1e-12)
    assert nc == pytest.approx(q, abs=1e-6)


def test_middle_regime_matches_vertex_oracle():
    nprog = NoncontextualProgram.maximal(0.3, 0.5)
    assert nprog.c0 == pytest.approx(0.85, abs=1e-15)
    assert pg_noncontextual(nprog).p_guess == pytest.approx(nc_vertex_oracle(nprog), abs=1e-9)


def test_max_confidence_examples():
    assert max_confidence_nc(0.3, 0.3) == 1.0
    for d in (0.0, 0.3, 0.9):
        assert max_confidence_nc(d, 1.0) == pytest.approx(0.5)
    assert max_confidence_nc(0.3, 0.5) == pytest.approx(0.85, abs=1e-15)
    with pytest.raises(UndefinedConfidenceError):
        max_confidence_nc(0.3, 0.0)
    with pytest.raises(UnsupportedConfigurationError):
        max_confidence_nc(0.3, 0.5, Priors(0.4, 0.6))


@pytest.mark.parametrize("d", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_max_confidence_shape(d):
    lo, hi = 0.5 * (1 - d), 0.5 * (1 + d)
    for b in (lo, hi):
        assert abs(max_confidence_nc(d, b + 1e-9) - max_confidence_nc(d, b - 1e-9)) < 1e-4
    assert max_confidence_nc(d, lo) == 1.0
    assert max_confidence_nc(d, lo + 1e-9) < 1.0
    tail = [max_confidence_nc(d, e) for e in np.linspace(lo, 1.0, 200)]
    assert np.all(np.diff(tail) <= 1e-15)


@given(d=st.floats(0.0, 1.0), eta0=st.floats(0.01, 1.0))
def test_optimal_response_reaches_max_confidence(d, eta0):
    xi = optimal_response(d, eta0)
    states = epistemic_states(d)
    p0, p1 = nc_probability(states["0"], xi), nc_probability(states["1"], xi)
    assert 0.5 * (p0 + p1) == pytest.approx(eta0, abs=1e-9)
    assert 0.5 * p0 / eta0 == pytest.approx(max_confidence_nc(d, eta0), abs=1e-9)


def test_validator_examples():
    assert validate_statistics_nc(0.3, 0.3, 1.0)
    assert not validate_statistics_nc(0.3, 1.0, 0.6)
    assert not validate_statistics_nc(0.3, 0.5, 0.86)
    with pytest.raises(InfeasibleStatisticsError):
        pg_noncontextual(NoncontextualProgram(0.3, 0.5, 0.86))


def test_nc_maximum_never_exceeds_quantum():
    for d in np.linspace(0.05, 0.95, 10):
        for eta0 in np.linspace(0.05, 1.0, 20):
            cq, cn = quantum_vs_nc_confidence(float(d), float(eta0))
            assert cn <= cq + 1e-12


def test_witness_reproduces_statistics_and_bounds_value():
    lam, responses, value = honest_witness_nc(0.3, 0.5)
    states = epistemic_states(0.3)
    p0 = nc_probability(states["0"], responses[0])
    p1 = nc_probability(states["1"], responses[0])
    assert 0.5 * (p0 + p1) == pytest.approx(0.5, abs=1e-12)
    assert 0.5 * p0 / 0.5 == pytest.approx(0.85, abs=1e-12)
    assert value <= pg_noncontextual(NoncontextualProgram(0.3, 0.5, 0.85)).p_guess + 1e-9


def test_quantum_eve_ui_point_equals_quantum():
    a = pg_nc_device_quantum_eve(NoncontextualProgram(0.5, 0.2, 1.0)).p_guess
    b = pg_quantum(QuantumProgram(math.sqrt(0.5), 0.2, 1.0)).p_guess
    assert a == pytest.approx(b, abs=1e-9)


def test_quantum_eve_dominated_by_quantum_device():
    delta = math.sqrt(0.5)
    nc_dev = pg_nc_device_quantum_eve(NoncontextualProgram.maximal(0.5, 0.5))
    q_dev = pg_quantum(QuantumProgram(delta, 0.5, max_confidence_quantum(delta, 0.5)))
    # frozen from the two solves
    assert nc_dev.p_guess == pytest.approx(0.8964466095, abs=1e-6)
    assert q_dev.p_guess == pytest.approx(0.8535533906, abs=1e-6)
    assert nc_dev.min_entropy <= q_dev.min_entropy


def test_quantum_eve_deterministic_output():
    assert pg_nc_device_quantum_eve(NoncontextualProgram(0.5, 1.0, 0.5)).p_guess == pytest.approx(1.0, abs=1e-9)


def test_crossover_at_half_rate():
    def hmin_pair(d):
        delta = math.sqrt(d)
        hq = pg_quantum(QuantumProgram(delta, 0.5, max_confidence_quantum(delta, 0.5))).min_entropy
        hn = pg_noncontextual(NoncontextualProgram.maximal(d, 0.5)).min_entropy
        return hq, hn

    hq, hn = hmin_pair(0.3)
    assert hn - hq == pytest.approx(0.23446525363702278 - 0.12291539773434734, abs=1e-6)
    hq, hn = hmin_pair(0.7)
    assert hn - hq == pytest.approx(0.23446525363702278 - 0.36985312075587956, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(d=st.floats(0.02, 0.98), eta0=st.floats(0.02, 1.0), frac=st.floats(0.0, 1.0))
def test_matches_vertex_oracle_on_random_feasible_instances(d, eta0, frac):
    cmax = max_confidence_nc(d, eta0)
    c0 = (1 - cmax) + frac * (2 * cmax - 1)
    nprog = NoncontextualProgram(d, eta0, c0)
    res = pg_noncontextual(nprog)
    assert res.ok
    assert res.p_guess == pytest.approx(nc_vertex_oracle(nprog), abs=1e-9)
