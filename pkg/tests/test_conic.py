import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcdcert import conic
from mcdcert.conic import (
    MAX_ITERATIONS,
    NONNEG,
    OPTIMAL,
    PSD2,
    Block,
    ConicProblem,
    ConicSolution,
    Constraint,
    DegenerateConstraintError,
    DualInfeasibleError,
    SolverSettings,
    check_dual_certificate,
    extract_bound,
    psd2_eigenvalues,
    scale_and_precondition,
    solve,
)
from mcdcert.quantum import QuantumProgram, build_primal, max_confidence_quantum
from mcdcert.scenario import STRATEGIES

I2 = np.eye(2)


def _unit_trace_problem():
    return ConicProblem(
        blocks=(Block(PSD2),),
        objective={0: I2},
        constraints=(Constraint({0: I2}, 1.0),),
        trace_bound=1.0,
    )


def _scalar_problem(scale=1.0):
    return ConicProblem(
        blocks=(Block(NONNEG), Block(NONNEG)),
        objective={0: 1.0},
        constraints=(
            Constraint({0: scale}, 0.3 * scale),
            Constraint({0: 1.0, 1: 1.0}, 1.0),
        ),
    )


def _solution(problem, y):
    return ConicSolution(OPTIMAL, math.nan, math.nan, 0.0, 0.0, 0.0, (), np.asarray(y, float), 0)


def test_unit_trace_psd_block():
    sol = solve(_unit_trace_problem())
    assert sol.status == OPTIMAL
    assert sol.primal_value == pytest.approx(1.0, abs=1e-8)
    (x,) = sol.primal_variables
    assert np.trace(x).real == pytest.approx(1.0, abs=1e-8)
    assert min(psd2_eigenvalues(x)) >= -1e-9


def test_single_scalar_block():
    sol = solve(_scalar_problem())
    assert sol.status == OPTIMAL
    assert sol.primal_value == pytest.approx(0.3, abs=1e-9)


def test_identical_states_give_certain_guess():
    sol = solve(build_primal(QuantumProgram(1.0, 0.6, 0.5)))
    assert sol.status == OPTIMAL
    assert sol.primal_value == pytest.approx(1.0, abs=1e-8)
    report = check_dual_certificate(build_primal(QuantumProgram(1.0, 0.6, 0.5)), sol)
    assert report.valid
    assert report.bound == pytest.approx(1.0, abs=1e-7)


def test_optimality_criteria_on_quantum_instance():
    problem = build_primal(QuantumProgram(math.sqrt(0.5), 0.4, 0.9))
    sol = solve(problem)
    assert sol.status == OPTIMAL
    assert sol.gap <= 1e-8
    assert sol.primal_residual <= 1e-8 and sol.dual_residual <= 1e-8
    for block in sol.primal_variables:
        assert min(psd2_eigenvalues(block)) >= -1e-9


def test_hand_built_certificate_is_judged_by_slack_scan():
    problem = build_primal(QuantumProgram(math.sqrt(0.5), 1.0, 0.5))
    # physical multipliers nu = (-1, 0), chi = 0, H = 0; solver multipliers are their negatives
    y = np.zeros(problem.n_constraints)
    y[28] = 1.0
    report = check_dual_certificate(problem, _solution(problem, y))
    slacks = conic.dual_slacks(problem, y)
    worst = max(max(0.0, -min(np.linalg.eigvalsh(s))) for s in slacks)
    assert report.valid == (worst <= report.tolerance)
    assert report.max_violation == pytest.approx(worst, abs=1e-12)
    assert report.bound == pytest.approx(1.0 * 1.0 * 0.5, abs=1e-15)


def test_corrupted_certificate_rejected():
    problem = build_primal(QuantumProgram(math.sqrt(0.5), 0.5, 0.8))
    sol = solve(problem)
    y = sol.dual_multipliers.copy()
    y[27] -= 0.1
    report = check_dual_certificate(problem, _solution(problem, y))
    assert not report.valid
    assert report.max_violation > 1e-3


def test_bound_matches_primal_on_interior_instance():
    problem = build_primal(QuantumProgram(math.sqrt(0.5), 0.5, 0.8))
    sol = solve(problem)
    # the primal iterate is feasible only to 1e-10, so equality holds within the gap tolerance
    assert extract_bound(problem, sol) == pytest.approx(sol.primal_value, abs=1e-8)


def test_bound_after_facial_reduction_is_valid():
    # maximal confidence: the lifted certificate is looser but still an upper bound
    delta = math.sqrt(0.5)
    problem = build_primal(QuantumProgram(delta, 0.27, max_confidence_quantum(delta, 0.27)))
    sol = solve(problem)
    bound = extract_bound(problem, sol)
    assert sol.primal_value - 1e-9 <= bound <= sol.primal_value + 2e-6


def test_early_termination_still_bounds():
    problem = build_primal(QuantumProgram(math.sqrt(0.5), 0.5, 0.8))
    full = solve(problem)
    early = solve(problem, SolverSettings(max_iter=5, fallback_tol=None))
    assert early.status == MAX_ITERATIONS
    assert extract_bound(problem, early) >= full.primal_value - 1e-9


def test_orthogonal_states_bound_is_one():
    problem = build_primal(QuantumProgram(0.0, 0.5, 1.0))
    sol = solve(problem)
    assert extract_bound(problem, sol) == pytest.approx(1.0, abs=1e-7)


def test_infeasible_multipliers_rejected_without_trace_bound():
    problem = _scalar_problem()
    with pytest.raises(DualInfeasibleError):
        extract_bound(problem, _solution(problem, [0.0, -1.0]))
    with pytest.raises(DualInfeasibleError):
        extract_bound(problem, _solution(problem, [math.nan, 0.0]))


def test_preconditioning_identity_on_normalized_rows():
    problem = ConicProblem(
        blocks=(Block(NONNEG), Block(NONNEG)),
        objective={0: 1.0},
        constraints=(Constraint({0: 1.0}, 0.3),),
    )
    scaled = scale_and_precondition(problem)
    assert scaled.constraints[0].coeffs[0] == 1.0
    assert scaled.constraints[0].rhs == 0.3
    np.testing.assert_array_equal(scaled.row_scale, [1.0])


def test_preconditioning_scaling_invariance():
    plain = solve(_scalar_problem())
    scaled = solve(_scalar_problem(1e6))
    assert scaled.primal_value == pytest.approx(plain.primal_value, abs=1e-9)


def test_zero_row_rejected():
    problem = ConicProblem(
        blocks=(Block(NONNEG),), objective={0: 1.0}, constraints=(Constraint({}, 0.0),)
    )
    with pytest.raises(DegenerateConstraintError):
        scale_and_precondition(problem)


def test_preconditioning_does_not_change_quantum_value():
    delta = math.sqrt(0.5)
    problem = build_primal(QuantumProgram(delta, 0.5, max_confidence_quantum(delta, 0.5)))
    on = solve(problem, SolverSettings(precondition=True))
    off = solve(problem, SolverSettings(precondition=False))
    assert on.primal_value == pytest.approx(off.primal_value, abs=1e-8)


def test_debug_mode_checks_weak_duality():
    records = []
    problem = build_primal(QuantumProgram(math.sqrt(0.3), 0.45, 0.85))
    sol = solve(problem, SolverSettings(debug=True, trace=records.append))
    assert sol.status == OPTIMAL
    assert records


def test_solve_is_deterministic():
    problem = build_primal(QuantumProgram(math.sqrt(0.7), 0.6, 0.7))
    a, b = solve(problem), solve(problem)
    assert a.status == b.status
    assert a.primal_value == b.primal_value
    np.testing.assert_array_equal(a.dual_multipliers, b.dual_multipliers)


def test_strategy_permutation_invariance():
    problem = build_primal(QuantumProgram(math.sqrt(0.5), 0.45, 0.8))
    rng = np.random.default_rng(3)
    perm = rng.permutation(len(STRATEGIES))
    # block k = 3 * strategy + outcome; move every strategy's three blocks together
    new_index = {3 * li + b: 3 * int(perm[li]) + b for li in range(9) for b in range(3)}

    def remap(coeffs):
        return {new_index[k]: v for k, v in coeffs.items()}

    blocks = [None] * len(problem.blocks)
    for k, blk in enumerate(problem.blocks):
        blocks[new_index[k]] = blk
    permuted = ConicProblem(
        blocks=tuple(blocks),
        objective=remap(problem.objective),
        constraints=tuple(Constraint(remap(c.coeffs), c.rhs, c.label) for c in problem.constraints),
        trace_bound=problem.trace_bound,
    )
    assert solve(permuted).primal_value == pytest.approx(solve(problem).primal_value, abs=1e-8)


def test_infeasible_program_detected():
    problem = ConicProblem(
        blocks=(Block(NONNEG), Block(NONNEG)),
        objective={0: 1.0},
        constraints=(Constraint({0: 1.0, 1: 1.0}, -1.0),),
    )
    assert solve(problem).status == conic.INFEASIBLE


def test_unbounded_program_detected():
    problem = ConicProblem(
        blocks=(Block(NONNEG), Block(NONNEG)),
        objective={0: 1.0},
        constraints=(Constraint({0: 1.0, 1: -1.0}, 0.0),),
    )
    assert solve(problem).status == conic.UNBOUNDED


@settings(max_examples=50, deadline=None)
# confidences on either end of the feasible interval, or clearly inside it;
# statistics within ~1e-7 of the ends are expected to stall (see the solver notes)
@given(
    delta=st.floats(0.05, 0.95),
    eta0=st.floats(0.05, 0.95),
    frac=st.one_of(st.sampled_from([0.0, 1.0]), st.floats(0.01, 0.99)),
)
def test_certificates_valid_on_random_instances(delta, eta0, frac):
    cmax = max_confidence_quantum(delta, eta0)
    c0 = (1 - cmax) + frac * (2 * cmax - 1)
    problem = build_primal(QuantumProgram(delta, eta0, c0))
    sol = solve(problem)
    assert sol.status == OPTIMAL
    assert check_dual_certificate(problem, sol).valid
    # the primal point is feasible only to the solver tolerance
    assert extract_bound(problem, sol) >= sol.primal_value - 1e-8
