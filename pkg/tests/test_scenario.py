import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcdcert.scenario import (
    INTERIOR,
    NONCONTEXTUAL,
    QUANTUM,
    STRATEGIES,
    UI_0,
    DomainError,
    EpistemicMatrix,
    Overlap,
    PovmElement,
    Priors,
    QubitState,
    ResponseMatrix,
    UndefinedConfidenceError,
    UnsupportedConfigurationError,
    born_probability,
    classify_region,
    confidence_from_stats,
    epistemic_states,
    helstrom_error,
    is_complete_povm,
    is_complete_response,
    min_entropy,
    nc_probability,
    nc_probability_hadamard,
    region_boundaries,
    state_pair,
    usd_inconclusive_rate,
)

unit = st.floats(0.0, 1.0)
angle = st.floats(0.0, 2 * math.pi)


def test_born_probability_projectors():
    plus_z = QubitState(0.0, 0.0, 1.0)
    assert born_probability(plus_z, PovmElement(1, 1, 0.0)) == pytest.approx(1.0, abs=1e-15)
    assert born_probability(plus_z, PovmElement(1, 1, math.pi)) == pytest.approx(0.0, abs=1e-15)


def test_born_probability_unambiguous_element():
    _, psi1 = state_pair(0.6)
    phi = math.acos(0.6)
    assert born_probability(psi1, PovmElement(1, 1, phi + math.pi)) == pytest.approx(0.0, abs=1e-15)


def test_invalid_povm_rejected():
    with pytest.raises(DomainError):
        PovmElement(-0.1, 0.5, 0.0)
    with pytest.raises(DomainError):
        PovmElement(1.0, 1.5, 0.0)


def test_states_must_be_in_xz_plane():
    with pytest.raises(DomainError):
        QubitState(0.0, 0.5, 0.0)
    with pytest.raises(DomainError):
        QubitState(0.9, 0.0, 0.9)


@settings(max_examples=100, deadline=None)
@given(state_angle=angle, mixing=unit, r=unit, theta=angle, weight=st.floats(0.0, 1.0))
def test_born_probabilities_sum_to_one(state_angle, mixing, r, theta, weight):
    state = QubitState(mixing * math.sin(state_angle), 0.0, mixing * math.cos(state_angle))
    first = PovmElement(weight, r, theta)
    # complete the POVM with the complement of the first element
    rest = 2.0 - weight
    vec = -weight * first.bloch
    rest_r = np.linalg.norm(vec) / rest
    rest_theta = math.atan2(vec[0], vec[2])
    second = PovmElement(rest, rest_r, rest_theta)
    assert is_complete_povm([first, second])
    total = born_probability(state, first) + born_probability(state, second)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_nc_probability_examples():
    mu0 = epistemic_states(0.5)["0"]
    assert nc_probability(mu0, ResponseMatrix(np.ones((2, 2)))) == pytest.approx(1.0)
    mu0 = epistemic_states(0.3)["0"]
    assert nc_probability(mu0, ResponseMatrix.from_entries(1, 1, 0, 0)) == pytest.approx(1.0)
    assert nc_probability(mu0, ResponseMatrix.from_entries(0, 1, 0, 0)) == pytest.approx(0.3)


def test_negative_entries_rejected():
    with pytest.raises(DomainError):
        EpistemicMatrix(np.array([[0.5, -0.1], [0.3, 0.3]]))
    with pytest.raises(DomainError):
        ResponseMatrix.from_entries(-0.5, 0, 0, 1)


def _random_response_set(rng):
    cut = np.sort(rng.random((2, 2, 2)), axis=0)
    parts = [cut[0], cut[1] - cut[0], 1.0 - cut[1]]
    return [ResponseMatrix(p) for p in parts]


@pytest.mark.parametrize("key", ["0", "1", "0bar", "1bar"])
def test_nc_probabilities_sum_to_one_canonical(key):
    rng = np.random.default_rng(7)
    for d in np.linspace(0, 1, 11):
        mu = epistemic_states(d)[key]
        for _ in range(10):
            responses = _random_response_set(rng)
            assert is_complete_response(responses)
            assert sum(nc_probability(mu, xi) for xi in responses) == pytest.approx(1.0, abs=1e-12)


def test_nc_probabilities_sum_to_one_random_states():
    rng = np.random.default_rng(11)
    for _ in range(100):
        mu = EpistemicMatrix(rng.dirichlet(np.ones(4)).reshape(2, 2))
        responses = _random_response_set(rng)
        assert sum(nc_probability(mu, xi) for xi in responses) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(d=unit, seed=st.integers(0, 2**16))
def test_trace_and_hadamard_forms_agree(d, seed):
    rng = np.random.default_rng(seed)
    xi = ResponseMatrix(rng.random((2, 2)))
    for mu in epistemic_states(d).values():
        assert nc_probability(mu, xi) == pytest.approx(nc_probability_hadamard(mu, xi), abs=1e-14)


@pytest.mark.parametrize("d", np.linspace(0, 1, 50))
def test_epistemic_pairs_disjoint_and_mix(d):
    states = epistemic_states(d)
    for x, xbar in (("0", "0bar"), ("1", "1bar")):
        assert np.all(states[x].m * states[xbar].m == 0.0)
        mix = 0.5 * states[x].m + 0.5 * states[xbar].m
        np.testing.assert_allclose(mix, states["mixed"].m, atol=1e-15)


def test_confidence_from_stats():
    assert confidence_from_stats(Priors(), 1.0, 0.5) == 1.0
    for q in (0.1, 0.4, 0.9):
        assert confidence_from_stats(Priors(), q, q) == pytest.approx(0.5)
    assert confidence_from_stats(Priors(), 0.8, 0.5) == pytest.approx(0.8)
    with pytest.raises(UndefinedConfidenceError):
        confidence_from_stats(Priors(), 0.3, 0.0)
    with pytest.raises(DomainError):
        confidence_from_stats(Priors(), 1.0, 0.3)


def test_min_entropy_values():
    assert min_entropy(1.0) == 0.0
    assert min_entropy(0.5) == 1.0
    assert min_entropy(0.75) == pytest.approx(math.log2(4 / 3), abs=1e-15)
    for bad in (0.0, -0.1, 1.0 + 1e-11):
        with pytest.raises(DomainError):
            min_entropy(bad)


@given(a=st.floats(1e-6, 1.0), b=st.floats(1e-6, 1.0))
def test_min_entropy_strictly_decreasing(a, b):
    if a < b:
        assert min_entropy(a) > min_entropy(b)


def test_helstrom_values():
    assert helstrom_error(Priors(), 0.0) == 0.0
    assert helstrom_error(Priors(), 1.0) == 0.5
    assert helstrom_error(Priors(), 0.6) == pytest.approx(0.1, abs=1e-16)


def test_helstrom_monotone():
    values = [helstrom_error(Priors(0.3, 0.7), d) for d in np.linspace(0, 1, 200)]
    assert np.all(np.diff(values) >= 0)


def test_usd_rate():
    for d in (0.0, 0.4, 1.0):
        assert usd_inconclusive_rate(d) == d
    with pytest.raises(UnsupportedConfigurationError):
        usd_inconclusive_rate(0.4, Priors(0.3, 0.7))


def test_priors_validation():
    with pytest.raises(DomainError):
        Priors(0.6, 0.6)
    assert not Priors(0.3, 0.7).unbiased


def test_classify_region_examples():
    info = classify_region(QUANTUM, Overlap.from_confusability(0.5), 0.2)
    assert info.label == UI_0
    assert (info.lower, info.upper) == pytest.approx((0.25, 0.75))
    info = classify_region(NONCONTEXTUAL, Overlap.from_confusability(0.3), 0.5)
    assert info.label == INTERIOR
    assert (info.lower, info.upper) == pytest.approx((0.35, 0.65))
    overlap = Overlap.from_delta(math.sqrt(0.5))
    lo, _ = region_boundaries(QUANTUM, overlap)
    assert classify_region(QUANTUM, overlap, lo).label == UI_0


@given(d=unit)
def test_calibrated_boundaries_coincide(d):
    overlap = Overlap.from_confusability(d)
    q = region_boundaries(QUANTUM, overlap)
    n = region_boundaries(NONCONTEXTUAL, overlap)
    assert q == pytest.approx(n, abs=1e-15)
    assert q[0] == pytest.approx(0.5 * (1 - overlap.delta**2), abs=1e-16)


def test_nine_strategies():
    assert len(STRATEGIES) == 9
    assert len({s.name for s in STRATEGIES}) == 9
