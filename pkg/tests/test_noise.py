import numpy as np
import pytest
from hypothesis import given, strategies as st

from driftdem.noise import (
    DriftProfile,
    NoiseConfigError,
    SineComponent,
    assignment_from_config,
    assignment_to_config,
    count_clamps,
    depolarize_probabilities,
    flip_groups,
    sample_rate,
    shift_profile,
    sine_profile,
    static_profile,
    uniform_assignment,
)

TWO_PI = 2 * np.pi


def test_static_profile_rate():
    prof = static_profile(0.1)
    assert sample_rate(prof, 0) == 0.1
    assert sample_rate(prof, 12345) == 0.1


def test_sine_profile_at_zero_and_quarter_period():
    prof = sine_profile(0.1, [0.05], [1e4])
    assert sample_rate(prof, 0) == pytest.approx(0.1)
    assert sample_rate(prof, 2500) == pytest.approx(0.15)


def test_sample_rate_vectorized_matches_scalar():
    prof = sine_profile(0.05, [0.02, 0.01], [300, 77])
    ns = np.arange(50)
    vec = sample_rate(prof, ns)
    assert vec.shape == (50,)
    for n in (0, 3, 49):
        assert vec[n] == pytest.approx(sample_rate(prof, n))


def test_component_periodicity_exact_for_integer_period():
    prof = sine_profile(0.2, [0.1], [400])
    for n in (0, 17, 399):
        assert sample_rate(prof, n) == pytest.approx(sample_rate(prof, n + 400), abs=1e-12)


def test_validation_rejects_negative_and_oversized():
    with pytest.raises(NoiseConfigError):
        DriftProfile(g0=-0.1)
    with pytest.raises(NoiseConfigError):
        DriftProfile(g0=0.5, components=(SineComponent(-0.1, 0.1),))
    with pytest.raises(NoiseConfigError):
        DriftProfile(g0=0.5, components=(SineComponent(0.3, 0.1),))


def test_validation_warns_above_half():
    with pytest.warns(UserWarning):
        DriftProfile(g0=0.4, components=(SineComponent(0.2, 0.1),))


def test_clamp_counting():
    with pytest.warns(UserWarning):
        prof = DriftProfile(g0=0.1, components=(SineComponent(0.5, TWO_PI / 100),))
    ns = np.arange(1000)
    assert count_clamps(prof, ns) > 0
    assert np.all(sample_rate(prof, ns) >= 0.0)
    safe = sine_profile(0.1, [0.05], [100])
    assert count_clamps(safe, ns) == 0


@pytest.mark.parametrize("g,arity,each,n_terms", [
    (0.09, 1, 0.03, 3),
    (0.15, 2, 0.01, 15),
])
def test_depolarize_even_split(g, arity, each, n_terms):
    terms = depolarize_probabilities(g, arity)
    assert len(terms) == n_terms
    assert all(p == pytest.approx(each) for _, p in terms)


def test_depolarize_zero_is_empty():
    assert depolarize_probabilities(0.0, 1) == []
    assert depolarize_probabilities(0.0, 2) == []


@given(st.floats(min_value=0.0, max_value=1.0), st.sampled_from([1, 2]))
def test_depolarize_terms_sum_to_g(g, arity):
    terms = depolarize_probabilities(g, arity)
    assert sum(p for _, p in terms) == pytest.approx(g, abs=1e-15)


def test_flip_groups_fractions():
    assert flip_groups(1, "Z") == {(True,): pytest.approx(2 / 3)}
    assert flip_groups(1, "X") == {(True,): pytest.approx(2 / 3)}
    g2 = flip_groups(2, "Z")
    assert g2[(True, False)] == pytest.approx(4 / 15)
    assert g2[(False, True)] == pytest.approx(4 / 15)
    assert g2[(True, True)] == pytest.approx(4 / 15)


def test_shift_profile_aligns_rates():
    prof = sine_profile(0.1, [0.04], [1e3], phases=[0.3])
    shifted = shift_profile(prof, 250)
    for n in (0, 10, 999):
        assert sample_rate(shifted, n) == pytest.approx(sample_rate(prof, n + 250), abs=1e-12)


def test_assignment_config_round_trip():
    locs = [("d1", "depolarize1"), ("a1", "depolarize1"), ("g1", "depolarize2")]
    assign = uniform_assignment(locs, sine_profile(0.07, [0.035], [1e4]))
    doc = assignment_to_config(assign)
    back = assignment_from_config(doc)
    assert back.locations() == assign.locations()
    for loc, _ in locs:
        a, b = assign.channel(loc).profile, back.channel(loc).profile
        assert a.g0 == b.g0
        assert all(
            c1.amplitude == pytest.approx(c2.amplitude) and c1.omega == pytest.approx(c2.omega)
            for c1, c2 in zip(a.components, b.components)
        )


def test_assignment_config_errors():
    with pytest.raises(NoiseConfigError):
        assignment_from_config({})
    with pytest.raises(NoiseConfigError):
        assignment_from_config({"locations": [{"kind": "depolarize1", "g0": 0.1}]})
    dup = {"locations": [
        {"location": "d1", "kind": "depolarize1", "g0": 0.1, "components": []},
        {"location": "d1", "kind": "depolarize1", "g0": 0.2, "components": []},
    ]}
    with pytest.raises(NoiseConfigError):
        assignment_from_config(dup)
