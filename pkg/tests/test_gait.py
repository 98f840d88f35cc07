"""Schedule tests: validation, phases, flight phases, exactness properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundlab.gait import (FlightPhases, GaitParams, flight_phases,
                           leg_phase, stance_duration, stance_intervals,
                           swing_duration, validate)

BASELINE = GaitParams(0.22, 0.50, 0.22)


# ---------------------------------------------------------------------------
# validation


def test_baseline_params_ok():
    result = validate(BASELINE)
    assert result.ok and not result.warnings


def test_zero_duty_factor_rejected():
    result = validate(GaitParams(0.0, 0.5, 0.22))
    assert not result.ok
    assert any("duty factor" in v for v in result.violations)


def test_swing_time_risk_warning():
    result = validate(GaitParams(0.70, 0.5, 0.22))
    assert result.ok
    assert any("swing-time risk" in w for w in result.warnings)


@pytest.mark.parametrize("params", [
    GaitParams(1.2, 0.5, 0.22),
    GaitParams(0.3, 1.0, 0.22),
    GaitParams(0.3, -0.1, 0.22),
    GaitParams(0.3, 0.5, 0.0),
])
def test_out_of_range_rejected(params):
    assert not validate(params).ok


# ---------------------------------------------------------------------------
# leg phases


def test_rear_leg_swing_sample():
    # at t = 0.05 s the rear stance window [0, 0.0484) is over
    ph = leg_phase(BASELINE, 0.05, "RR")
    assert not ph.in_stance
    expected = (0.05 - 0.0484) / (0.22 - 0.0484)
    assert abs(ph.swing_progress - expected) < 1e-12


def test_front_touchdown_at_phase_shift():
    ph = leg_phase(BASELINE, 0.11, "FR")  # phi * T = 0.11 s
    assert ph.in_stance
    assert abs(ph.stance_time) < 1e-12


def test_full_duty_factor_always_stance():
    params = GaitParams(1.0, 0.5, 0.22)
    for t in np.linspace(0, 1.0, 101):
        for leg in ("FR", "FL", "RR", "RL"):
            assert leg_phase(params, t, leg).in_stance


def test_stance_time_within_window():
    for t in np.linspace(0, 0.66, 300):
        ph = leg_phase(BASELINE, t, "RL")
        if ph.in_stance:
            assert 0.0 <= ph.stance_time < stance_duration(BASELINE)
        else:
            assert 0.0 <= ph.swing_progress < 1.0


# ---------------------------------------------------------------------------
# flight phases


def test_baseline_two_flight_phases():
    fp = flight_phases(BASELINE)
    assert fp.count == 2
    np.testing.assert_allclose(fp.durations, [0.0616, 0.0616], atol=1e-12)


def test_large_duty_factor_no_flight():
    assert flight_phases(GaitParams(0.60, 0.5, 0.22)).count == 0


def test_boundary_duty_factor_no_flight():
    fp = flight_phases(GaitParams(0.50, 0.5, 0.22))
    assert fp.count == 0
    assert fp.durations == ()


def test_pronk_single_flight():
    # both pairs together: one aerial interval per stride
    fp = flight_phases(GaitParams(0.30, 0.0, 0.25))
    assert fp.count == 1
    np.testing.assert_allclose(fp.durations, [0.7 * 0.25], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(g=st.floats(0.05, 0.95), p=st.floats(0.0, 0.99),
       T=st.floats(0.05, 0.5))
def test_flight_count_matches_symbolic_rule(g, p, T):
    # two flights exactly when the duty factor is below both schedule gaps
    fp = flight_phases(GaitParams(g, p, T))
    gap = min(p, 1.0 - p)
    if g < gap - 1e-9:
        assert fp.count == 2
    elif g > 1.0 - 1e-9 or gap == 0.0:
        assert fp.count <= 1


def test_flight_boundary_reduces_to_half_for_symmetric_phase():
    # phi = 0.5: two flights exactly when gamma < 0.5
    for g in (0.44, 0.48, 0.499):
        assert flight_phases(GaitParams(g, 0.5, 0.22)).count == 2
    for g in (0.5, 0.52, 0.6):
        assert flight_phases(GaitParams(g, 0.5, 0.22)).count == 0


# ---------------------------------------------------------------------------
# exactness properties


@settings(max_examples=100, deadline=None)
@given(g=st.floats(0.05, 1.0), p=st.floats(0.0, 0.99),
       T=st.floats(0.05, 0.5))
def test_scheduled_stance_fraction_exact(g, p, T):
    params = GaitParams(g, p, T)
    for leg in ("FR", "RR"):
        measure = sum(e - s for s, e in stance_intervals(params, leg))
        assert measure == pytest.approx(g, abs=1e-15)


@settings(max_examples=150, deadline=None)
@given(g=st.floats(0.05, 1.0), p=st.floats(0.0, 0.99),
       T=st.floats(0.05, 0.5), t=st.floats(0.0, 10.0))
def test_periodicity_and_pair_symmetry(g, p, T, t):
    params = GaitParams(g, p, T)
    for leg_a, leg_b in (("RR", "RL"), ("FR", "FL")):
        pa = leg_phase(params, t, leg_a)
        pb = leg_phase(params, t, leg_b)
        assert pa == pb  # left/right swap within a pair
    for leg in ("RR", "FR"):
        p0 = leg_phase(params, t, leg)
        # skip samples within float noise of a stance boundary: the +T
        # representation error can legitimately flip in_stance there
        offset = (p0.stance_time / T if p0.in_stance
                  else g + p0.swing_progress * (1.0 - g))
        if min(abs(offset), abs(offset - g), abs(offset - 1.0)) < 1e-9:
            continue
        p1 = leg_phase(params, t + T, leg)
        assert p0.in_stance == p1.in_stance
        if p0.in_stance:
            assert abs(p0.stance_time - p1.stance_time) < 1e-9 * max(1, t / T)


def test_stance_swing_durations():
    assert stance_duration(BASELINE) == pytest.approx(0.0484)
    assert swing_duration(BASELINE) == pytest.approx(0.22 - 0.0484)


def test_random_sampling_stance_fraction(rng):
    # sampled stance fraction converges to the duty factor
    params = GaitParams(0.37, 0.31, 0.19)
    ts = rng.uniform(0, 100 * params.stride_duration, 200000)
    frac = np.mean([leg_phase(params, t, "FL").in_stance for t in ts])
    assert abs(frac - 0.37) < 0.005
