import dataclasses

import pytest

from corkland.adhesion import (ENGAGEMENT_QUANTUM, MechanismState, PulloffScaling,
                               advance_engagement, diameter_sweep, holding_capacity, is_secured,
                               pulloff_test, tension_and_ripout)
from corkland.core import CorkscrewGeometry, MechanismParams

PARAMS = MechanismParams(no_load_speed_rps=2.0, force_per_turn_n=1.5, shear_per_turn_n=1.0,
                         grab_threshold_turns=0.25, secure_threshold_turns=1.0)


def _run(ms, seconds, dt=1e-3, params=PARAMS):
    for _ in range(round(seconds / dt)):
        ms = advance_engagement(ms, dt, params)
    return ms


def test_full_duty_half_second_is_one_turn():
    ms = MechanismState(duty=1.0, direction="forward", tip_in_contact=True)
    assert advance_engagement(ms, 0.5, PARAMS).engagement_turns == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("dt", [1e-4, 0.3, 5.0])
def test_off_leaves_engagement_unchanged(dt):
    ms = MechanismState(engagement_turns=1.25, duty=1.0, direction="off", tip_in_contact=True)
    assert advance_engagement(ms, dt, PARAMS).engagement_turns == 1.25


def test_forward_needs_contact():
    ms = MechanismState(duty=1.0, direction="forward", tip_in_contact=False)
    assert advance_engagement(ms, 0.5, PARAMS).engagement_turns == 0.0


def test_reverse_without_contact():
    ms = MechanismState(engagement_turns=1.0, duty=1.0, direction="reverse")
    assert advance_engagement(ms, 0.25, PARAMS).engagement_turns == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("duty,t", [(0.15, 0.7), (0.45, 1.9), (0.75, 3.3), (1.0, 0.01)])
def test_forward_matches_closed_form(duty, t):
    ms = MechanismState(duty=duty, direction="forward", tip_in_contact=True)
    got = _run(ms, t).engagement_turns
    expected = min(PARAMS.geometry.turns, PARAMS.no_load_speed_rps * duty * t)
    assert abs(got - expected) <= 1e-9


def test_low_duty_clamps_at_full_turns():
    t = PARAMS.geometry.turns / (0.15 * PARAMS.no_load_speed_rps)
    ms = MechanismState(duty=0.15, direction="forward", tip_in_contact=True)
    assert _run(ms, t + 0.5).engagement_turns == 3.0


@pytest.mark.parametrize("start_turns", [0.0, 0.75])
@pytest.mark.parametrize("duty", [0.15, 0.45, 0.75, 1.0])
def test_reverse_symmetry_is_exact(duty, start_turns):
    start = MechanismState(engagement_turns=start_turns, duty=duty, direction="forward",
                           tip_in_contact=True)
    there = _run(start, 0.4)
    back = _run(dataclasses.replace(there, direction="reverse"), 0.4)
    assert back.engagement_turns == start.engagement_turns


def test_off_grid_start_returns_within_one_quantum():
    start = MechanismState(engagement_turns=0.7, duty=0.45, direction="forward", tip_in_contact=True)
    back = _run(dataclasses.replace(_run(start, 0.4), direction="reverse"), 0.4)
    assert abs(back.engagement_turns - 0.7) <= ENGAGEMENT_QUANTUM


def test_engagement_stays_on_grid():
    ms = _run(MechanismState(duty=0.45, direction="forward", tip_in_contact=True), 0.123)
    assert (ms.engagement_turns / ENGAGEMENT_QUANTUM).is_integer()


def test_reverse_floors_at_zero():
    ms = MechanismState(engagement_turns=0.1, duty=1.0, direction="reverse")
    assert _run(ms, 1.0).engagement_turns == 0.0


def test_capacity_zero_below_grab():
    assert holding_capacity(MechanismState(engagement_turns=0.2), PARAMS) == (0.0, 0.0)


def test_capacity_linear_above_grab():
    pull, shear = holding_capacity(MechanismState(engagement_turns=2.0), PARAMS)
    assert (pull, shear) == pytest.approx((3.0, 2.0))


def test_capacity_monotone():
    caps = [holding_capacity(MechanismState(engagement_turns=e / 10), PARAMS)[0] for e in range(31)]
    assert all(b >= a for a, b in zip(caps, caps[1:]))


def test_demand_within_capacity_transmits():
    ms = MechanismState(engagement_turns=2.0)
    (pull, shear), after = tension_and_ripout(ms, 2.9, -1.9, PARAMS)
    assert (pull, shear) == (2.9, -1.9)
    assert after == ms


@pytest.mark.parametrize("pull,shear", [(3.1, 0.0), (0.0, 2.1), (0.0, -2.1)])
def test_overload_rips_out(pull, shear):
    (tp, ts), after = tension_and_ripout(MechanismState(engagement_turns=2.0), pull, shear, PARAMS)
    assert (tp, ts) == (0.0, 0.0)
    assert after.ripped_out and after.engagement_turns == 0.0


def test_rip_out_latches():
    _, ripped = tension_and_ripout(MechanismState(engagement_turns=2.0), 10.0, 0.0, PARAMS)
    (tp, ts), again = tension_and_ripout(ripped, 0.0, 0.0, PARAMS)
    assert (tp, ts) == (0.0, 0.0) and again.ripped_out
    moved = advance_engagement(dataclasses.replace(ripped, duty=1.0, direction="forward",
                                                   tip_in_contact=True), 0.5, PARAMS)
    assert moved.engagement_turns == 0.0


def test_ripped_state_requires_zero_engagement():
    with pytest.raises(ValueError):
        MechanismState(engagement_turns=1.0, ripped_out=True)


def test_secured_bound_is_inclusive():
    assert is_secured(MechanismState(engagement_turns=1.0), PARAMS)
    assert not is_secured(MechanismState(engagement_turns=0.999), PARAMS)


def test_bad_dt():
    with pytest.raises(ValueError):
        advance_engagement(MechanismState(), 0.0, PARAMS)


def test_pulloff_matches_full_capacity():
    geom = CorkscrewGeometry()
    scaling = PulloffScaling()
    force_per_turn, _ = scaling.derive(geom)
    assert pulloff_test(geom, scaling) == pytest.approx(force_per_turn * geom.turns, rel=1e-8)


def test_pulloff_smaller_diameter_holds_more():
    assert (pulloff_test(CorkscrewGeometry(diameter_m=0.004))
            > pulloff_test(CorkscrewGeometry(diameter_m=0.008)))


def test_diameter_sweep_strictly_decreasing():
    peaks = [peak for _, peak in diameter_sweep([0.003, 0.004, 0.0065, 0.008, 0.012])]
    assert all(a > b for a, b in zip(peaks, peaks[1:]))
