import numpy as np
import pytest

from corkland.adhesion import MechanismState, advance_engagement
from corkland.control import (LANDING_PHASES, TAKEOFF_PHASES, MissionPlan, PidState,
                              SequencerState, landing_sequencer_step, pid_step,
                              takeoff_sequencer_step)
from corkland.core import ControlParams, MechanismParams, descent_duration
from corkland.dynamics import VehicleState, mass_properties, step
from corkland.trial import TRAJ_COLUMNS, TrialConfig, run_trial, simulate

G = 9.81
M = 0.038
TMAX = 0.65


def _hover():
    return M * G


def test_zero_error_gives_hover_exactly():
    u, _ = pid_step(PidState(), 0.1, 0.1, 0.002, ControlParams(), _hover(), TMAX)
    assert u == _hover()


def test_proportional_only():
    ctrl = ControlParams(pid_ki=0.0, pid_kd=0.0, pid_kp=0.5)
    state = PidState()
    for _ in range(5):
        u, state = pid_step(state, -0.25, 0.0, 0.002, ctrl, _hover(), TMAX)
        assert u == pytest.approx(_hover() + 0.5 * -0.25)


@pytest.mark.parametrize("err", [-50.0, 50.0])
def test_output_clamped(err):
    state = PidState()
    for _ in range(200):
        u, state = pid_step(state, err, 0.0, 0.002, ControlParams(), _hover(), TMAX)
        assert 0.0 <= u <= TMAX


def test_integrator_limit_and_no_windup():
    ctrl = ControlParams(pid_kp=0.0, pid_ki=10.0, integrator_limit=0.05)
    state = PidState()
    for _ in range(2000):
        _, state = pid_step(state, 1.0, 0.0, 0.002, ctrl, _hover(), TMAX)
    assert abs(state.integral_n) <= 0.05 + 1e-12
    # saturated output must not grow the integrator
    ctrl = ControlParams(pid_kp=100.0, pid_ki=10.0, integrator_limit=1.0)
    state = PidState()
    for _ in range(100):
        _, state = pid_step(state, 1.0, 0.0, 0.002, ctrl, _hover(), TMAX)
    assert state.integral_n == 0.0


def test_bad_dt():
    with pytest.raises(ValueError):
        pid_step(PidState(), 0.0, 0.0, 0.0, ControlParams(), _hover(), TMAX)


def test_vz_step_settles_within_one_second(sim):
    m, _ = mass_properties(sim.vehicle, True)
    hover = m * sim.gravity_mps2
    dt = sim.timestep_s
    state = VehicleState(z_m=2.0)
    pid = PidState()
    target = -0.25
    last_outside = 0.0
    for k in range(round(2.0 / dt)):
        u, pid = pid_step(pid, target, state.vz_mps, dt, sim.control, hover,
                          sim.vehicle.max_thrust_n)
        state = step(state, u, (0.0, 0.0), dt, sim)
        if abs(state.vz_mps - target) > 0.05 * abs(target):
            last_outside = (k + 1) * dt
    assert last_outside < 1.0


def _plan(**kw):
    base = dict(control=ControlParams(), speed_mps=-0.25, duty=0.45, descent_duration_s=3.0)
    base.update(kw)
    return MissionPlan(**base)


def test_ground_init_starts_ascent():
    out = landing_sequencer_step(SequencerState("ground_init"), VehicleState(), MechanismState(),
                                 0.0, _plan())
    assert out[3] is False
    assert out[4].phase == "ascend"


def test_engage_descend_commands_duty_and_speed():
    seq = SequencerState("engage_descend", 10.0)
    vz, _, mech, motors, seq2 = landing_sequencer_step(seq, VehicleState(z_m=0.3), MechanismState(),
                                                       10.5, _plan())
    assert mech == (0.45, "forward")
    assert vz == -0.25 and motors
    assert seq2.phase == "engage_descend"


def test_motors_cut_after_descent_window():
    plan = _plan()
    seq = SequencerState("engage_descend", 10.0)
    _, _, _, _, seq = landing_sequencer_step(seq, VehicleState(), MechanismState(), 13.0, plan)
    assert seq.phase == "motors_off"
    _, _, mech, motors, seq = landing_sequencer_step(seq, VehicleState(), MechanismState(), 13.002,
                                                     plan)
    assert not motors and mech == (0.0, "off")


def test_default_descent_window():
    assert descent_duration(ControlParams(approach_altitude_m=0.5), -0.25) == pytest.approx(3.0)
    assert descent_duration(ControlParams(descent_duration_s=4.2), -0.5) == 4.2


def test_takeoff_first_step_reverses():
    plan = _plan(speed_mps=0.25, duty=0.15)
    ms = MechanismState(engagement_turns=2.0)
    vz, _, mech, motors, seq = takeoff_sequencer_step(SequencerState("pre_engaged"), VehicleState(),
                                                      ms, 0.0, plan)
    assert mech == (0.15, "reverse")
    assert motors and vz == 0.25
    assert seq.phase == "reversing"


def test_full_duty_disengages_in_one_second():
    ms = MechanismState(engagement_turns=2.0, duty=1.0, direction="reverse")
    t = 0.0
    while ms.engagement_turns > 0.0:
        ms = advance_engagement(ms, 0.002, MechanismParams())
        t += 0.002
    assert t == pytest.approx(1.0, abs=0.003)


def test_zero_duty_takeoff_times_out(sim):
    out = run_trial(TrialConfig(kind="takeoff", speed_mps=0.25, duty=0.0, seed=3), sim)
    assert not out.success
    assert out.final_mech.engagement_turns == 2.0
    assert out.failure_mode == "stuck_engaged"


def _phase_runs(traj):
    codes = traj[:, TRAJ_COLUMNS.index("phase")].astype(int)
    keep = np.concatenate(([True], codes[1:] != codes[:-1]))
    return codes[keep]


@pytest.mark.parametrize("cfg", [
    TrialConfig(kind="landing", tilt_deg=12.0, duty=0.45, seed=1),
    TrialConfig(kind="landing", tilt_deg=43.0, speed_mps=-0.5, duty=0.15, seed=2),
    TrialConfig(kind="landing", tilt_deg=22.0, mechanism_attached=False, seed=3),
])
def test_landing_phase_order_and_motor_cut(sim, cfg):
    _, traj = simulate(cfg, sim, record=True)
    runs = _phase_runs(traj)
    assert list(runs) == list(range(runs[0], runs[0] + len(runs)))
    assert LANDING_PHASES[runs[0]] in ("ground_init", "ascend")
    phase = traj[:, TRAJ_COLUMNS.index("phase")].astype(int)
    cut = phase >= LANDING_PHASES.index("motors_off")
    assert np.all(traj[cut, TRAJ_COLUMNS.index("thrust_n")] == 0.0)


@pytest.mark.parametrize("duty", [0.15, 1.0])
def test_takeoff_phase_order(sim, duty):
    _, traj = simulate(TrialConfig(kind="takeoff", speed_mps=0.25, duty=duty, seed=4), sim,
                       record=True)
    runs = _phase_runs(traj) - 10
    assert list(runs) == list(range(runs[0], runs[0] + len(runs)))
    assert TAKEOFF_PHASES[runs[0]] in ("pre_engaged", "reversing")

