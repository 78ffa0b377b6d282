"""Vertical-velocity PID, attitude/lateral hold and the mission sequencers.

Landing phases run ground_init -> ascend -> translate -> engage_descend ->
motors_off -> settle -> done. Takeoff phases run pre_engaged -> reversing ->
liftoff -> clear -> done, where a timeout may jump straight to done.

The pitch setpoint is world-level plus a bounded lateral position-hold
correction; there is never a platform-tilt term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .adhesion import DIRECTION_NAMES, FORWARD, OFF, REVERSE, MechanismState
from .core import ControlParams
from .dynamics import VehicleState

LANDING_PHASES = ("ground_init", "ascend", "translate", "engage_descend", "motors_off",
                  "settle", "done")
TAKEOFF_PHASES = ("pre_engaged", "reversing", "liftoff", "clear", "done")

GROUND_INIT, ASCEND, TRANSLATE, ENGAGE_DESCEND, MOTORS_OFF, SETTLE, LANDING_DONE = range(7)
PRE_ENGAGED, REVERSING, LIFTOFF, CLEAR, TAKEOFF_DONE = range(10, 15)

# transition tolerances for the position-hold phases
ALT_TOL_M = 0.02
VZ_TOL_MPS = 0.05
X_TOL_M = 0.005
VX_TOL_MPS = 0.02

# packed sequencer / controller vector
(Q_KP, Q_KI, Q_KD, Q_ILIM, Q_ATT_KP, Q_ATT_KD, Q_TAU_LIM, Q_LAT_KP, Q_LAT_KD, Q_MAX_TILT,
 Q_ALT_KP, Q_TRANSIT, Q_SPEED, Q_APPROACH, Q_DESCENT_DUR, Q_SETTLE, Q_TIMEOUT, Q_PHASE_TIMEOUT,
 Q_DUTY, Q_TARGET_X, Q_START_X, Q_CLEAR) = range(22)
N_CTRL_PARAMS = 22


def pack_control(control: ControlParams, *, speed_mps: float, duty: float, descent_duration_s: float,
                 target_x_m: float, start_x_m: float, clear_margin_m: float) -> np.ndarray:
    q = np.zeros(N_CTRL_PARAMS)
    q[Q_KP] = control.pid_kp
    q[Q_KI] = control.pid_ki
    q[Q_KD] = control.pid_kd
    q[Q_ILIM] = control.integrator_limit
    q[Q_ATT_KP] = control.attitude_kp
    q[Q_ATT_KD] = control.attitude_kd
    q[Q_TAU_LIM] = control.attitude_torque_limit_nm
    q[Q_LAT_KP] = control.lateral_kp
    q[Q_LAT_KD] = control.lateral_kd
    q[Q_MAX_TILT] = math.radians(control.max_tilt_deg)
    q[Q_ALT_KP] = control.altitude_kp
    q[Q_TRANSIT] = control.transit_speed_mps
    q[Q_SPEED] = speed_mps
    q[Q_APPROACH] = control.approach_altitude_m
    q[Q_DESCENT_DUR] = descent_duration_s
    q[Q_SETTLE] = control.settle_duration_s
    q[Q_TIMEOUT] = control.takeoff_timeout_s
    q[Q_PHASE_TIMEOUT] = control.phase_timeout_s
    q[Q_DUTY] = duty
    q[Q_TARGET_X] = target_x_m
    q[Q_START_X] = start_x_m
    q[Q_CLEAR] = clear_margin_m
    return q


@njit(cache=True, nogil=True)
def _clip(v, lo, hi):
    return lo if v < lo else (hi if v > hi else v)


@njit(cache=True, nogil=True)
def _pid(integral, prev_error, has_prev, setpoint, measured, dt, kp, ki, kd, ilim, hover, tmax):
    """Returns ``(thrust, integral', error)``; ``integral`` is the Ki term in newtons."""
    e = setpoint - measured
    de = (e - prev_error) / dt if has_prev else 0.0
    cand = _clip(integral + ki * e * dt, -ilim, ilim)
    u = hover + kp * e + cand + kd * de
    # conditional integration: freeze the integrator while pushing into a limit
    if (u > tmax and e > 0.0) or (u < 0.0 and e < 0.0):
        cand = integral
        u = hover + kp * e + cand + kd * de
    return _clip(u, 0.0, tmax), cand, e


@njit(cache=True, nogil=True)
def _attitude_torque(pitch_sp, pitch_meas, rate, kp, kd, limit):
    return _clip(kp * (pitch_sp - pitch_meas) - kd * rate, -limit, limit)


@njit(cache=True, nogil=True)
def _lateral_pitch(target_x, x, vx, kp, kd, max_tilt):
    # negative pitch tips thrust toward +x
    return -_clip(kp * (target_x - x) - kd * vx, -max_tilt, max_tilt)


@njit(cache=True, nogil=True)
def _altitude_vz(target_z, z, kp, limit):
    return _clip(kp * (target_z - z), -limit, limit)


@njit(cache=True, nogil=True)
def _landing_seq(phase, t_entry, t, x, z, vx, vz, q):
    """One landing sequencer tick.

    Returns ``(vz_sp, pitch_sp, duty, direction, motors, phase', t_entry')``.
    """
    elapsed = t - t_entry
    if phase == GROUND_INIT:
        return 0.0, 0.0, 0.0, OFF, False, ASCEND, t
    if phase == ASCEND:
        at_alt = abs(z - q[Q_APPROACH]) < ALT_TOL_M and abs(vz) < VZ_TOL_MPS
        if at_alt or elapsed >= q[Q_PHASE_TIMEOUT]:
            phase, t_entry, elapsed = TRANSLATE, t, 0.0
    elif phase == TRANSLATE:
        there = (abs(x - q[Q_TARGET_X]) < X_TOL_M and abs(vx) < VX_TOL_MPS
                 and abs(z - q[Q_APPROACH]) < ALT_TOL_M)
        if there or elapsed >= q[Q_PHASE_TIMEOUT]:
            phase, t_entry, elapsed = ENGAGE_DESCEND, t, 0.0
    elif phase == ENGAGE_DESCEND:
        if elapsed >= q[Q_DESCENT_DUR]:
            phase, t_entry, elapsed = MOTORS_OFF, t, 0.0
    elif phase == MOTORS_OFF:
        phase, t_entry, elapsed = SETTLE, t, 0.0
    elif phase == SETTLE:
        if elapsed >= q[Q_SETTLE]:
            phase, t_entry = LANDING_DONE, t

    if phase == ASCEND:
        vz_sp = _altitude_vz(q[Q_APPROACH], z, q[Q_ALT_KP], q[Q_TRANSIT])
        pitch_sp = _lateral_pitch(q[Q_START_X], x, vx, q[Q_LAT_KP], q[Q_LAT_KD], q[Q_MAX_TILT])
        return vz_sp, pitch_sp, 0.0, OFF, True, phase, t_entry
    if phase == TRANSLATE:
        vz_sp = _altitude_vz(q[Q_APPROACH], z, q[Q_ALT_KP], q[Q_TRANSIT])
        pitch_sp = _lateral_pitch(q[Q_TARGET_X], x, vx, q[Q_LAT_KP], q[Q_LAT_KD], q[Q_MAX_TILT])
        return vz_sp, pitch_sp, 0.0, OFF, True, phase, t_entry
    if phase == ENGAGE_DESCEND:
        pitch_sp = _lateral_pitch(q[Q_TARGET_X], x, vx, q[Q_LAT_KP], q[Q_LAT_KD], q[Q_MAX_TILT])
        return q[Q_SPEED], pitch_sp, q[Q_DUTY], FORWARD, True, phase, t_entry
    return 0.0, 0.0, 0.0, OFF, False, phase, t_entry


@njit(cache=True, nogil=True)
def _takeoff_seq(phase, t_entry, t, x, vx, engagement, clearance, q):
    """One takeoff sequencer tick; same output layout as ``_landing_seq``.

    Thrust and motor reversal start together on the first tick.
    """
    if phase == PRE_ENGAGED:
        phase, t_entry = REVERSING, t
    elif phase == TAKEOFF_DONE:
        return 0.0, 0.0, 0.0, OFF, False, phase, t_entry
    elif t >= q[Q_TIMEOUT]:
        return 0.0, 0.0, 0.0, OFF, False, TAKEOFF_DONE, t
    elif phase == CLEAR:
        return q[Q_SPEED], 0.0, 0.0, OFF, True, TAKEOFF_DONE, t
    if phase == REVERSING and engagement <= 0.0:
        phase, t_entry = LIFTOFF, t
    if phase == LIFTOFF and clearance >= q[Q_CLEAR]:
        phase, t_entry = CLEAR, t
    pitch_sp = _lateral_pitch(q[Q_TARGET_X], x, vx, q[Q_LAT_KP], q[Q_LAT_KD], q[Q_MAX_TILT])
    if phase == REVERSING:
        return q[Q_SPEED], pitch_sp, q[Q_DUTY], REVERSE, True, phase, t_entry
    return q[Q_SPEED], pitch_sp, 0.0, OFF, True, phase, t_entry


# -- public API ---------------------------------------------------------------

@dataclass(frozen=True)
class PidState:
    integral_n: float = 0.0
    prev_error: float = 0.0
    has_prev: bool = False


def pid_step(pid_state: PidState, setpoint_vz: float, measured_vz: float, dt: float,
             control: ControlParams, hover_thrust_n: float, max_thrust_n: float
             ) -> tuple[float, PidState]:
    """Vertical velocity PID around the hover feedforward."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    u, integral, e = _pid(pid_state.integral_n, pid_state.prev_error, pid_state.has_prev,
                          setpoint_vz, measured_vz, dt, control.pid_kp, control.pid_ki,
                          control.pid_kd, control.integrator_limit, hover_thrust_n, max_thrust_n)
    return float(u), PidState(float(integral), float(e), True)


@dataclass(frozen=True)
class SequencerState:
    phase: str
    phase_entry_time_s: float = 0.0


@dataclass(frozen=True)
class MissionPlan:
    """Per-trial sequencer inputs (speed is signed by trial kind)."""

    control: ControlParams
    speed_mps: float
    duty: float
    descent_duration_s: float = 3.0
    target_x_m: float = 0.0
    start_x_m: float = -0.35
    clear_margin_m: float = 0.2

    def packed(self) -> np.ndarray:
        return pack_control(self.control, speed_mps=self.speed_mps, duty=self.duty,
                            descent_duration_s=self.descent_duration_s, target_x_m=self.target_x_m,
                            start_x_m=self.start_x_m, clear_margin_m=self.clear_margin_m)


def _wrap(out, names, offset):
    vz_sp, pitch_sp, duty, direction, motors, phase, t_entry = out
    return (float(vz_sp), float(pitch_sp), (float(duty), DIRECTION_NAMES[int(direction)]),
            bool(motors), SequencerState(names[int(phase) - offset], float(t_entry)))


def landing_sequencer_step(seq: SequencerState, obs: VehicleState, ms: MechanismState, t: float,
                           plan: MissionPlan):
    """Returns ``(vz_setpoint, pitch_setpoint, (duty, direction), motors_enabled, seq')``."""
    out = _landing_seq(LANDING_PHASES.index(seq.phase), seq.phase_entry_time_s, t, obs.x_m,
                       obs.z_m, obs.vx_mps, obs.vz_mps, plan.packed())
    return _wrap(out, LANDING_PHASES, 0)


def takeoff_sequencer_step(seq: SequencerState, obs: VehicleState, ms: MechanismState, t: float,
                           plan: MissionPlan, clearance_m: float = 0.0):
    """Takeoff counterpart of :func:`landing_sequencer_step`.

    ``clearance_m`` is the height of the lowest body point above the platform.
    """
    out = _takeoff_seq(TAKEOFF_PHASES.index(seq.phase) + PRE_ENGAGED, seq.phase_entry_time_s, t,
                       obs.x_m, obs.vx_mps, ms.engagement_turns, clearance_m, plan.packed())
    return _wrap(out, TAKEOFF_PHASES, PRE_ENGAGED)
