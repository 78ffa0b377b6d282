"""One landing or takeoff trial: closed-loop simulation plus outcome classification.

The kernel records a compact :class:`TrialSummary` (per-step maxima and
flags), and :func:`classify_outcome` is a pure function of that summary, so
stored summaries can be re-classified under different thresholds.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from . import adhesion as adh
from .adhesion import MechanismState, is_secured
from .control import (ENGAGE_DESCEND, GROUND_INIT, LANDING_DONE, LANDING_PHASES, MOTORS_OFF,
                      PRE_ENGAGED, SETTLE, TAKEOFF_DONE, TAKEOFF_PHASES, CLEAR, Q_ATT_KD,
                      Q_ATT_KP, Q_ILIM, Q_KD, Q_KI, Q_KP, Q_SETTLE, Q_TAU_LIM, MissionPlan,
                      _attitude_torque, _landing_seq, _pid, _takeoff_seq)
from .core import SimConfig, descent_duration
from .dynamics import (C_ACTIVE, C_VN, CORKSCREW_TIP, N_CONTACT_COLS, N_CONTACT_ROWS, P_COS,
                       P_DROP, P_DT, P_EXTENT, P_G, P_HAS_TIP, P_INV_I, P_INV_M, P_SIN, P_SKID_H,
                       P_SPAN,
                       SKID_DOWNHILL, SKID_UPHILL, SimulatorFault, VehicleState, _contact_set,
                       _integrate, _tip_world, pack_dynamics, resting_state)

KINDS = ("landing", "takeoff")
FAILURE_MODES = ("none", "tip_over", "slide_off", "impact", "not_engaged", "rip_out",
                 "stuck_engaged", "timeout", "sim_fault")
TAKEOFF_PRE_ENGAGEMENT_TURNS = 2.0
# the kernel stops once the vehicle is this far over, whatever the threshold
TUMBLE_STOP_RAD = math.radians(150.0)
# centre beyond the platform edge while this low counts as sliding off
SLIDE_OFF_CLEARANCE_M = 0.05

(M_NO_LOAD, M_TURNS, M_GRAB, M_FPT, M_SPT, M_KA, M_CA) = range(7)

(S_X, S_Z, S_PITCH, S_VX, S_VZ, S_W, S_ENG, S_RIPPED, S_TIP_CONTACT, S_ANCHORED,
 S_MAX_REL_PITCH, S_MAX_IMPACT, S_LEFT_EXTENT, S_REST_SPEED, S_REST_RATE, S_CLEARED,
 S_PHASE, S_DURATION, S_FAULT, S_CONTACT_MADE, S_ENG_AT_CUT, S_STEPS, S_DUTY_CMD,
 S_DIR_CMD) = range(24)
N_SUMMARY = 24

TRAJ_COLUMNS = ("t", "x", "z", "pitch", "vx", "vz", "pitch_rate", "engagement_turns",
                "skid_uphill_contact", "skid_downhill_contact", "tip_contact", "anchored",
                "thrust_n", "phase")


@dataclass(frozen=True)
class TrialConfig:
    kind: str = "landing"
    tilt_deg: float = 12.0
    speed_mps: float = -0.25
    duty: float = 1.0
    mechanism_attached: bool = True
    seed: int = 0

    def validate(self) -> "TrialConfig":
        from .core import ConfigError
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {KINDS}")
        if not 0 <= self.tilt_deg < 90:
            raise ConfigError("tilt_deg", "must be in [0, 90)")
        if self.kind == "landing" and not self.speed_mps < 0:
            raise ConfigError("speed_mps", "landing speed must be < 0 (descent)")
        if self.kind == "takeoff" and not self.speed_mps > 0:
            raise ConfigError("speed_mps", "takeoff speed must be > 0 (ascent)")
        if not 0.0 <= self.duty <= 1.0:
            raise ConfigError("duty", "must be in [0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        return self


@dataclass(frozen=True)
class TrialSummary:
    kind: str
    mechanism_attached: bool
    final_state: VehicleState
    final_mech: MechanismState
    max_rel_pitch_rad: float
    max_impact_speed_mps: float
    left_extent: bool
    rest_max_speed_mps: float
    rest_max_rate_rps: float
    cleared: bool
    reached_done: bool
    sim_fault: bool
    contact_made: bool
    engagement_at_cut_turns: float
    duration_s: float
    final_phase: str


@dataclass(frozen=True)
class TrialOutcome:
    success: bool
    failure_mode: str
    final_state: VehicleState
    final_mech: MechanismState
    duration_s: float
    summary: Optional[TrialSummary] = None

    def record(self, cfg: TrialConfig) -> str:
        """One JSON line; field order is fixed (see ``RECORD_FIELDS``)."""
        s, m = self.final_state, self.final_mech
        values = [cfg.kind, cfg.tilt_deg, cfg.speed_mps, cfg.duty, cfg.mechanism_attached,
                  cfg.seed, self.success, self.failure_mode, round(self.duration_s, 6),
                  round(m.engagement_turns, 6), m.ripped_out, round(s.x_m, 6), round(s.z_m, 6),
                  round(math.degrees(s.pitch_rad), 4)]
        return json.dumps(dict(zip(RECORD_FIELDS, values)))


RECORD_FIELDS = ("kind", "tilt_deg", "speed_mps", "duty", "mechanism_attached", "seed", "success",
                 "failure_mode", "duration_s", "engagement_turns", "ripped_out", "x_m", "z_m",
                 "pitch_deg")


def pack_mechanism(sim: SimConfig) -> np.ndarray:
    mp = sim.mechanism
    m = np.zeros(7)
    m[M_NO_LOAD] = mp.no_load_speed_rps
    m[M_TURNS] = mp.geometry.turns
    m[M_GRAB] = mp.grab_threshold_turns
    m[M_FPT] = mp.force_per_turn_n
    m[M_SPT] = mp.shear_per_turn_n
    m[M_KA] = mp.anchor_stiffness_npm
    m[M_CA] = mp.anchor_damping_nspm
    return m


@njit(cache=True, nogil=True)
def _clearance(x, z, phi, p):
    """Height of the lowest body point above the platform plane."""
    sin_t = p[P_SIN]
    cos_t = p[P_COS]
    h = p[P_SKID_H]
    low = 1e9
    for bx in (-1.0, 1.0):
        for tip in (0.0, 1.0):
            if tip > 0.5 and p[P_HAS_TIP] < 0.5:
                continue
            ox = bx * (1.0 - tip) * p[P_SPAN]
            oz = -h - tip * p[P_DROP]
            px = x + ox * math.cos(phi) - oz * math.sin(phi)
            pz = z + ox * math.sin(phi) + oz * math.cos(phi)
            d = -(px * sin_t - pz * cos_t)
            if d < low:
                low = d
    return low


@njit(cache=True, nogil=True)
def _run_kernel(takeoff, state0, eng0, anchored0, p, q, mp, tmax, rest_window, pitch_bias,
                thrust_std, noise, n_steps, record, traj, summary):
    x, z, phi, vx, vz, w = state0[0], state0[1], state0[2], state0[3], state0[4], state0[5]
    inv_m = p[P_INV_M]
    inv_i = p[P_INV_I]
    g = p[P_G]
    dt = p[P_DT]
    sin_t = p[P_SIN]
    cos_t = p[P_COS]
    tilt = math.atan2(sin_t, cos_t)
    extent = p[P_EXTENT]
    has_tip = p[P_HAS_TIP] > 0.5
    hover = g / inv_m
    rows = np.zeros((N_CONTACT_ROWS, N_CONTACT_COLS))
    prev_active = np.zeros(N_CONTACT_ROWS)

    e = eng0
    ripped = False
    anchored = anchored0
    ax_a = 0.0
    az_a = 0.0
    if anchored:
        tx, tz, _, _, _, _ = _tip_world(x, z, phi, vx, vz, w, p[P_SKID_H], p[P_DROP])
        ax_a, az_a = tx, tz
    integral = 0.0
    prev_e = 0.0
    has_prev = False
    phase = PRE_ENGAGED if takeoff else GROUND_INIT
    t_entry = 0.0
    max_rel = 0.0
    max_impact = 0.0
    left_extent = False
    rest_speed = 0.0
    rest_rate = 0.0
    cleared = False
    fault = False
    contact_made = False
    eng_at_cut = -1.0
    done_phase = TAKEOFF_DONE if takeoff else LANDING_DONE
    duty = 0.0
    direction = 0
    t = 0.0
    k = 0
    tip_contact = False
    while k < n_steps:
        t = k * dt
        if takeoff:
            clearance = _clearance(x, z, phi, p)
            vz_sp, pitch_sp, duty, direction, motors, phase, t_entry = _takeoff_seq(
                phase, t_entry, t, x, vx, e, clearance, q)
            if phase == CLEAR:
                cleared = True
        else:
            vz_sp, pitch_sp, duty, direction, motors, phase, t_entry = _landing_seq(
                phase, t_entry, t, x, z, vx, vz, q)
            if phase == MOTORS_OFF and eng_at_cut < 0.0:
                eng_at_cut = e
        if phase == done_phase:
            break
        monitoring = takeoff or phase >= ENGAGE_DESCEND

        thrust = 0.0
        torque = 0.0
        if motors:
            thrust, integral, prev_e = _pid(integral, prev_e, has_prev, vz_sp, vz, dt, q[Q_KP],
                                            q[Q_KI], q[Q_KD], q[Q_ILIM], hover, tmax)
            has_prev = True
            thrust = thrust * (1.0 + thrust_std * noise[k])
            if thrust < 0.0:
                thrust = 0.0
            elif thrust > tmax:
                thrust = tmax
            bias = pitch_bias if phase == ENGAGE_DESCEND else 0.0
            torque = _attitude_torque(pitch_sp, phi + bias, w, q[Q_ATT_KP], q[Q_ATT_KD],
                                      q[Q_TAU_LIM])
        else:
            integral = 0.0
            has_prev = False

        fx, fz, tau = _contact_set(x, z, phi, vx, vz, w, p, rows)
        tip_contact = has_tip and rows[CORKSCREW_TIP, C_ACTIVE] > 0.5
        for i in (SKID_UPHILL, SKID_DOWNHILL):
            active = rows[i, C_ACTIVE]
            if active > 0.5:
                contact_made = True
                if prev_active[i] < 0.5 and monitoring and -rows[i, C_VN] > max_impact:
                    max_impact = -rows[i, C_VN]
        for i in range(N_CONTACT_ROWS):
            prev_active[i] = rows[i, C_ACTIVE]
        if tip_contact:
            contact_made = True

        # adhesion
        if has_tip:
            e = adh._advance(e, duty, direction, tip_contact, ripped, mp[M_NO_LOAD], mp[M_TURNS], dt)
            if not ripped:
                if not anchored and tip_contact and e >= mp[M_GRAB]:
                    anchored = True
                    ax_a, az_a, _, _, _, _ = _tip_world(x, z, phi, vx, vz, w, p[P_SKID_H], p[P_DROP])
                elif anchored and e < mp[M_GRAB]:
                    anchored = False
            if anchored:
                tx, tz, tvx, tvz, rx, rz = _tip_world(x, z, phi, vx, vz, w, p[P_SKID_H], p[P_DROP])
                dfx = -mp[M_KA] * (tx - ax_a) - mp[M_CA] * tvx
                dfz = -mp[M_KA] * (tz - az_a) - mp[M_CA] * tvz
                fn = -dfx * sin_t + dfz * cos_t
                ft = dfx * cos_t + dfz * sin_t
                pull = -fn if fn < 0.0 else 0.0
                pull_cap, shear_cap = adh._capacity(e, mp[M_GRAB], mp[M_FPT], mp[M_SPT])
                if adh._holds(pull, ft, pull_cap, shear_cap):
                    fn_applied = fn if fn < 0.0 else 0.0
                    mfx = -fn_applied * sin_t + ft * cos_t
                    mfz = fn_applied * cos_t + ft * sin_t
                    fx += mfx
                    fz += mfz
                    tau += rx * mfz - rz * mfx
                else:
                    ripped = True
                    anchored = False
                    e = 0.0

        if record:
            traj[k, 0] = t
            traj[k, 1] = x
            traj[k, 2] = z
            traj[k, 3] = phi
            traj[k, 4] = vx
            traj[k, 5] = vz
            traj[k, 6] = w
            traj[k, 7] = e
            traj[k, 8] = rows[SKID_UPHILL, C_ACTIVE]
            traj[k, 9] = rows[SKID_DOWNHILL, C_ACTIVE]
            traj[k, 10] = 1.0 if tip_contact else 0.0
            traj[k, 11] = 1.0 if anchored else 0.0
            traj[k, 12] = thrust
            traj[k, 13] = phase

        x, z, phi, vx, vz, w = _integrate(x, z, phi, vx, vz, w, fx, fz, tau + torque, thrust,
                                          inv_m, inv_i, g, dt)
        k += 1
        if not (math.isfinite(x) and math.isfinite(z) and math.isfinite(phi)
                and math.isfinite(vx) and math.isfinite(vz) and math.isfinite(w)):
            fault = True
            break

        if monitoring:
            rel = abs(phi - tilt)
            if rel > max_rel:
                max_rel = rel
            s_c = x * cos_t + z * sin_t
            if abs(s_c) > extent and contact_made and _clearance(x, z, phi, p) < SLIDE_OFF_CLEARANCE_M:
                left_extent = True
            if not takeoff and phase == SETTLE and (t + dt) - t_entry >= q[Q_SETTLE] - rest_window:
                speed = math.sqrt(vx * vx + vz * vz)
                if speed > rest_speed:
                    rest_speed = speed
                if abs(w) > rest_rate:
                    rest_rate = abs(w)
            if left_extent or max_rel > TUMBLE_STOP_RAD:
                break

    summary[S_X] = x
    summary[S_Z] = z
    summary[S_PITCH] = phi
    summary[S_VX] = vx
    summary[S_VZ] = vz
    summary[S_W] = w
    summary[S_ENG] = e
    summary[S_RIPPED] = 1.0 if ripped else 0.0
    summary[S_TIP_CONTACT] = 1.0 if tip_contact else 0.0
    summary[S_ANCHORED] = 1.0 if anchored else 0.0
    summary[S_MAX_REL_PITCH] = max_rel
    summary[S_MAX_IMPACT] = max_impact
    summary[S_LEFT_EXTENT] = 1.0 if left_extent else 0.0
    summary[S_REST_SPEED] = rest_speed
    summary[S_REST_RATE] = rest_rate
    summary[S_CLEARED] = 1.0 if cleared else 0.0
    summary[S_PHASE] = phase
    summary[S_DURATION] = k * dt
    summary[S_FAULT] = 1.0 if fault else 0.0
    summary[S_CONTACT_MADE] = 1.0 if contact_made else 0.0
    summary[S_ENG_AT_CUT] = eng_at_cut
    summary[S_STEPS] = k
    summary[S_DUTY_CMD] = duty
    summary[S_DIR_CMD] = direction
    return k


def trial_sim(cfg: TrialConfig, sim: SimConfig) -> SimConfig:
    """``sim`` with the trial's tilt and speed applied."""
    control = sim.control
    if cfg.kind == "landing":
        control = dataclasses.replace(control, descent_speed_mps=cfg.speed_mps)
    else:
        control = dataclasses.replace(control, ascent_speed_mps=cfg.speed_mps)
    return dataclasses.replace(sim, platform=dataclasses.replace(sim.platform, tilt_deg=cfg.tilt_deg),
                               control=control)


def _summary_from_array(cfg: TrialConfig, a: np.ndarray, n_steps: int) -> TrialSummary:
    takeoff = cfg.kind == "takeoff"
    names, offset, done = ((TAKEOFF_PHASES, PRE_ENGAGED, TAKEOFF_DONE) if takeoff
                           else (LANDING_PHASES, GROUND_INIT, LANDING_DONE))
    phase = int(a[S_PHASE])
    direction = adh.DIRECTION_NAMES[int(a[S_DIR_CMD])]
    mech = MechanismState(engagement_turns=float(a[S_ENG]), duty=float(a[S_DUTY_CMD]),
                          direction=direction, tip_in_contact=bool(a[S_TIP_CONTACT]),
                          ripped_out=bool(a[S_RIPPED]))
    return TrialSummary(
        kind=cfg.kind, mechanism_attached=cfg.mechanism_attached,
        final_state=VehicleState(*(float(v) for v in a[S_X:S_W + 1])), final_mech=mech,
        max_rel_pitch_rad=float(a[S_MAX_REL_PITCH]), max_impact_speed_mps=float(a[S_MAX_IMPACT]),
        left_extent=bool(a[S_LEFT_EXTENT]), rest_max_speed_mps=float(a[S_REST_SPEED]),
        rest_max_rate_rps=float(a[S_REST_RATE]), cleared=bool(a[S_CLEARED]),
        reached_done=phase == done, sim_fault=bool(a[S_FAULT]),
        contact_made=bool(a[S_CONTACT_MADE]), engagement_at_cut_turns=float(a[S_ENG_AT_CUT]),
        duration_s=float(a[S_DURATION]), final_phase=names[phase - offset])


def simulate(cfg: TrialConfig, sim: SimConfig, record: bool = False
             ) -> tuple[TrialSummary, Optional[np.ndarray]]:
    """Run the closed loop; returns the summary and, if ``record``, the trajectory."""
    cfg.validate()
    tsim = trial_sim(cfg, sim)
    attached = cfg.mechanism_attached
    takeoff = cfg.kind == "takeoff"
    dt = tsim.timestep_s
    n_steps = int(math.ceil(tsim.sim_duration_max_s / dt))

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    lateral = float(rng.normal(0.0, 1.0)) * tsim.noise.lateral_offset_std_m
    pitch_bias = float(rng.normal(0.0, 1.0)) * math.radians(tsim.noise.pitch_offset_std_deg)
    noise = rng.standard_normal(n_steps)

    p = pack_dynamics(tsim, attached)
    ctrl = tsim.control
    duty = cfg.duty if attached else 0.0
    if takeoff:
        start = resting_state(tsim, s_m=lateral, mechanism_attached=attached)
        target_x = start.x_m
        eng0 = TAKEOFF_PRE_ENGAGEMENT_TURNS if attached else 0.0
        state0 = start
    else:
        target_x = lateral
        z0 = -tsim.platform.ground_drop_m + tsim.vehicle.skid_height_m
        state0 = VehicleState(x_m=-ctrl.start_offset_m, z_m=z0)
        eng0 = 0.0
    plan = MissionPlan(control=ctrl, speed_mps=cfg.speed_mps, duty=duty,
                       descent_duration_s=descent_duration(ctrl, cfg.speed_mps),
                       target_x_m=target_x, start_x_m=-ctrl.start_offset_m,
                       clear_margin_m=tsim.outcome.clear_margin_m)
    traj = np.zeros((n_steps if record else 1, len(TRAJ_COLUMNS)))
    summary = np.zeros(N_SUMMARY)
    k = _run_kernel(takeoff, np.array(state0.as_tuple()), eng0, takeoff and attached, p,
                    plan.packed(), pack_mechanism(tsim), tsim.vehicle.max_thrust_n,
                    tsim.outcome.rest_window_s, pitch_bias,
                    tsim.noise.thrust_noise_std_frac, noise, n_steps, record, traj, summary)
    return _summary_from_array(cfg, summary, k), (traj[:k] if record else None)


def classify_outcome(kind: str, summary: TrialSummary, sim: SimConfig) -> TrialOutcome:
    """Apply the success definitions to a finished trial's summary."""
    mode = _failure_mode(kind, summary, sim)
    return TrialOutcome(success=mode == "none", failure_mode=mode, final_state=summary.final_state,
                        final_mech=summary.final_mech, duration_s=summary.duration_s,
                        summary=summary)


def _failure_mode(kind: str, s: TrialSummary, sim: SimConfig) -> str:
    o = sim.outcome
    if s.sim_fault:
        return "sim_fault"
    if s.max_rel_pitch_rad > math.radians(o.tip_over_deg):
        return "tip_over"
    if s.max_impact_speed_mps > o.impact_speed_mps:
        return "impact"
    if s.left_extent:
        return "slide_off"
    if kind == "landing":
        if not s.reached_done:
            return "timeout"
        if s.rest_max_speed_mps >= o.rest_speed_mps:
            return "slide_off"
        if s.rest_max_rate_rps >= o.rest_rate_rps:
            return "tip_over"
        if s.mechanism_attached:
            if s.final_mech.ripped_out:
                return "rip_out"
            if not is_secured(s.final_mech, sim.mechanism):
                return "not_engaged"
        return "none"
    # a tip torn free on the way up still leaves the vehicle disengaged
    if s.cleared and s.final_mech.engagement_turns == 0.0:
        return "none"
    if s.final_mech.engagement_turns > 0.0:
        return "stuck_engaged"
    if s.final_mech.ripped_out:
        return "rip_out"
    return "timeout"


def run_trial(cfg: TrialConfig, sim: SimConfig, dump_path=None) -> TrialOutcome:
    """Simulate and classify one trial; raises :class:`SimulatorFault` on non-finite state."""
    summary, traj = simulate(cfg, sim, record=dump_path is not None)
    if dump_path is not None:
        write_trajectory(traj, dump_path)
    if summary.sim_fault:
        raise SimulatorFault(f"non-finite state in trial {cfg}")
    return classify_outcome(cfg.kind, summary, sim)


def write_trajectory(traj: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJ_COLUMNS)
        for row in traj:
            writer.writerow([f"{v:.6g}" for v in row[:-1]] + [int(row[-1])])
