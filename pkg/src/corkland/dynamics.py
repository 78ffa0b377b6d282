"""Planar rigid-body dynamics with penalty contact against a tilted plane.

World frame: ``x`` horizontal in the tilt plane, ``z`` up. The platform plane
passes through the origin and rises toward ``+x`` at the tilt angle, so the
uphill skid is the one at positive body ``x``. Pitch is positive
counter-clockwise; a body resting flat on the platform has ``pitch == tilt``.

Body axes: ``e_x = (cos p, sin p)``, ``e_z = (-sin p, cos p)``. Thrust acts
along ``e_z``.

The numerical work happens in the ``numba`` kernels below (``_point_contact``,
``_contact_set``, ``_integrate``); the dataclass API wraps them so the trial
kernel and the public functions share one implementation.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .core import SimConfig, PlatformConfig, VehicleParams

V_STICK = 1e-3
# fraction of the one-step velocity-cancelling force the stick regime may use
STICK_CAP = 0.25
STICK_PLATEAU = 3.0  # slip starts past this multiple of the stick-limit speed
# points deeper than this are under the slab, not touching its top face
MAX_DEPTH_M = 0.03

SKID_UPHILL, SKID_DOWNHILL, CORKSCREW_TIP, GROUND_UPHILL, GROUND_DOWNHILL = range(5)
N_CONTACT_ROWS = 5
(C_FX, C_FZ, C_TAU, C_N, C_T, C_DEPTH, C_VN, C_S, C_ACTIVE) = range(9)
N_CONTACT_COLS = 9

# packed dynamics parameter vector
(P_INV_M, P_INV_I, P_G, P_DT, P_SPAN, P_SKID_H, P_DROP, P_HAS_TIP, P_SIN, P_COS,
 P_EXTENT, P_K, P_C, P_MU_S, P_MU_K, P_K_PILE, P_Z_GROUND, P_MU_PILE) = range(18)
N_DYN_PARAMS = 18


@dataclass(frozen=True)
class VehicleState:
    x_m: float = 0.0
    z_m: float = 0.0
    pitch_rad: float = 0.0
    vx_mps: float = 0.0
    vz_mps: float = 0.0
    pitch_rate_rps: float = 0.0

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x_m, self.z_m, self.pitch_rad, self.vx_mps, self.vz_mps, self.pitch_rate_rps)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_tuple())


@dataclass(frozen=True)
class ContactPoint:
    body_offset: tuple[float, float]
    kind: str  # skid_uphill | skid_downhill | corkscrew_tip


@dataclass(frozen=True)
class ForceSet:
    normal: dict[str, float]
    tangential: dict[str, float]
    force: tuple[float, float]
    torque: float


class SimulatorFault(RuntimeError):
    """Non-finite state; never an experimental outcome."""


def mass_properties(vehicle: VehicleParams, mechanism_attached: bool) -> tuple[float, float]:
    """Mass and pitch inertia, with the mechanism removed for baseline runs."""
    if mechanism_attached:
        return vehicle.mass_kg, vehicle.inertia_pitch_kgm2
    m = vehicle.mass_kg - vehicle.mechanism_mass_kg
    return m, vehicle.inertia_pitch_kgm2 * m / vehicle.mass_kg


def contact_points(vehicle: VehicleParams, mechanism_attached: bool = True) -> list[ContactPoint]:
    a, h = vehicle.skid_half_span_m, vehicle.skid_height_m
    pts = [ContactPoint((a, -h), "skid_uphill"), ContactPoint((-a, -h), "skid_downhill")]
    if mechanism_attached:
        pts.append(ContactPoint((0.0, -h - vehicle.corkscrew_mount_drop_m), "corkscrew_tip"))
    return pts


def pack_dynamics(sim: SimConfig, mechanism_attached: bool) -> np.ndarray:
    v, pf = sim.vehicle, sim.platform
    m, inertia = mass_properties(v, mechanism_attached)
    p = np.zeros(N_DYN_PARAMS)
    p[P_INV_M] = 1.0 / m
    p[P_INV_I] = 1.0 / inertia
    p[P_G] = sim.gravity_mps2
    p[P_DT] = sim.timestep_s
    p[P_SPAN] = v.skid_half_span_m
    p[P_SKID_H] = v.skid_height_m
    p[P_DROP] = v.corkscrew_mount_drop_m
    p[P_HAS_TIP] = 1.0 if mechanism_attached else 0.0
    p[P_SIN] = math.sin(pf.tilt_rad)
    p[P_COS] = math.cos(pf.tilt_rad)
    p[P_EXTENT] = pf.half_extent_m
    p[P_K] = pf.contact_stiffness_npm
    p[P_C] = pf.contact_damping_nspm
    p[P_MU_S] = pf.mu_static
    p[P_MU_K] = pf.mu_kinetic
    p[P_K_PILE] = pf.pile_stiffness_npm
    p[P_Z_GROUND] = -pf.ground_drop_m
    p[P_MU_PILE] = pf.pile_friction
    return p


@njit(cache=True, nogil=True)
def _penetration(px, pz, sin_t, cos_t):
    return px * sin_t - pz * cos_t


@njit(cache=True, nogil=True)
def _point_contact(x, z, phi, vx, vz, w, bx, bz, sin_t, cos_t, z0, extent,
                   k, c, mu_s, mu_k, inv_m, inv_i, dt, out, max_depth=MAX_DEPTH_M):
    """Penalty contact of one body point against the plane through ``(0, z0)``.

    Fills ``out`` (one contact row) and returns nothing.
    """
    for j in range(N_CONTACT_COLS):
        out[j] = 0.0
    cp = math.cos(phi)
    sp = math.sin(phi)
    rx = bx * cp - bz * sp
    rz = bx * sp + bz * cp
    px = x + rx
    pz = z + rz - z0
    d = _penetration(px, pz, sin_t, cos_t)
    s = px * cos_t + pz * sin_t
    vpx = vx - w * rz
    vpz = vz + w * rx
    vn = -vpx * sin_t + vpz * cos_t
    out[C_DEPTH] = d
    out[C_VN] = vn
    out[C_S] = s
    if d <= 0.0 or d > max_depth or abs(s) > extent:
        return
    out[C_ACTIVE] = 1.0
    n_force = k * d + c * max(0.0, -vn)
    if n_force < 0.0:
        n_force = 0.0
    t_force = 0.0
    if mu_s > 0.0 and n_force > 0.0:
        vt = vpx * cos_t + vpz * sin_t
        r_cross_t = rx * sin_t - rz * cos_t
        inv_meff = inv_m + r_cross_t * r_cross_t * inv_i
        slope = mu_s * n_force / V_STICK
        cap = STICK_CAP / (inv_meff * dt)
        if slope > cap:
            slope = cap
        # linear stick, then a short plateau at the static limit, then slip
        limit = mu_s * n_force
        v_peak = limit / slope
        if abs(vt) <= v_peak:
            t_mag = slope * abs(vt)
        elif abs(vt) <= STICK_PLATEAU * v_peak:
            t_mag = limit
        else:
            t_mag = mu_k * n_force
        t_force = -t_mag if vt > 0.0 else t_mag
    fx = -n_force * sin_t + t_force * cos_t
    fz = n_force * cos_t + t_force * sin_t
    out[C_FX] = fx
    out[C_FZ] = fz
    out[C_TAU] = rx * fz - rz * fx
    out[C_N] = n_force
    out[C_T] = t_force


@njit(cache=True, nogil=True)
def _contact_set(x, z, phi, vx, vz, w, p, rows):
    """All contact rows for the vehicle; returns the summed (fx, fz, tau)."""
    span = p[P_SPAN]
    h = p[P_SKID_H]
    sin_t = p[P_SIN]
    cos_t = p[P_COS]
    inv_m = p[P_INV_M]
    inv_i = p[P_INV_I]
    dt = p[P_DT]
    big = 1e9
    _point_contact(x, z, phi, vx, vz, w, span, -h, sin_t, cos_t, 0.0, p[P_EXTENT],
                   p[P_K], p[P_C], p[P_MU_S], p[P_MU_K], inv_m, inv_i, dt, rows[SKID_UPHILL])
    _point_contact(x, z, phi, vx, vz, w, -span, -h, sin_t, cos_t, 0.0, p[P_EXTENT],
                   p[P_K], p[P_C], p[P_MU_S], p[P_MU_K], inv_m, inv_i, dt, rows[SKID_DOWNHILL])
    if p[P_HAS_TIP] > 0.5:
        # loop pile: soft spring plus drag on the tip; the anchor adds shear once grabbed
        mu_pile = p[P_MU_PILE]
        _point_contact(x, z, phi, vx, vz, w, 0.0, -h - p[P_DROP], sin_t, cos_t, 0.0,
                       p[P_EXTENT], p[P_K_PILE], 0.0, mu_pile, mu_pile, inv_m, inv_i, dt,
                       rows[CORKSCREW_TIP], p[P_DROP] + MAX_DEPTH_M)
    else:
        for j in range(N_CONTACT_COLS):
            rows[CORKSCREW_TIP, j] = 0.0
        rows[CORKSCREW_TIP, C_DEPTH] = -1.0
    z_g = p[P_Z_GROUND]
    _point_contact(x, z, phi, vx, vz, w, span, -h, 0.0, 1.0, z_g, big,
                   p[P_K], p[P_C], p[P_MU_S], p[P_MU_K], inv_m, inv_i, dt, rows[GROUND_UPHILL])
    _point_contact(x, z, phi, vx, vz, w, -span, -h, 0.0, 1.0, z_g, big,
                   p[P_K], p[P_C], p[P_MU_S], p[P_MU_K], inv_m, inv_i, dt, rows[GROUND_DOWNHILL])
    fx = 0.0
    fz = 0.0
    tau = 0.0
    for i in range(N_CONTACT_ROWS):
        fx += rows[i, C_FX]
        fz += rows[i, C_FZ]
        tau += rows[i, C_TAU]
    return fx, fz, tau


@njit(cache=True, nogil=True)
def _integrate(x, z, phi, vx, vz, w, fx, fz, tau, thrust, inv_m, inv_i, g, dt):
    """Semi-implicit Euler: velocities from forces first, then positions."""
    ax = (fx - thrust * math.sin(phi)) * inv_m
    az = (fz + thrust * math.cos(phi)) * inv_m - g
    vx = vx + ax * dt
    vz = vz + az * dt
    w = w + tau * inv_i * dt
    return x + vx * dt, z + vz * dt, phi + w * dt, vx, vz, w


@njit(cache=True, nogil=True)
def _tip_world(x, z, phi, vx, vz, w, h, drop):
    bz = -h - drop
    rx = -bz * math.sin(phi)
    rz = bz * math.cos(phi)
    return x + rx, z + rz, vx - w * rz, vz + w * rx, rx, rz


# -- public API ---------------------------------------------------------------

def platform_penetration(point_world: Sequence[float], platform: PlatformConfig) -> float:
    """Signed distance of ``point_world`` below the tilted plane (positive = inside)."""
    t = platform.tilt_rad
    return float(_penetration(float(point_world[0]), float(point_world[1]), math.sin(t), math.cos(t)))


def _kind_row(kind: str) -> int:
    return {"skid_uphill": SKID_UPHILL, "skid_downhill": SKID_DOWNHILL,
            "corkscrew_tip": CORKSCREW_TIP}[kind]


def contact_rows(state: VehicleState, sim: SimConfig, mechanism_attached: bool = True) -> np.ndarray:
    p = pack_dynamics(sim, mechanism_attached)
    rows = np.zeros((N_CONTACT_ROWS, N_CONTACT_COLS))
    _contact_set(*state.as_tuple(), p, rows)
    return rows


def contact_forces(state: VehicleState, contacts: Sequence[ContactPoint], platform: PlatformConfig,
                   sim: SimConfig | None = None) -> ForceSet:
    """Contact forces for the listed points against the platform.

    ``sim`` supplies the vehicle geometry, mass and timestep used by the
    friction regularization; the platform argument always wins.
    """
    if not state.is_finite():
        raise SimulatorFault(f"non-finite state {state}")
    sim = dataclasses.replace(sim or SimConfig(), platform=platform)
    kinds = [c.kind for c in contacts]
    p = pack_dynamics(sim, "corkscrew_tip" in kinds)
    row = np.zeros(N_CONTACT_COLS)
    normal, tangential = {}, {}
    fx = fz = tau = 0.0
    for c in contacts:
        bx, bz = c.body_offset
        tip = c.kind == "corkscrew_tip"
        _point_contact(*state.as_tuple(), bx, bz, p[P_SIN], p[P_COS], 0.0, p[P_EXTENT],
                       p[P_K_PILE] if tip else p[P_K], 0.0 if tip else p[P_C],
                       p[P_MU_PILE] if tip else p[P_MU_S], p[P_MU_PILE] if tip else p[P_MU_K],
                       p[P_INV_M], p[P_INV_I], p[P_DT], row,
                       p[P_DROP] + MAX_DEPTH_M if tip else MAX_DEPTH_M)
        normal[c.kind] = float(row[C_N])
        tangential[c.kind] = float(row[C_T])
        fx += row[C_FX]
        fz += row[C_FZ]
        tau += row[C_TAU]
    return ForceSet(normal, tangential, (float(fx), float(fz)), float(tau))


def step(state: VehicleState, thrust_n: float, mech_tension: Sequence[float], dt: float,
         sim: SimConfig, mechanism_attached: bool = True, torque_nm: float = 0.0) -> VehicleState:
    """Advance one timestep.

    ``mech_tension`` is the world-frame force the adhesion anchor applies at
    the corkscrew tip; ``torque_nm`` is the commanded pitch torque.
    """
    if dt != sim.timestep_s:
        raise ValueError(f"dt must equal sim.timestep_s ({sim.timestep_s})")
    p = pack_dynamics(sim, mechanism_attached)
    rows = np.zeros((N_CONTACT_ROWS, N_CONTACT_COLS))
    x, z, phi, vx, vz, w = state.as_tuple()
    fx, fz, tau = _contact_set(x, z, phi, vx, vz, w, p, rows)
    mx, mz = float(mech_tension[0]), float(mech_tension[1])
    if mx or mz:
        _, _, _, _, rx, rz = _tip_world(x, z, phi, vx, vz, w, p[P_SKID_H], p[P_DROP])
        fx += mx
        fz += mz
        tau += rx * mz - rz * mx
    out = VehicleState(*_integrate(x, z, phi, vx, vz, w, fx, fz, tau + torque_nm, thrust_n,
                                   p[P_INV_M], p[P_INV_I], p[P_G], dt))
    if not out.is_finite():
        raise SimulatorFault(f"non-finite state after step: {out}")
    return out


def resting_state(sim: SimConfig, s_m: float = 0.0, mechanism_attached: bool = True) -> VehicleState:
    """Vehicle sitting flat on the platform at along-incline coordinate ``s_m``."""
    t = sim.platform.tilt_rad
    m, _ = mass_properties(sim.vehicle, mechanism_attached)
    sag = m * sim.gravity_mps2 * math.cos(t) / (2.0 * sim.platform.contact_stiffness_npm)
    height = sim.vehicle.skid_height_m - sag
    return VehicleState(x_m=s_m * math.cos(t) - height * math.sin(t),
                        z_m=s_m * math.sin(t) + height * math.cos(t), pitch_rad=t)
