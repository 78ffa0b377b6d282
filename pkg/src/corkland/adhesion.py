"""Corkscrew engagement, holding capacity, rip-out and pull-off tests.

Engagement is kept on a dyadic grid of ``ENGAGEMENT_QUANTUM`` turns and every
per-step increment is rounded onto that grid, so forward/reverse rotation
for equal times cancels exactly in floating point.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import CorkscrewGeometry, MechanismParams

ENGAGEMENT_QUANTUM = 2.0 ** -48

OFF, FORWARD, REVERSE = 0, 1, -1
_DIRECTION_CODES = {"off": OFF, "forward": FORWARD, "reverse": REVERSE}
DIRECTION_NAMES = {v: k for k, v in _DIRECTION_CODES.items()}


@dataclass(frozen=True)
class MechanismState:
    engagement_turns: float = 0.0
    duty: float = 0.0
    direction: str = "off"
    tip_in_contact: bool = False
    ripped_out: bool = False

    def __post_init__(self):
        if self.direction not in _DIRECTION_CODES:
            raise ValueError(f"direction must be one of {sorted(_DIRECTION_CODES)}")
        if not 0.0 <= self.duty <= 1.0:
            raise ValueError("duty must be in [0, 1]")
        if self.ripped_out and self.engagement_turns != 0.0:
            raise ValueError("ripped_out requires engagement_turns == 0")


@njit(cache=True, nogil=True)
def _snap(turns):
    return np.round(turns / ENGAGEMENT_QUANTUM) * ENGAGEMENT_QUANTUM


@njit(cache=True, nogil=True)
def _advance(engagement, duty, direction, in_contact, ripped, no_load_rps, max_turns, dt):
    if ripped:
        return engagement
    e = _snap(engagement)
    delta = _snap(no_load_rps * duty * dt)
    if direction == FORWARD and in_contact:
        e = e + delta
    elif direction == REVERSE and e > 0.0:
        e = e - delta
    if e < 0.0:
        e = 0.0
    elif e > max_turns:
        e = max_turns
    return e


@njit(cache=True, nogil=True)
def _capacity(engagement, grab, force_per_turn, shear_per_turn):
    if engagement < grab:
        return 0.0, 0.0
    return force_per_turn * engagement, shear_per_turn * engagement


@njit(cache=True, nogil=True)
def _holds(pull, shear, pull_cap, shear_cap):
    return pull <= pull_cap and abs(shear) <= shear_cap


def advance_engagement(ms: MechanismState, dt: float, params: MechanismParams) -> MechanismState:
    """Thread (forward, needs tip contact) or unthread (reverse) for ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    e = _advance(ms.engagement_turns, ms.duty, _DIRECTION_CODES[ms.direction], ms.tip_in_contact,
                 ms.ripped_out, params.no_load_speed_rps, params.geometry.turns, dt)
    return dataclasses.replace(ms, engagement_turns=float(e))


def holding_capacity(ms: MechanismState, params: MechanismParams) -> tuple[float, float]:
    """``(pull, shear)`` capacity in newtons; zero below the grab threshold."""
    pull, shear = _capacity(ms.engagement_turns, params.grab_threshold_turns,
                            params.force_per_turn_n, params.shear_per_turn_n)
    return float(pull), float(shear)


def tension_and_ripout(ms: MechanismState, demanded_pull_n: float, demanded_shear_n: float,
                       params: MechanismParams) -> tuple[tuple[float, float], MechanismState]:
    if ms.ripped_out:
        return (0.0, 0.0), ms
    pull_cap, shear_cap = holding_capacity(ms, params)
    if _holds(demanded_pull_n, demanded_shear_n, pull_cap, shear_cap):
        return (float(demanded_pull_n), float(demanded_shear_n)), ms
    return (0.0, 0.0), dataclasses.replace(ms, engagement_turns=0.0, ripped_out=True)


def is_secured(ms: MechanismState, params: MechanismParams) -> bool:
    """Engaged deeply enough that removal needs reverse rotation (inclusive bound)."""
    return (not ms.ripped_out) and ms.engagement_turns >= params.secure_threshold_turns


# -- geometry selection ---------------------------------------------------------

@dataclass(frozen=True)
class PulloffScaling:
    """Maps corkscrew geometry to per-turn capacity and grab threshold.

    ``force_per_turn = ref_force * (ref_diameter / d) ** exponent``: thinner
    helices deform less under load and hold more per turn. Wider helices
    sweep more loops, so the grab threshold shrinks with diameter the same
    way.
    """

    reference_diameter_m: float = 0.0065
    reference_force_per_turn_n: float = 1.5
    reference_grab_turns: float = 0.1
    exponent: float = 1.0

    @classmethod
    def from_params(cls, params: MechanismParams) -> "PulloffScaling":
        return cls(params.geometry.diameter_m, params.force_per_turn_n, params.grab_threshold_turns)

    def derive(self, geometry: CorkscrewGeometry) -> tuple[float, float]:
        ratio = (self.reference_diameter_m / geometry.diameter_m) ** self.exponent
        return self.reference_force_per_turn_n * ratio, self.reference_grab_turns / ratio


def pulloff_test(geometry: CorkscrewGeometry, derived_params: PulloffScaling | None = None,
                 tol_n: float = 1e-9) -> float:
    """Peak surface-normal pull-off force of a fully engaged corkscrew.

    Ramps the normal load on a fully threaded tip until the interface lets
    go, refining the ramp by bisection, and returns the last load held.
    """
    scaling = derived_params or PulloffScaling()
    if geometry.turns <= 0:
        return 0.0
    force_per_turn, grab = scaling.derive(geometry)
    params = MechanismParams(geometry=geometry, force_per_turn_n=force_per_turn,
                             shear_per_turn_n=force_per_turn,
                             grab_threshold_turns=min(grab, geometry.turns),
                             secure_threshold_turns=geometry.turns)
    engaged = MechanismState(engagement_turns=float(geometry.turns))

    def holds(load):
        _, after = tension_and_ripout(engaged, load, 0.0, params)
        return not after.ripped_out

    lo, hi = 0.0, 0.01
    while holds(hi):
        lo, hi = hi, hi * 2.0
    while hi - lo > tol_n * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return lo


def diameter_sweep(diameters_m, geometry: CorkscrewGeometry | None = None,
                   derived_params: PulloffScaling | None = None) -> list[tuple[float, float]]:
    base = geometry or CorkscrewGeometry()
    return [(float(d), pulloff_test(dataclasses.replace(base, diameter_m=float(d)), derived_params))
            for d in diameters_m]
