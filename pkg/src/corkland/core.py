"""Shared domain types, config file handling and seed derivation.

All quantities are SI internally. Degrees only appear in fields whose name
ends in ``_deg`` and are converted at the point of use.

The config file format is flat ``key = value`` text, one entry per line,
with dotted section prefixes (``platform.tilt_deg = 22``). ``#`` starts a
comment. Unlisted keys keep their documented defaults, so an empty file
yields :func:`default_config`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field_path: str, rule: str, line: Optional[int] = None):
        self.field = field_path
        self.rule = rule
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_path}: {rule}")


def _require(cond: bool, path: str, rule: str) -> None:
    if not cond:
        raise ConfigError(path, rule)


@dataclass(frozen=True)
class VehicleParams:
    mass_kg: float = 0.038
    inertia_pitch_kgm2: float = 2.5e-5
    skid_half_span_m: float = 0.04
    # CoM height above the skid line
    skid_height_m: float = 0.015
    corkscrew_mount_drop_m: float = 0.032
    max_thrust_n: float = 0.65
    mechanism_mass_kg: float = 0.0105

    def validate(self, gravity: float, prefix: str = "vehicle") -> None:
        _require(self.mass_kg > 0, f"{prefix}.mass_kg", "must be > 0")
        _require(self.inertia_pitch_kgm2 > 0, f"{prefix}.inertia_pitch_kgm2", "must be > 0")
        _require(self.skid_half_span_m > 0, f"{prefix}.skid_half_span_m", "must be > 0")
        _require(self.skid_height_m >= 0, f"{prefix}.skid_height_m", "must be >= 0")
        _require(self.corkscrew_mount_drop_m > 0, f"{prefix}.corkscrew_mount_drop_m",
                 "must be > 0 (corkscrew contacts first)")
        _require(self.max_thrust_n > self.mass_kg * gravity, f"{prefix}.max_thrust_n",
                 "must exceed mass_kg * gravity (vehicle must hover)")
        _require(0 <= self.mechanism_mass_kg <= 0.020, f"{prefix}.mechanism_mass_kg",
                 "must be within the 0.020 kg mass budget")
        _require(self.mechanism_mass_kg < self.mass_kg, f"{prefix}.mechanism_mass_kg",
                 "must be below mass_kg")


@dataclass(frozen=True)
class PlatformConfig:
    tilt_deg: float = 12.0
    half_extent_m: float = 0.15
    mu_static: float = 0.48
    mu_kinetic: float = 0.38
    contact_stiffness_npm: float = 5000.0
    contact_damping_nspm: float = 20.0
    # loop-pile resistance felt by the corkscrew tip
    pile_stiffness_npm: float = 6.0
    # Coulomb coefficient of the tip dragging through the pile
    pile_friction: float = 1.7
    # floor plane below the platform center, used for the start pad
    ground_drop_m: float = 0.15

    @property
    def tilt_rad(self) -> float:
        return math.radians(self.tilt_deg)

    def validate(self, prefix: str = "platform") -> None:
        _require(0 <= self.tilt_deg < 90, f"{prefix}.tilt_deg", "must be in [0, 90)")
        _require(self.half_extent_m > 0, f"{prefix}.half_extent_m", "must be > 0")
        _require(self.mu_static >= 0, f"{prefix}.mu_static", "must be >= 0")
        _require(0 <= self.mu_kinetic <= self.mu_static, f"{prefix}.mu_kinetic",
                 "must satisfy 0 <= mu_kinetic <= mu_static (platform.mu_static)")
        _require(self.contact_stiffness_npm > 0, f"{prefix}.contact_stiffness_npm", "must be > 0")
        _require(self.contact_damping_nspm > 0, f"{prefix}.contact_damping_nspm", "must be > 0")
        _require(self.pile_stiffness_npm >= 0, f"{prefix}.pile_stiffness_npm", "must be >= 0")
        _require(self.pile_friction >= 0, f"{prefix}.pile_friction", "must be >= 0")
        _require(self.ground_drop_m > 0, f"{prefix}.ground_drop_m", "must be > 0")


@dataclass(frozen=True)
class CorkscrewGeometry:
    diameter_m: float = 0.0065
    turns: float = 3.0
    wire_diameter_m: float = 0.0005
    pitch_per_turn_m: float = 0.004

    def validate(self, prefix: str = "mechanism.geometry") -> None:
        _require(self.diameter_m > 0, f"{prefix}.diameter_m", "must be > 0")
        _require(self.turns >= 1, f"{prefix}.turns", "must be >= 1")
        _require(self.wire_diameter_m > 0, f"{prefix}.wire_diameter_m", "must be > 0")
        _require(self.pitch_per_turn_m > 0, f"{prefix}.pitch_per_turn_m", "must be > 0")


@dataclass(frozen=True)
class MechanismParams:
    geometry: CorkscrewGeometry = field(default_factory=CorkscrewGeometry)
    no_load_speed_rps: float = 2.0
    force_per_turn_n: float = 5.7
    shear_per_turn_n: float = 4.5
    grab_threshold_turns: float = 0.04
    secure_threshold_turns: float = 0.21
    # tip anchor spring, active once the tip has grabbed
    anchor_stiffness_npm: float = 52.0
    anchor_damping_nspm: float = 1.0

    def validate(self, prefix: str = "mechanism") -> None:
        self.geometry.validate(f"{prefix}.geometry")
        _require(self.no_load_speed_rps > 0, f"{prefix}.no_load_speed_rps", "must be > 0")
        _require(self.force_per_turn_n > 0, f"{prefix}.force_per_turn_n", "must be > 0")
        _require(self.shear_per_turn_n > 0, f"{prefix}.shear_per_turn_n", "must be > 0")
        _require(0 < self.grab_threshold_turns <= self.secure_threshold_turns,
                 f"{prefix}.grab_threshold_turns",
                 "must satisfy 0 < grab_threshold_turns <= secure_threshold_turns")
        _require(self.secure_threshold_turns <= self.geometry.turns,
                 f"{prefix}.secure_threshold_turns", "must be <= geometry.turns")
        _require(self.anchor_stiffness_npm > 0, f"{prefix}.anchor_stiffness_npm", "must be > 0")
        _require(self.anchor_damping_nspm >= 0, f"{prefix}.anchor_damping_nspm", "must be >= 0")


@dataclass(frozen=True)
class ControlParams:
    pid_kp: float = 5.2
    pid_ki: float = 1.0
    pid_kd: float = 0.0
    integrator_limit: float = 0.4
    attitude_kp: float = 0.01
    attitude_kd: float = 8e-4
    attitude_torque_limit_nm: float = 0.0085
    # lateral position hold, mapped onto the pitch setpoint
    lateral_kp: float = 1.5
    lateral_kd: float = 0.8
    max_tilt_deg: float = 8.6
    altitude_kp: float = 2.0
    transit_speed_mps: float = 0.5
    descent_speed_mps: float = -0.25
    ascent_speed_mps: float = 0.25
    approach_altitude_m: float = 0.5
    # None: approach_altitude_m / |descent speed| + DESCENT_MARGIN_S
    descent_duration_s: Optional[float] = None
    settle_duration_s: float = 2.0
    takeoff_timeout_s: float = 5.0
    # horizontal distance of the start pad from the platform center
    start_offset_m: float = 0.35
    phase_timeout_s: float = 6.0

    def validate(self, prefix: str = "control") -> None:
        for name in ("pid_kp", "pid_ki", "pid_kd", "attitude_kp", "attitude_kd",
                     "lateral_kp", "lateral_kd", "altitude_kp"):
            _require(getattr(self, name) >= 0, f"{prefix}.{name}", "gains must be >= 0")
        _require(self.integrator_limit >= 0, f"{prefix}.integrator_limit", "must be >= 0")
        _require(self.attitude_torque_limit_nm > 0, f"{prefix}.attitude_torque_limit_nm",
                 "must be > 0")
        _require(0 < self.max_tilt_deg < 45, f"{prefix}.max_tilt_deg", "must be in (0, 45)")
        _require(self.transit_speed_mps > 0, f"{prefix}.transit_speed_mps", "must be > 0")
        _require(self.descent_speed_mps < 0, f"{prefix}.descent_speed_mps", "must be < 0")
        _require(self.ascent_speed_mps > 0, f"{prefix}.ascent_speed_mps", "must be > 0")
        _require(self.approach_altitude_m > 0, f"{prefix}.approach_altitude_m", "must be > 0")
        _require(self.descent_duration_s is None or self.descent_duration_s > 0,
                 f"{prefix}.descent_duration_s", "must be > 0 or auto")
        for name in ("settle_duration_s", "takeoff_timeout_s", "phase_timeout_s"):
            _require(getattr(self, name) > 0, f"{prefix}.{name}", "durations must be > 0")
        _require(self.start_offset_m > 0, f"{prefix}.start_offset_m", "must be > 0")


DESCENT_MARGIN_S = 1.0


def descent_duration(control: ControlParams, descent_speed_mps: float) -> float:
    """Length of the constant-speed descent window."""
    if control.descent_duration_s is not None:
        return control.descent_duration_s
    return control.approach_altitude_m / abs(descent_speed_mps) + DESCENT_MARGIN_S


@dataclass(frozen=True)
class NoiseParams:
    lateral_offset_std_m: float = 0.01
    pitch_offset_std_deg: float = 2.0
    thrust_noise_std_frac: float = 0.02

    def validate(self, prefix: str = "noise") -> None:
        for f in dataclasses.fields(self):
            _require(getattr(self, f.name) >= 0, f"{prefix}.{f.name}", "must be >= 0")


@dataclass(frozen=True)
class OutcomeParams:
    """Crash and success thresholds used by the trial classifier."""

    tip_over_deg: float = 60.0
    impact_speed_mps: float = 1.5
    rest_speed_mps: float = 0.02
    rest_rate_rps: float = 0.05
    # trailing part of the settle phase that must be at rest
    rest_window_s: float = 1.0
    clear_margin_m: float = 0.2

    def validate(self, prefix: str = "outcome") -> None:
        _require(0 < self.tip_over_deg <= 180, f"{prefix}.tip_over_deg", "must be in (0, 180]")
        for name in ("impact_speed_mps", "rest_speed_mps", "rest_rate_rps",
                     "rest_window_s", "clear_margin_m"):
            _require(getattr(self, name) > 0, f"{prefix}.{name}", "must be > 0")


@dataclass(frozen=True)
class SimConfig:
    timestep_s: float = 2e-4
    sim_duration_max_s: float = 20.0
    gravity_mps2: float = 9.81
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    platform: PlatformConfig = field(default_factory=PlatformConfig)
    mechanism: MechanismParams = field(default_factory=MechanismParams)
    control: ControlParams = field(default_factory=ControlParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    outcome: OutcomeParams = field(default_factory=OutcomeParams)

    def validate(self) -> "SimConfig":
        _require(0 < self.timestep_s <= 1e-3, "timestep_s", "must be in (0, 1e-3]")
        _require(self.sim_duration_max_s > 0, "sim_duration_max_s", "must be > 0")
        _require(self.gravity_mps2 > 0, "gravity_mps2", "must be > 0")
        self.vehicle.validate(self.gravity_mps2)
        self.platform.validate()
        self.mechanism.validate()
        self.control.validate()
        self.noise.validate()
        self.outcome.validate()
        if self.control.settle_duration_s <= self.outcome.rest_window_s:
            raise ConfigError("outcome.rest_window_s", "must be shorter than control.settle_duration_s")
        return self


def default_config() -> SimConfig:
    return SimConfig()


# -- flat key/value serialization -------------------------------------------

def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def _flatten(obj, prefix: str = ""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            yield from _flatten(value, key + ".")
        else:
            yield key, value


def config_items(cfg) -> list[tuple[str, object]]:
    """``(dotted_key, value)`` pairs for every leaf field of a config dataclass."""
    return list(_flatten(cfg))


def dump_config(cfg: SimConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in _flatten(cfg))


def _parse_scalar(raw: str, current, path: str):
    text = raw.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if current is None or isinstance(current, float):
            if text.lower() in ("auto", "none"):
                return None
            value = float(text)
        elif isinstance(current, int):
            value = int(text)
        else:
            return text
    except ValueError:
        raise ConfigError(path, f"cannot parse {text!r} as {type(current).__name__}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return value


def set_field(obj, dotted: str, raw: str, _full: Optional[str] = None):
    """Return a copy of the dataclass ``obj`` with ``dotted`` set from text ``raw``."""
    full = _full or dotted
    head, _, rest = dotted.partition(".")
    names = {f.name for f in dataclasses.fields(obj)}
    if head not in names:
        raise ConfigError(full, "unknown key")
    current = getattr(obj, head)
    if dataclasses.is_dataclass(current):
        if not rest:
            raise ConfigError(full, "is a section, not a value")
        return dataclasses.replace(obj, **{head: set_field(current, rest, raw, full)})
    if rest:
        raise ConfigError(full, "unknown key")
    return dataclasses.replace(obj, **{head: _parse_scalar(raw, current, full)})


def apply_overrides(cfg: SimConfig, overrides: dict[str, str]) -> SimConfig:
    for key, raw in overrides.items():
        cfg = set_field(cfg, key, str(raw))
    return cfg.validate()


def parse_config(text: str, base: Optional[SimConfig] = None) -> SimConfig:
    cfg = base or default_config()
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("<syntax>", f"expected 'key = value', got {stripped!r}", line=lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("<syntax>", "empty key", line=lineno)
        if key in seen:
            raise ConfigError(key, f"duplicate key (first set on line {seen[key]})", line=lineno)
        seen[key] = lineno
        try:
            cfg = set_field(cfg, key, raw)
        except ConfigError as exc:
            raise ConfigError(exc.field, exc.rule, line=lineno) from None
    return cfg.validate()


def load_config(path) -> SimConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config(p.read_text())


def packaged_defaults_path() -> Path:
    return Path(__file__).with_name("defaults.cfg")


def load_defaults() -> SimConfig:
    """The shipped calibrated defaults."""
    return load_config(packaged_defaults_path())


# -- seeds ---------------------------------------------------------------------

def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finalizer (a bijection on 64-bit ints)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, cell_index: int, trial_index: int) -> int:
    """Per-trial seed: ``splitmix64(splitmix64(splitmix64(master) ^ cell) ^ trial)``.

    ``cell_index`` comes from the cell key, not its position in a sweep, so
    dropping a cell never reseeds the others.
    """
    h = splitmix64(master & MASK64)
    h = splitmix64(h ^ (cell_index & MASK64))
    return splitmix64(h ^ (trial_index & MASK64))
