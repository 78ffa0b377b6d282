"""Experiment matrix runner, Wilson intervals, ordinal constraints and calibration.

Cells are keyed by ``(kind, tilt, signed speed, duty)`` with ``duty = None``
for the baseline vehicle. Each trial seed is derived from the master seed,
a packed integer form of the cell key and the trial index, so a cell's
results never depend on which other cells are swept or on worker count.
"""
from __future__ import annotations

import dataclasses
import math
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .core import ConfigError, SimConfig, config_items, derive_seed, set_field
from .dynamics import SimulatorFault
from .trial import FAILURE_MODES, KINDS, TrialConfig, classify_outcome, simulate

DEFAULT_TILTS_DEG = (12.0, 22.0, 33.0, 43.0)
DEFAULT_SPEEDS_MPS = (0.25, 0.5)
DEFAULT_DUTIES = (0.15, 0.45, 0.75, 1.0)
BASELINE_DUTY_CODE = 0xFFFF


@dataclass(frozen=True, order=True)
class CellKey:
    """One experimental condition; ``duty is None`` marks the baseline vehicle."""

    kind: str
    tilt_deg: float
    speed_mps: float
    duty: Optional[float]

    @property
    def baseline(self) -> bool:
        return self.duty is None

    def index(self) -> int:
        """Injective packing of the key used for seed derivation."""
        duty = BASELINE_DUTY_CODE if self.duty is None else int(round(self.duty * 10000))
        return ((KINDS.index(self.kind) << 48) | (int(round(self.tilt_deg * 100)) << 32)
                | (int(round(abs(self.speed_mps) * 1000)) << 16) | duty)

    def trial_config(self, seed: int) -> TrialConfig:
        return TrialConfig(kind=self.kind, tilt_deg=self.tilt_deg, speed_mps=self.speed_mps,
                           duty=0.0 if self.duty is None else self.duty,
                           mechanism_attached=not self.baseline, seed=seed)

    def label(self) -> str:
        series = "baseline" if self.baseline else f"D={self.duty:g}"
        return f"{self.kind} tilt={self.tilt_deg:g} speed={self.speed_mps:g} {series}"


def signed_speed(kind: str, magnitude: float) -> float:
    return -abs(magnitude) if kind == "landing" else abs(magnitude)


def _sort_key(key: CellKey):
    # baseline sorts after every duty at the same (kind, tilt, speed)
    return (KINDS.index(key.kind), key.tilt_deg, abs(key.speed_mps),
            key.duty is None, key.duty or 0.0)


def canonical_order(keys: Iterable[CellKey]) -> list[CellKey]:
    return sorted(set(keys), key=_sort_key)


@dataclass(frozen=True)
class SweepConfig:
    kinds: tuple[str, ...] = ("landing",)
    tilts_deg: tuple[float, ...] = DEFAULT_TILTS_DEG
    speeds_mps: tuple[float, ...] = DEFAULT_SPEEDS_MPS
    duties: tuple[float, ...] = DEFAULT_DUTIES
    include_baseline: bool = True
    trials_per_cell: int = 5
    paper_matrix_mode: bool = False
    master_seed: int = 0
    parallelism: int = 1

    def validate(self) -> "SweepConfig":
        if not self.kinds or any(k not in KINDS for k in self.kinds):
            raise ConfigError("sweep.kinds", f"must be a non-empty subset of {KINDS}")
        if any(not 0 <= t < 90 for t in self.tilts_deg):
            raise ConfigError("sweep.tilts_deg", "tilts must be in [0, 90)")
        if any(s == 0 or not math.isfinite(s) for s in self.speeds_mps):
            raise ConfigError("sweep.speeds_mps", "speeds must be finite and non-zero")
        if any(not 0 <= d <= 1 for d in self.duties):
            raise ConfigError("sweep.duties", "duties must be in [0, 1]")
        if self.trials_per_cell < 0:
            raise ConfigError("sweep.trials_per_cell", "must be >= 0")
        if self.parallelism < 1:
            raise ConfigError("sweep.parallelism", "must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("sweep.master_seed", "must be a 64-bit unsigned integer")
        return self

    def cells(self) -> list[CellKey]:
        """All cells in canonical order.

        In paper-matrix mode duty 1.0 is kept only at 12 degrees and 0.25 m/s.
        """
        keys = []
        for kind in self.kinds:
            for tilt in self.tilts_deg:
                for mag in self.speeds_mps:
                    speed = signed_speed(kind, mag)
                    for duty in self.duties:
                        if (self.paper_matrix_mode and duty == 1.0
                                and not (tilt == 12.0 and abs(mag) == 0.25)):
                            continue
                        keys.append(CellKey(kind, float(tilt), speed, float(duty)))
                    if self.include_baseline:
                        keys.append(CellKey(kind, float(tilt), speed, None))
        return canonical_order(keys)


def _parse_sweep_value(key: str, raw: str, current):
    text = raw.strip()
    try:
        if isinstance(current, bool):
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if key == "kinds":
            return tuple(v.strip() for v in text.split(",") if v.strip())
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"sweep.{key}", f"cannot parse {text!r}") from None


def sweep_config_from_items(items: Mapping[str, str], base: Optional[SweepConfig] = None
                            ) -> SweepConfig:
    """Apply ``sweep.<field>`` text values (lists are comma-separated) and validate."""
    sc = base or SweepConfig()
    names = {f.name for f in dataclasses.fields(SweepConfig)}
    for dotted, raw in items.items():
        key = dotted[len("sweep."):] if dotted.startswith("sweep.") else dotted
        if key not in names:
            raise ConfigError(f"sweep.{key}", "unknown key")
        sc = dataclasses.replace(sc, **{key: _parse_sweep_value(key, raw, getattr(sc, key))})
    return sc.validate()


@dataclass(frozen=True)
class CellResult:
    key: CellKey
    n_trials: int
    n_success: int
    rate: float
    ci_low: float
    ci_high: float
    # (mode, count) for every mode in FAILURE_MODES order, "none" = successes
    failure_histogram: tuple[tuple[str, int], ...]
    trial_modes: tuple[str, ...] = ()

    @property
    def top_failure_mode(self) -> str:
        """Most frequent failure mode, ties broken by FAILURE_MODES order; "none" if no failures."""
        failures = [(count, -i, mode) for i, (mode, count) in enumerate(self.failure_histogram)
                    if mode != "none" and count > 0]
        return max(failures)[2] if failures else "none"

    def count(self, mode: str) -> int:
        return dict(self.failure_histogram).get(mode, 0)


@dataclass(frozen=True)
class SweepResults:
    cells: tuple[CellResult, ...]
    master_seed: int = 0
    trials_per_cell: int = 0

    def __len__(self):
        return len(self.cells)

    def as_map(self) -> dict[CellKey, CellResult]:
        return {c.key: c for c in self.cells}

    def get(self, kind: str, tilt_deg: float, speed_mps: float, duty: Optional[float]) -> CellResult:
        key = CellKey(kind, float(tilt_deg), float(speed_mps), None if duty is None else float(duty))
        try:
            return self.as_map()[key]
        except KeyError:
            raise KeyError(f"no cell {key.label()}") from None


class SweepFault(SimulatorFault):
    """A trial inside a sweep produced a non-finite state."""

    def __init__(self, key: CellKey, trial_index: int, seed: int):
        self.key = key
        self.trial_index = trial_index
        self.seed = seed
        super().__init__(f"sim_fault in cell [{key.label()}] trial {trial_index} seed {seed}")


def wilson_interval(n_success: int, n_trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if not 0 <= n_success <= n_trials:
        raise ValueError("need 0 <= n_success <= n_trials")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    n = float(n_trials)
    p = n_success / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    low = 0.0 if n_success == 0 else max(0.0, centre - half)
    high = 1.0 if n_success == n_trials else min(1.0, centre + half)
    return low, high


def _check_seeds(keys: Sequence[CellKey], master_seed: int, trials: int) -> None:
    indices = [k.index() for k in keys]
    if len(set(indices)) != len(indices):
        raise ConfigError("sweep", "cell keys collide after packing (tilt/speed/duty resolution)")
    seeds = {derive_seed(master_seed, ci, t) for ci in indices for t in range(trials)}
    if len(seeds) != len(indices) * trials:
        raise ConfigError("sweep.master_seed", "derived trial seeds collide; pick another seed")


def run_cell(key: CellKey, sim: SimConfig, trials: int, master_seed: int) -> CellResult:
    modes = []
    cell_index = key.index()
    for t in range(trials):
        seed = derive_seed(master_seed, cell_index, t)
        cfg = key.trial_config(seed)
        summary, _ = simulate(cfg, sim)
        if summary.sim_fault:
            raise SweepFault(key, t, seed)
        modes.append(classify_outcome(key.kind, summary, sim).failure_mode)
    counts = Counter(modes)
    n_success = counts["none"]
    low, high = wilson_interval(n_success, trials)
    return CellResult(key=key, n_trials=trials, n_success=n_success, rate=n_success / trials,
                      ci_low=low, ci_high=high,
                      failure_histogram=tuple((m, counts[m]) for m in FAILURE_MODES),
                      trial_modes=tuple(modes))


def run_cells(keys: Iterable[CellKey], sim: SimConfig, trials_per_cell: int, master_seed: int = 0,
              parallelism: int = 1, progress: Optional[Callable[[CellResult], None]] = None
              ) -> SweepResults:
    """Run ``trials_per_cell`` trials in each cell; results come back in canonical order."""
    keys = canonical_order(keys)
    if trials_per_cell == 0 or not keys:
        return SweepResults((), master_seed, trials_per_cell)
    sim.validate()
    _check_seeds(keys, master_seed, trials_per_cell)

    def work(key):
        res = run_cell(key, sim, trials_per_cell, master_seed)
        if progress is not None:
            progress(res)
        return res

    if parallelism == 1:
        cells = [work(k) for k in keys]
    else:
        # the trial kernel releases the GIL, so threads run trials concurrently
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            cells = list(pool.map(work, keys))
    return SweepResults(tuple(cells), master_seed, trials_per_cell)


def run_sweep(sc: SweepConfig, sim: SimConfig,
              progress: Optional[Callable[[CellResult], None]] = None) -> SweepResults:
    sc.validate()
    return run_cells(sc.cells(), sim, sc.trials_per_cell, sc.master_seed, sc.parallelism, progress)


# -- ordinal constraints -------------------------------------------------------------

def overlap(a: CellResult, b: CellResult) -> bool:
    return a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


@dataclass(frozen=True)
class Constraint:
    name: str
    description: str
    cells: tuple[CellKey, ...]
    check: Callable[[Mapping[CellKey, CellResult]], tuple[bool, str]] = field(compare=False)

    def evaluate(self, results: Mapping[CellKey, CellResult]) -> tuple[bool, str]:
        missing = [k for k in self.cells if k not in results]
        if missing:
            return False, f"missing cells: {', '.join(k.label() for k in missing)}"
        return self.check(results)


def _pct(c: CellResult) -> str:
    return f"{100 * c.rate:.0f}%"


def _landing(tilt, speed, duty):
    return CellKey("landing", float(tilt), float(speed), None if duty is None else float(duty))


def ordinal_constraints(tilts=DEFAULT_TILTS_DEG, duties=DEFAULT_DUTIES) -> list[Constraint]:
    """The ordinal trends the calibrated defaults must reproduce."""
    tilts = tuple(float(t) for t in sorted(tilts))
    duties = tuple(float(d) for d in sorted(duties))
    lo, hi = tilts[0], tilts[-1]
    slow, fast = -0.25, -0.5
    out = []

    base = tuple(_landing(t, slow, None) for t in tilts)

    def baseline_collapse(r):
        rates = [r[k] for k in base]
        mono = all(b.rate <= a.rate or overlap(a, b) for a, b in zip(rates, rates[1:]))
        ok = rates[0].rate >= 0.95 and rates[-1].rate <= 0.05 and mono
        return ok, "baseline " + " ".join(_pct(c) for c in rates) + ("" if mono else " (not monotone)")

    out.append(Constraint("baseline_collapse",
                          f"baseline landing at {slow} m/s: >=95% at {lo:g} deg, <=5% at {hi:g} deg,"
                          " non-increasing in tilt within CI", base, baseline_collapse))

    mech = tuple(_landing(t, slow, d) for t in tilts for d in duties)

    def dominance(r):
        bad = [k for k in mech if r[k].rate < r[_landing(k.tilt_deg, slow, None)].rate]
        # "100% within CI": the cell's interval reaches that of an all-success cell
        low_bad = [k for k in mech if k.tilt_deg <= 22.0
                   and r[k].ci_high < wilson_interval(r[k].n_trials, r[k].n_trials)[0]]
        ok = not bad and not low_bad
        detail = "ok" if ok else "; ".join(
            [f"below baseline: {k.label()}" for k in bad]
            + [f"not 100% within CI: {k.label()} ({_pct(r[k])})" for k in low_bad])
        return ok, detail

    out.append(Constraint("mechanism_dominance",
                          f"mechanism >= baseline in every landing cell at {slow} m/s and 100% within"
                          " CI at tilts <= 22 deg", mech + base, dominance))

    steep = tuple(_landing(hi, slow, d) for d in duties)

    def duty_effect(r):
        rates = [r[k].rate for k in steep]
        ok = all(b >= a for a, b in zip(rates, rates[1:])) and rates[-1] > 0
        return ok, f"{hi:g} deg: " + " ".join(_pct(r[k]) for k in steep)

    out.append(Constraint("duty_effect",
                          f"at {hi:g} deg and {slow} m/s landing rate non-decreasing in duty,"
                          f" positive at duty {duties[-1]:g}", steep, duty_effect))

    fast_cells = tuple(_landing(t, fast, d) for t in tilts for d in duties + (None,))
    slow_cells = tuple(_landing(t, slow, d) for t in tilts for d in duties + (None,))

    def fast_descent(r):
        base_bad = [t for t in tilts if t >= 33.0 and r[_landing(t, fast, None)].rate > 0.05]
        worse = [kf for kf, ks in zip(fast_cells, slow_cells)
                 if r[kf].rate > r[ks].rate and not overlap(r[kf], r[ks])]
        ok = not base_bad and not worse
        detail = "ok" if ok else "; ".join(
            [f"baseline {t:g} deg at {fast} m/s above 5%" for t in base_bad]
            + [f"faster beats slower: {k.label()}" for k in worse])
        return ok, detail

    out.append(Constraint("fast_descent",
                          f"at {fast} m/s baseline <=5% for tilts >= 33 deg and no cell better than"
                          f" at {slow} m/s beyond CI", fast_cells + slow_cells, fast_descent))

    low_d, high_d = duties[0], duties[-1]
    tk = lambda d: CellKey("takeoff", lo, 0.25, None if d is None else float(d))  # noqa: E731
    take = (tk(low_d), tk(None), tk(high_d))

    def takeoff_effect(r):
        low, b, high = (r[k] for k in take)
        separated = low.ci_high < b.ci_low and low.ci_high < high.ci_low
        fails = low.n_trials - low.n_success
        dominant = low.count("stuck_engaged") + low.count("tip_over")
        dominated = fails > 0 and 2 * dominant > fails
        return separated and dominated, (f"D={low_d:g} {_pct(low)} vs baseline {_pct(b)}, D={high_d:g}"
                                         f" {_pct(high)}; top failure {low.top_failure_mode}")

    out.append(Constraint("takeoff_duty",
                          f"takeoff at {lo:g} deg, 0.25 m/s: duty {low_d:g} below baseline and duty"
                          f" {high_d:g} beyond CI, failures mostly stuck_engaged/tip_over",
                          take, takeoff_effect))

    def aggregate(r):
        gaps = [max(r[_landing(t, slow, d)].rate for d in duties) - r[_landing(t, slow, None)].rate
                for t in tilts]
        mean = sum(gaps) / len(gaps)
        return mean >= 0.30, f"mean best-duty gain {100 * mean:+.1f} points"

    out.append(Constraint("aggregate_gain",
                          f"best-duty mechanism minus baseline, averaged over tilts at {slow} m/s,"
                          " >= +30 points", mech + base, aggregate))
    return out


def evaluate_constraints(constraints: Sequence[Constraint], results: SweepResults
                         ) -> list[tuple[str, bool, str]]:
    r = results.as_map()
    return [(c.name, *c.evaluate(r)) for c in constraints]


# -- calibration ------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationReport:
    config: SimConfig
    knob_values: tuple[tuple[str, float], ...]
    satisfied: int
    total: int
    outcomes: tuple[tuple[str, bool, str], ...]
    evaluations: int
    trials_per_cell: int

    @property
    def complete(self) -> bool:
        return self.satisfied == self.total

    def text(self) -> str:
        lines = [f"satisfied {self.satisfied}/{self.total} constraints after {self.evaluations}"
                 f" evaluations at {self.trials_per_cell} trials/cell"]
        lines += [f"  {name} = {value!r}" for name, value in self.knob_values]
        lines += [f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in self.outcomes]
        if not self.complete:
            lines.append("budget exhausted without satisfying every constraint")
        return "\n".join(lines) + "\n"


def _apply_knobs(sim: SimConfig, values: Mapping[str, float]) -> SimConfig:
    for key, value in values.items():
        sim = set_field(sim, key, repr(float(value)))
    return sim.validate()


def _score(outcomes) -> int:
    return sum(1 for _, ok, _ in outcomes if ok)


def calibrate(targets: Sequence[Constraint], knobs: Mapping[str, tuple[float, float]],
              budget: int, sim: SimConfig, *, trials_per_cell: int = 100, master_seed: int = 0,
              screening_trials: Optional[int] = None, finalists: int = 3, parallelism: int = 1,
              rng_seed: int = 0, log: Optional[Callable[[str], None]] = None) -> CalibrationReport:
    """Random search over ``knobs`` maximizing the number of satisfied ``targets``.

    Each knob maps a dotted config key to an inclusive ``(low, high)`` range;
    the starting config's values are always the first candidate. With
    ``screening_trials`` set, candidates are first ranked at that cheaper
    trial count and the best ``finalists`` are re-run at ``trials_per_cell``.
    The returned report always reflects a ``trials_per_cell`` evaluation.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    current = dict(config_items(sim))
    for key, (low, high) in knobs.items():
        if key not in current:
            raise ConfigError(key, "unknown calibration knob")
        if not low <= high:
            raise ConfigError(key, "knob range must satisfy low <= high")
    cells = canonical_order(k for c in targets for k in c.cells)
    rng = random.Random(rng_seed)

    def candidate(i):
        if i == 0:
            return {k: min(max(float(current[k]), lo), hi) for k, (lo, hi) in knobs.items()}
        return {k: lo if lo == hi else rng.uniform(lo, hi) for k, (lo, hi) in knobs.items()}

    def evaluate(values, trials):
        cfg = _apply_knobs(sim, values)
        res = run_cells(cells, cfg, trials, master_seed, parallelism)
        return cfg, evaluate_constraints(targets, res)

    degenerate = all(lo == hi for lo, hi in knobs.values())
    n_candidates = 1 if degenerate else budget
    first_trials = screening_trials if screening_trials else trials_per_cell
    scored = []
    for i in range(n_candidates):
        values = candidate(i)
        cfg, outcomes = evaluate(values, first_trials)
        scored.append((_score(outcomes), -i, values, cfg, outcomes))
        if log:
            log(f"candidate {i}: {_score(outcomes)}/{len(targets)} " +
                " ".join(f"{k.split('.')[-1]}={v:.4g}" for k, v in values.items()))
        if _score(outcomes) == len(targets) and not screening_trials:
            break
    scored.sort(key=lambda s: (s[0], s[1]), reverse=True)
    evaluations = len(scored)
    if screening_trials and screening_trials != trials_per_cell:
        final = []
        for score, neg_i, values, _, _ in scored[:max(1, finalists)]:
            cfg, outcomes = evaluate(values, trials_per_cell)
            evaluations += 1
            final.append((_score(outcomes), neg_i, values, cfg, outcomes))
        final.sort(key=lambda s: (s[0], s[1]), reverse=True)
        scored = final
    best_score, _, values, cfg, outcomes = scored[0]
    return CalibrationReport(config=cfg, knob_values=tuple(values.items()), satisfied=best_score,
                             total=len(targets), outcomes=tuple(outcomes), evaluations=evaluations,
                             trials_per_cell=trials_per_cell)


DEFAULT_KNOBS = {
    "mechanism.force_per_turn_n": (1.0, 8.0),
    "mechanism.shear_per_turn_n": (1.0, 8.0),
    "mechanism.no_load_speed_rps": (1.5, 3.0),
    "platform.mu_static": (0.45, 0.64),
    "noise.lateral_offset_std_m": (0.005, 0.02),
    "noise.pitch_offset_std_deg": (1.0, 3.0),
    "noise.thrust_noise_std_frac": (0.01, 0.04),
    "platform.half_extent_m": (0.1, 0.2),
}
