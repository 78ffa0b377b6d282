import dataclasses

import pytest

from corkland.core import ConfigError, derive_seed
from corkland.sweep import (CellKey, SweepConfig, calibrate, canonical_order, ordinal_constraints,
                            run_cells, run_sweep, sweep_config_from_items, wilson_interval)
from corkland.trial import TrialConfig, run_trial


def test_restricted_matrix_cell_count():
    sc = SweepConfig(kinds=("landing",), paper_matrix_mode=True, trials_per_cell=5)
    cells = sc.cells()
    assert len(cells) == 33
    assert len(cells) * sc.trials_per_cell == 165
    full_duty = [c for c in cells if c.duty == 1.0]
    assert full_duty == [CellKey("landing", 12.0, -0.25, 1.0)]


def test_full_matrix_cell_count():
    sc = SweepConfig(kinds=("landing", "takeoff"))
    assert len(sc.cells()) == 2 * 4 * 2 * 5


def test_speed_signed_by_kind():
    cells = SweepConfig(kinds=("landing", "takeoff"), tilts_deg=(12.0,), speeds_mps=(0.25,)).cells()
    assert {c.speed_mps for c in cells if c.kind == "landing"} == {-0.25}
    assert {c.speed_mps for c in cells if c.kind == "takeoff"} == {0.25}


def test_canonical_order_puts_baseline_last():
    keys = [CellKey("landing", 12.0, -0.25, None), CellKey("landing", 12.0, -0.25, 0.75),
            CellKey("landing", 12.0, -0.25, 0.15)]
    assert [k.duty for k in canonical_order(keys)] == [0.15, 0.75, None]


def test_zero_trials_is_empty(sim):
    res = run_sweep(SweepConfig(trials_per_cell=0), sim)
    assert len(res) == 0


def test_restricted_matrix_runs_165_trials(sim):
    sc = SweepConfig(kinds=("landing",), paper_matrix_mode=True, trials_per_cell=5, master_seed=7)
    res = run_sweep(sc, sim)
    assert sum(c.n_trials for c in res.cells) == 165
    for c in res.cells:
        assert c.n_success <= c.n_trials
        assert c.ci_low <= c.rate <= c.ci_high
        assert sum(n for _, n in c.failure_histogram) == c.n_trials


def test_wilson_all_success():
    low, high = wilson_interval(5, 5)
    assert low == pytest.approx(0.565518, abs=1e-6)
    assert high == 1.0


def test_wilson_no_success():
    low, high = wilson_interval(0, 5)
    assert low == 0.0
    assert high == pytest.approx(0.434482, abs=1e-6)


def test_wilson_half():
    low, high = wilson_interval(1, 2)
    assert low == pytest.approx(0.094531, abs=1e-6)
    assert high == pytest.approx(0.905469, abs=1e-6)
    assert low + high == pytest.approx(1.0)


@pytest.mark.parametrize("args", [(1, 0), (3, 2), (-1, 4)])
def test_wilson_rejects_bad_counts(args):
    with pytest.raises(ValueError):
        wilson_interval(*args)


def test_parallelism_does_not_change_results(sim):
    sc = SweepConfig(kinds=("landing", "takeoff"), tilts_deg=(22.0, 43.0), trials_per_cell=3,
                     master_seed=99)
    one = run_sweep(sc, sim)
    eight = run_sweep(dataclasses.replace(sc, parallelism=8), sim)
    assert one == eight


def test_cell_results_independent_of_neighbours(sim):
    key = CellKey("landing", 33.0, -0.25, 0.45)
    alone = run_cells([key], sim, 4, master_seed=5).cells[0]
    crowd = run_cells([CellKey("landing", 12.0, -0.25, None), key], sim, 4, master_seed=5)
    assert crowd.as_map()[key] == alone


def test_cell_uses_derived_seeds(sim):
    key = CellKey("landing", 43.0, -0.25, 1.0)
    cell = run_cells([key], sim, 3, master_seed=11).cells[0]
    modes = tuple(run_trial(key.trial_config(derive_seed(11, key.index(), t)), sim).failure_mode
                  for t in range(3))
    assert cell.trial_modes == modes


def test_baseline_key_maps_to_bare_vehicle():
    cfg = CellKey("takeoff", 12.0, 0.25, None).trial_config(3)
    assert cfg == TrialConfig(kind="takeoff", tilt_deg=12.0, speed_mps=0.25, duty=0.0,
                              mechanism_attached=False, seed=3)


def test_get_missing_cell_names_it(sim):
    res = run_cells([CellKey("landing", 12.0, -0.25, None)], sim, 1)
    with pytest.raises(KeyError, match="tilt=43"):
        res.get("landing", 43.0, -0.25, None)


@pytest.mark.parametrize("bad", [dict(duties=(1.5,)), dict(kinds=("hover",)), dict(kinds=()),
                                 dict(trials_per_cell=-1), dict(parallelism=0),
                                 dict(speeds_mps=(0.0,)), dict(tilts_deg=(90.0,))])
def test_invalid_sweep_config(bad):
    with pytest.raises(ConfigError):
        SweepConfig(**bad).validate()


def test_sweep_items_parse():
    sc = sweep_config_from_items({"sweep.kinds": "landing, takeoff", "sweep.tilts_deg": "12,43",
                                  "trials_per_cell": "7", "sweep.paper_matrix_mode": "true"})
    assert sc.kinds == ("landing", "takeoff")
    assert sc.tilts_deg == (12.0, 43.0)
    assert sc.trials_per_cell == 7 and sc.paper_matrix_mode


def test_sweep_items_reject_unknown_and_bad_values():
    with pytest.raises(ConfigError, match="sweep.bogus"):
        sweep_config_from_items({"sweep.bogus": "1"})
    with pytest.raises(ConfigError, match="duties"):
        sweep_config_from_items({"sweep.duties": "0.5,1.5"})


def test_calibrate_degenerate_range_single_candidate(sim):
    targets = [c for c in ordinal_constraints() if c.name == "baseline_collapse"]
    knobs = {"platform.mu_static": (sim.platform.mu_static, sim.platform.mu_static)}
    report = calibrate(targets, knobs, budget=5, sim=sim, trials_per_cell=4)
    assert report.evaluations == 1
    assert report.config == sim
    assert report.total == 1


def test_calibrate_rejects_unknown_knob(sim):
    with pytest.raises(ConfigError):
        calibrate(ordinal_constraints(), {"platform.nope": (0.0, 1.0)}, budget=1, sim=sim)


def test_calibrate_search_moves_knob(sim):
    targets = [c for c in ordinal_constraints() if c.name == "baseline_collapse"]
    report = calibrate(targets, {"noise.lateral_offset_std_m": (0.005, 0.015)}, budget=2, sim=sim,
                       trials_per_cell=2, rng_seed=1)
    assert 1 <= report.evaluations <= 2
    value = dict(report.knob_values)["noise.lateral_offset_std_m"]
    assert 0.005 <= value <= 0.015
    assert "constraints" in report.text()
