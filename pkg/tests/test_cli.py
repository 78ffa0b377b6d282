import json
import shlex
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

import corkland.sweep
import corkland.trial
from corkland.cli import main
from corkland.core import dump_config, load_defaults
from corkland.dynamics import SimulatorFault
from corkland.sweep import CellKey, SweepFault
from corkland.trial import RECORD_FIELDS

ROOT = Path(__file__).resolve().parent.parent


def _record(out):
    lines = [line for line in out.splitlines() if line.strip()]
    assert len(lines) == 1
    return json.loads(lines[0])


def test_trial_prints_one_record(capsys):
    code = main(["trial", "--kind", "landing", "--tilt", "12", "--speed", "-0.25", "--duty", "1.0",
                 "--seed", "1"])
    assert code == 0
    rec = _record(capsys.readouterr().out)
    assert tuple(rec) == RECORD_FIELDS
    assert rec["success"] is True and rec["duty"] == 1.0


def test_trial_override_changes_config(capsys):
    main(["trial", "--tilt", "22", "--baseline", "--seed", "2"])
    plain = _record(capsys.readouterr().out)
    main(["trial", "--tilt", "22", "--baseline", "--seed", "2", "--platform.mu_static=0.95",
          "--platform.mu_kinetic", "0.9"])
    grippy = _record(capsys.readouterr().out)
    assert plain["failure_mode"] == "slide_off"
    assert grippy["success"] is True


def test_trial_dump(tmp_path, capsys):
    path = tmp_path / "traj.csv"
    assert main(["trial", "--seed", "3", "--dump", str(path)]) == 0
    assert path.read_text().startswith("t,x,z,")


def test_sweep_bad_duty_exits_1(capsys):
    assert main(["sweep", "--duty", "1.5"]) == 1
    assert "duties" in capsys.readouterr().err


def test_override_validation_names_field(capsys):
    assert main(["trial", "--platform.mu_static", "-1"]) == 1
    assert "platform.mu_static" in capsys.readouterr().err


def test_unknown_override_key(capsys):
    assert main(["trial", "--platform.colour", "red"]) == 1
    assert "platform.colour" in capsys.readouterr().err


def test_unknown_flag_and_subcommand(capsys):
    assert main(["trial", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["hover"]) == 1
    assert main([]) == 1


def test_missing_config_file(tmp_path, capsys):
    assert main(["trial", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "not found" in capsys.readouterr().err


def test_restricted_matrix_sweep_writes_reports(tmp_path, capsys):
    out = tmp_path / "results"
    code = main(["sweep", "--config", str(ROOT / "defaults.cfg"), "--paper-matrix", "--seed", "7",
                 "--trials", "1", "--out", str(out), "--no-png"])
    assert code == 0
    assert (out / "results.csv").is_file()
    svgs = sorted(out.glob("*.svg"))
    assert [p.name for p in svgs] == ["landing_0p25.svg", "landing_0p5.svg", "takeoff_0p25.svg",
                                      "takeoff_0p5.svg"]
    for p in svgs:
        ET.fromstring(p.read_text())
    assert "baseline" in capsys.readouterr().out


def test_sweep_png_and_report_rerender(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["sweep", "--kinds", "landing", "--tilts", "12", "--speeds", "0.25",
                 "--duties", "0.45", "--trials", "2", "--out", str(out)]) == 0
    assert (out / "landing_0p25.png").is_file()
    again = tmp_path / "b"
    assert main(["report", "--csv", str(out / "results.csv"), "--out", str(again)]) == 0
    assert (again / "results.csv").read_bytes() == (out / "results.csv").read_bytes()
    assert (again / "landing_0p25.svg").read_bytes() == (out / "landing_0p25.svg").read_bytes()


def test_sweep_keys_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(dump_config(load_defaults()) + "\nsweep.kinds = takeoff\nsweep.tilts_deg = 12\n"
                   "sweep.speeds_mps = 0.25\nsweep.duties = 1.0\nsweep.trials_per_cell = 1\n")
    out = tmp_path / "r"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--no-png"]) == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 3 and all(r.startswith("takeoff") for r in rows[1:])


def test_sweep_key_rejected_outside_sweep(capsys):
    assert main(["trial", "--sweep.trials_per_cell", "3"]) == 1


def test_pulloff_table(capsys):
    assert main(["pulloff", "--diameters", "4,6.5,8"]) == 0
    lines = capsys.readouterr().out.split()
    assert lines[0] == "diameter_m,peak_pull_off_n"
    peaks = [float(line.split(",")[1]) for line in lines[1:]]
    assert len(peaks) == 3 and peaks[0] > peaks[1] > peaks[2]


def test_calibrate_writes_config(tmp_path, capsys):
    out = tmp_path / "cal.cfg"
    mu = load_defaults().platform.mu_static
    code = main(["calibrate", "--budget", "1", "--trials", "2", "--only", "baseline_collapse",
                 "--knob", f"platform.mu_static={mu}:{mu}", "--out", str(out)])
    assert code == 0
    assert "constraints" in capsys.readouterr().out
    assert out.read_text() == dump_config(load_defaults())


def test_trial_fault_exits_2_with_repro(monkeypatch, capsys):
    def boom(cfg, sim, dump_path=None):
        raise SimulatorFault("non-finite")
    monkeypatch.setattr(corkland.trial, "run_trial", boom)
    assert main(["trial", "--tilt", "33", "--duty", "0.45", "--seed", "5"]) == 2
    err = capsys.readouterr().err
    repro = [line for line in err.splitlines() if line.startswith("reproduce: ")][0]
    argv = shlex.split(repro[len("reproduce: "):])
    assert argv[:2] == ["corkland", "trial"]
    assert argv[argv.index("--seed") + 1] == "5" and argv[argv.index("--tilt") + 1] == "33"


def test_sweep_fault_exits_2_naming_cell(monkeypatch, capsys):
    key = CellKey("landing", 43.0, -0.5, None)

    def boom(sc, sim, progress=None):
        raise SweepFault(key, 4, 1234)
    monkeypatch.setattr(corkland.sweep, "run_sweep", boom)
    assert main(["sweep", "--trials", "1"]) == 2
    err = capsys.readouterr().err
    assert "trial 4" in err and "seed 1234" in err
    repro = [line for line in err.splitlines() if line.startswith("reproduce: ")][0]
    argv = shlex.split(repro[len("reproduce: "):])
    assert "--baseline" in argv and argv[argv.index("--seed") + 1] == "1234"


def test_repro_command_reproduces(capsys):
    argv = ["trial", "--tilt", "43", "--speed", "-0.5", "--duty", "1", "--seed", "77"]
    main(argv)
    first = _record(capsys.readouterr().out)
    main(argv)
    assert _record(capsys.readouterr().out) == first


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "corkland", "pulloff", "--diameters", "6.5"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("diameter_m,peak_pull_off_n\n0.0065,")
