"""Command-line entry point: trial, sweep, calibrate, pulloff and report.

Any ``--section.key value`` flag (or ``--section.key=value``) overrides the
matching config entry after the config file is loaded, for example
``--platform.mu_static 0.5``. Exit codes: 0 success, 1 usage or validation
error, 2 simulator fault.
"""
from __future__ import annotations

import argparse
import dataclasses
import shlex
import sys
from pathlib import Path

from .core import ConfigError, SimConfig, apply_overrides, dump_config, load_defaults, parse_config
from .dynamics import SimulatorFault

EXIT_OK, EXIT_USAGE, EXIT_FAULT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _split_overrides(extra: list[str]) -> dict[str, str]:
    """Turn leftover ``--a.b value`` / ``--a.b=value`` tokens into overrides."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            raise UsageError(f"unrecognized argument: {tok}")
        key, eq, value = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 1
        out[key] = value
        i += 1
    return out


def _read_config(args, overrides: dict[str, str]) -> tuple[SimConfig, dict[str, str]]:
    """Load the config file (or shipped defaults) and apply overrides.

    ``sweep.*`` keys, from the file or the flags, are returned separately.
    """
    sweep_items = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        kept = []
        for line in path.read_text().splitlines():
            key = line.split("#", 1)[0].partition("=")[0].strip()
            if key.startswith("sweep."):
                sweep_items[key] = line.split("#", 1)[0].partition("=")[2]
                kept.append("")
            else:
                kept.append(line)
        sim = parse_config("\n".join(kept))
    else:
        sim = load_defaults()
    sim_over = {}
    for k, v in overrides.items():
        (sweep_items if k.startswith("sweep.") else sim_over)[k] = v
    return (apply_overrides(sim, sim_over) if sim_over else sim), sweep_items


def _load_sim(args, overrides: dict[str, str]) -> SimConfig:
    sim, sweep_items = _read_config(args, overrides)
    stray = [k for k in sweep_items if k in overrides]
    if stray:
        raise ConfigError(stray[0], "only the sweep subcommand takes sweep.* keys")
    return sim


def _repro_command(args, overrides, kind, tilt, speed, duty, baseline, seed) -> str:
    parts = ["corkland", "trial", "--kind", kind, "--tilt", f"{tilt:g}", "--speed", f"{speed:g}",
             "--duty", f"{duty:g}", "--seed", str(seed)]
    if baseline:
        parts.append("--baseline")
    if args.config:
        parts += ["--config", str(args.config)]
    for k, v in overrides.items():
        parts += [f"--{k}", v]
    return shlex.join(parts)


# -- subcommands -----------------------------------------------------------------

def cmd_trial(args, overrides) -> int:
    from .trial import TrialConfig, run_trial
    sim = _load_sim(args, overrides)
    speed = args.speed if args.speed is not None else (-0.25 if args.kind == "landing" else 0.25)
    cfg = TrialConfig(kind=args.kind, tilt_deg=args.tilt, speed_mps=speed, duty=args.duty,
                      mechanism_attached=not args.baseline, seed=args.seed).validate()
    try:
        outcome = run_trial(cfg, sim, dump_path=args.dump)
    except SimulatorFault as exc:
        print(f"sim_fault: {exc}", file=sys.stderr)
        print("reproduce: " + _repro_command(args, overrides, cfg.kind, cfg.tilt_deg, cfg.speed_mps,
                                             cfg.duty, args.baseline, cfg.seed), file=sys.stderr)
        return EXIT_FAULT
    print(outcome.record(cfg))
    return EXIT_OK


def _sweep_config(args, sweep_items):
    from .sweep import SweepConfig, sweep_config_from_items
    sc = sweep_config_from_items(sweep_items, SweepConfig(kinds=("landing", "takeoff")))
    kw = {}
    if args.kinds:
        kw["kinds"] = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    if args.tilts is not None:
        kw["tilts_deg"] = args.tilts
    if args.speeds is not None:
        kw["speeds_mps"] = tuple(abs(v) for v in args.speeds)
    if args.duties is not None:
        kw["duties"] = args.duties
    if args.trials is not None:
        kw["trials_per_cell"] = args.trials
    if args.no_baseline:
        kw["include_baseline"] = False
    if args.paper_matrix:
        kw["paper_matrix_mode"] = True
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.parallelism is not None:
        kw["parallelism"] = args.parallelism
    return dataclasses.replace(sc, **kw).validate()


def cmd_sweep(args, overrides) -> int:
    from .report import ReportSpec, render_matrix, slices, write_report
    from .sweep import SweepFault, run_sweep
    sim, sweep_items = _read_config(args, overrides)
    sc = _sweep_config(args, sweep_items)

    def progress(cell):
        if args.verbose:
            print(f"{cell.key.label()}: {cell.n_success}/{cell.n_trials}", file=sys.stderr)

    try:
        results = run_sweep(sc, sim, progress)
    except SweepFault as exc:
        k = exc.key
        print(f"sim_fault: {exc}", file=sys.stderr)
        print("reproduce: " + _repro_command(args, overrides, k.kind, k.tilt_deg, k.speed_mps,
                                             k.duty or 0.0, k.baseline, exc.seed), file=sys.stderr)
        return EXIT_FAULT
    if not results.cells:
        print("no trials requested; nothing written", file=sys.stderr)
        return EXIT_OK
    spec = ReportSpec(output_dir=Path(args.out))
    written = write_report(results, spec)
    if not args.no_png:
        from .figures import write_figures
        written += write_figures(results, args.out, spec)
    for kind, speed in slices(results):
        print(render_matrix(results, kind, speed))
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def _parse_knob(text: str):
    key, eq, rng = text.partition("=")
    lo, colon, hi = rng.partition(":")
    try:
        if not eq:
            raise ValueError
        low = float(lo)
        return key.strip(), (low, float(hi) if colon else low)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected key=low:high, got {text!r}") from None


def cmd_calibrate(args, overrides) -> int:
    from .sweep import DEFAULT_KNOBS, SweepFault, calibrate, ordinal_constraints
    sim = _load_sim(args, overrides)
    knobs = dict(args.knob) if args.knob else dict(DEFAULT_KNOBS)
    targets = ordinal_constraints()
    if args.only:
        wanted = set(args.only.split(","))
        unknown = wanted - {c.name for c in targets}
        if unknown:
            raise UsageError(f"unknown constraint names: {sorted(unknown)}")
        targets = [c for c in targets if c.name in wanted]
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    try:
        report = calibrate(targets, knobs, args.budget, sim, trials_per_cell=args.trials,
                           master_seed=args.seed, screening_trials=args.screening,
                           parallelism=args.parallelism, rng_seed=args.search_seed, log=log)
    except SweepFault as exc:
        print(f"sim_fault during calibration: {exc}", file=sys.stderr)
        return EXIT_FAULT
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dump_config(report.config))
    text = report.text()
    if args.report:
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_pulloff(args, overrides) -> int:
    from .adhesion import PulloffScaling, diameter_sweep
    sim = _load_sim(args, overrides)
    geometry = sim.mechanism.geometry
    if args.turns is not None:
        geometry = dataclasses.replace(geometry, turns=args.turns)
    geometry.validate()
    diameters = [d / 1000.0 for d in (args.diameters or (4.0, 6.5, 8.0))]
    if any(d <= 0 for d in diameters):
        raise ConfigError("diameters", "must be > 0")
    scaling = PulloffScaling.from_params(sim.mechanism)
    print("diameter_m,peak_pull_off_n")
    for d, force in diameter_sweep(diameters, geometry, scaling):
        print(f"{d:.6g},{force:.6f}")
    return EXIT_OK


def cmd_report(args, overrides) -> int:
    from .report import FORMATS, ReportSpec, read_csv, render_matrix, slices, write_report
    results = read_csv(args.csv)
    if not results.cells:
        raise ConfigError("csv", "file has no result rows")
    formats = tuple(f for f in (args.formats or ",".join(FORMATS)).split(",") if f)
    spec = ReportSpec(formats=formats, output_dir=Path(args.out))
    written = write_report(results, spec)
    if args.png:
        from .figures import write_figures
        written += write_figures(results, args.out, spec)
    for kind, speed in slices(results):
        print(render_matrix(results, kind, speed))
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="corkland", description="Planar multirotor perching simulator.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="config file (default: shipped defaults)")
        sp.add_argument("-v", "--verbose", action="store_true")

    t = sub.add_parser("trial", help="run one trial and print its outcome record")
    common(t)
    t.add_argument("--kind", choices=("landing", "takeoff"), default="landing")
    t.add_argument("--tilt", type=float, default=12.0, help="platform tilt, degrees")
    t.add_argument("--speed", type=float, help="signed vertical speed, m/s")
    t.add_argument("--duty", type=float, default=1.0)
    t.add_argument("--baseline", action="store_true", help="vehicle without the mechanism")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--dump", type=Path, help="write the trajectory CSV here")
    t.set_defaults(func=cmd_trial)

    s = sub.add_parser("sweep", help="run the experiment matrix and write reports")
    common(s)
    s.add_argument("--kinds", help="comma list of landing,takeoff (default both)")
    s.add_argument("--tilts", type=_floats)
    s.add_argument("--speeds", type=_floats, help="speed magnitudes, m/s")
    s.add_argument("--duties", "--duty", type=_floats, dest="duties")
    s.add_argument("--trials", type=int, help="trials per cell")
    s.add_argument("--no-baseline", action="store_true")
    s.add_argument("--paper-matrix", action="store_true",
                   help="duty 1.0 only at 12 deg and 0.25 m/s")
    s.add_argument("--seed", type=int, help="master seed (default 0)")
    s.add_argument("-j", "--parallelism", type=int, help="worker threads (default 1)")
    s.add_argument("--out", default="results")
    s.add_argument("--no-png", action="store_true", help="skip the matplotlib PNG figures")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="random search for ordinal-trend parameters")
    common(c)
    c.add_argument("--budget", type=int, default=20, help="candidate configs to evaluate")
    c.add_argument("--trials", type=int, default=100, help="trials per cell for the final ranking")
    c.add_argument("--screening", type=int, help="cheaper trials per cell for the first pass")
    c.add_argument("--knob", type=_parse_knob, action="append",
                   help="dotted.key=low:high (repeatable; default knob set if omitted)")
    c.add_argument("--only", help="comma list of constraint names to target")
    c.add_argument("--seed", type=int, default=0, help="master seed for the trials")
    c.add_argument("--search-seed", type=int, default=0, help="seed of the random search")
    c.add_argument("-j", "--parallelism", type=int, default=1)
    c.add_argument("--out", default="calibrated.cfg", help="candidate config file")
    c.add_argument("--report", help="also write the constraint report here")
    c.set_defaults(func=cmd_calibrate)

    q = sub.add_parser("pulloff", help="quasi-static pull-off force versus helix diameter")
    common(q)
    q.add_argument("--diameters", type=_floats, help="helix diameters, mm (default 4,6.5,8)")
    q.add_argument("--turns", type=float)
    q.set_defaults(func=cmd_pulloff)

    r = sub.add_parser("report", help="re-render tables and charts from a results CSV")
    r.add_argument("--csv", required=True, type=Path)
    r.add_argument("--out", default="results")
    r.add_argument("--formats", help="comma list of csv,table,svg")
    r.add_argument("--png", action="store_true", help="also write matplotlib PNG figures")
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, extra = parser.parse_known_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage() + "corkland: error: a subcommand is required")
        try:
            overrides = _split_overrides(extra)
        except UsageError as exc:
            raise UsageError(f"{exc}\n{parser.format_usage()}") from None
        if overrides and args.command == "report":
            raise UsageError("report does not take config overrides")
        return args.func(args, overrides)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
