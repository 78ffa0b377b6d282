"""CSV, text-matrix and SVG renderings of sweep results.

Every renderer is a pure function of the results with fixed-precision
number formatting, so identical inputs give identical bytes. Series are
ordered by ascending duty with the baseline last, and the colour of a
series is picked by its index in that order.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

from .sweep import CellKey, CellResult, SweepResults, canonical_order, wilson_interval
from .trial import FAILURE_MODES

CSV_HEADER = ("kind", "tilt_deg", "speed_mps", "duty", "baseline_flag", "n_trials", "n_success",
              "rate", "ci_low", "ci_high", "top_failure_mode")
FORMATS = ("csv", "table", "svg")
PALETTE = ("#9ecae1", "#4292c6", "#2171b5", "#08306b", "#bdbdbd", "#fd8d3c", "#31a354")


@dataclass(frozen=True)
class ReportSpec:
    formats: tuple[str, ...] = FORMATS
    output_dir: Path = Path("results")
    x_label: str = "platform tilt (deg)"
    y_label: str = "success rate (%)"
    colors: tuple[str, ...] = PALETTE
    width: int = 640
    height: int = 400

    def __post_init__(self):
        if not self.formats:
            raise ValueError("at least one report format is required")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ValueError(f"unknown report formats {bad}; choose from {FORMATS}")


def _num(v: float) -> str:
    """Shortest fixed rendering of a key value (12, -0.25, 0.45)."""
    text = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def _prob(v: float) -> str:
    return f"{v:.6f}"


def _pct(v: float) -> str:
    return f"{100.0 * v:.1f}"


# -- CSV ---------------------------------------------------------------------------

def csv_text(results: SweepResults) -> str:
    if not results.cells:
        raise ValueError("no cells to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    by_key = results.as_map()
    for key in canonical_order(by_key):
        c = by_key[key]
        writer.writerow([key.kind, _num(key.tilt_deg), _num(key.speed_mps),
                         "" if key.baseline else _num(key.duty),
                         "true" if key.baseline else "false", c.n_trials, c.n_success,
                         _prob(c.rate), _prob(c.ci_low), _prob(c.ci_high), c.top_failure_mode])
    return buf.getvalue()


def write_csv(results: SweepResults, path) -> Path:
    """Write one row per cell in canonical order; empty results raise before any file is made."""
    text = csv_text(results)
    path = Path(path)
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(text)
    return path


def read_csv(path) -> SweepResults:
    """Load a CSV written by :func:`write_csv`.

    Only the top failure mode survives the round trip, so every failure is
    attributed to it in the rebuilt histogram.
    """
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        cells = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            rec = dict(zip(CSV_HEADER, row))
            baseline = rec["baseline_flag"] == "true"
            key = CellKey(rec["kind"], float(rec["tilt_deg"]), float(rec["speed_mps"]),
                          None if baseline else float(rec["duty"]))
            n, k = int(rec["n_trials"]), int(rec["n_success"])
            top = rec["top_failure_mode"]
            if top not in FAILURE_MODES:
                raise ValueError(f"{path}:{lineno}: unknown failure mode {top!r}")
            counts = {"none": k}
            if n > k:
                counts[top] = counts.get(top, 0) + n - k
            cells.append(CellResult(key=key, n_trials=n, n_success=k, rate=float(rec["rate"]),
                                    ci_low=float(rec["ci_low"]), ci_high=float(rec["ci_high"]),
                                    failure_histogram=tuple((m, counts.get(m, 0))
                                                            for m in FAILURE_MODES)))
    n_trials = max((c.n_trials for c in cells), default=0)
    return SweepResults(tuple(cells), 0, n_trials)


# -- slices ------------------------------------------------------------------------------

@dataclass(frozen=True)
class Slice:
    kind: str
    speed_mps: float
    tilts: tuple[float, ...]
    series: tuple[Optional[float], ...]
    cells: dict = field(compare=False)

    def get(self, tilt: float, duty: Optional[float]) -> Optional[CellResult]:
        return self.cells.get((tilt, duty))


def slices(results: SweepResults) -> list[tuple[str, float]]:
    """The ``(kind, speed)`` panels present, in canonical order."""
    seen = []
    for key in canonical_order(results.as_map()):
        pair = (key.kind, key.speed_mps)
        if pair not in seen:
            seen.append(pair)
    return seen


def _slice(results: SweepResults, kind: str, speed_mps: float) -> Slice:
    cells = {(c.key.tilt_deg, c.key.duty): c for c in results.cells
             if c.key.kind == kind and c.key.speed_mps == float(speed_mps)}
    if not cells:
        raise KeyError(f"no cells for slice kind={kind} speed={_num(speed_mps)}")
    tilts = tuple(sorted({t for t, _ in cells}))
    duties = sorted({d for _, d in cells if d is not None})
    series = tuple(duties) + ((None,) if any(d is None for _, d in cells) else ())
    return Slice(kind, float(speed_mps), tilts, series, cells)


def series_label(duty: Optional[float]) -> str:
    return "baseline" if duty is None else f"D={_num(duty)}"


def render_matrix(results: SweepResults, kind: str, speed_mps: float) -> str:
    """Fixed-width table: one row per series, one column per tilt, rates in percent."""
    s = _slice(results, kind, speed_mps)
    head = [f"{kind} {_num(s.speed_mps)} m/s"] + [f"{_num(t)} deg" for t in s.tilts]
    rows = [head]
    for duty in s.series:
        row = [series_label(duty)]
        for t in s.tilts:
            c = s.get(t, duty)
            row.append("-" if c is None else _pct(c.rate))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = []
    for r in rows:
        cells = [r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


# -- SVG -------------------------------------------------------------------------------

def _f(v: float) -> str:
    return f"{v:.2f}"


def render_svg(results: SweepResults, kind: str, speed_mps: float,
               spec: Optional[ReportSpec] = None) -> str:
    """Grouped bar chart with Wilson whiskers, one group per tilt."""
    spec = spec or ReportSpec()
    s = _slice(results, kind, speed_mps)
    w, h = spec.width, spec.height
    left, right, top, bottom = 60.0, 130.0, 40.0, 50.0
    pw, ph = w - left - right, h - top - bottom
    y0 = top + ph

    def ypos(rate):
        return y0 - rate * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}"'
           f' viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
           f'<text x="{_f(left + pw / 2)}" y="22" text-anchor="middle" font-size="14">'
           f'{escape(kind)} success, speed {_num(s.speed_mps)} m/s</text>']
    for tick in range(0, 101, 20):
        y = ypos(tick / 100.0)
        out.append(f'<line x1="{_f(left)}" y1="{_f(y)}" x2="{_f(left + pw)}" y2="{_f(y)}"'
                   ' stroke="#e0e0e0" stroke-width="1"/>')
        out.append(f'<text x="{_f(left - 6)}" y="{_f(y + 4)}" text-anchor="end">{tick}</text>')
    out.append(f'<line x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(y0)}" stroke="#000000"/>')
    out.append(f'<line x1="{_f(left)}" y1="{_f(y0)}" x2="{_f(left + pw)}" y2="{_f(y0)}" stroke="#000000"/>')
    out.append(f'<text x="16" y="{_f(top + ph / 2)}" text-anchor="middle"'
               f' transform="rotate(-90 16 {_f(top + ph / 2)})">{escape(spec.y_label)}</text>')
    out.append(f'<text x="{_f(left + pw / 2)}" y="{_f(h - 12)}" text-anchor="middle">'
               f'{escape(spec.x_label)}</text>')

    group_w = pw / len(s.tilts)
    bar_w = group_w * 0.8 / len(s.series)
    for gi, tilt in enumerate(s.tilts):
        gx = left + gi * group_w + group_w * 0.1
        out.append(f'<text x="{_f(left + (gi + 0.5) * group_w)}" y="{_f(y0 + 18)}"'
                   f' text-anchor="middle">{_num(tilt)}</text>')
        for si, duty in enumerate(s.series):
            c = s.get(tilt, duty)
            if c is None:
                continue
            x = gx + si * bar_w
            color = spec.colors[si % len(spec.colors)]
            y = ypos(c.rate)
            out.append(f'<rect class="bar" x="{_f(x)}" y="{_f(y)}" width="{_f(bar_w * 0.9)}"'
                       f' height="{_f(y0 - y)}" fill="{color}" stroke="#333333" stroke-width="0.5">'
                       f'<title>{escape(series_label(duty))} at {_num(tilt)} deg: {_pct(c.rate)}%'
                       f' [{_pct(c.ci_low)}, {_pct(c.ci_high)}]</title></rect>')
            cx = x + bar_w * 0.45
            lo, hi = ypos(c.ci_low), ypos(c.ci_high)
            cap = bar_w * 0.2
            out.append(f'<path class="whisker" d="M{_f(cx)} {_f(lo)}V{_f(hi)}'
                       f'M{_f(cx - cap)} {_f(lo)}H{_f(cx + cap)}M{_f(cx - cap)} {_f(hi)}H{_f(cx + cap)}"'
                       ' stroke="#000000" stroke-width="1" fill="none"/>')
    lx = left + pw + 16
    for si, duty in enumerate(s.series):
        ly = top + 10 + si * 20
        color = spec.colors[si % len(spec.colors)]
        out.append(f'<rect x="{_f(lx)}" y="{_f(ly - 10)}" width="12" height="12" fill="{color}"'
                   ' stroke="#333333" stroke-width="0.5"/>')
        out.append(f'<text x="{_f(lx + 18)}" y="{_f(ly)}">{escape(series_label(duty))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def panel_stem(kind: str, speed_mps: float) -> str:
    return f"{kind}_{_num(abs(speed_mps)).replace('.', 'p')}"


def write_report(results: SweepResults, spec: ReportSpec) -> list[Path]:
    """Write the requested formats into ``spec.output_dir``; returns the paths in write order."""
    if not results.cells:
        raise ValueError("no cells to report")
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in spec.formats:
        written.append(write_csv(results, out_dir / "results.csv"))
    for kind, speed in slices(results):
        stem = panel_stem(kind, speed)
        if "table" in spec.formats:
            p = out_dir / f"{stem}.txt"
            p.write_text(render_matrix(results, kind, speed), encoding="ascii")
            written.append(p)
        if "svg" in spec.formats:
            p = out_dir / f"{stem}.svg"
            p.write_text(render_svg(results, kind, speed, spec), encoding="ascii")
            written.append(p)
    return written


def single_cell(key: CellKey, n_trials: int, n_success: int, top_failure: str = "none") -> CellResult:
    """Build a cell from counts alone (handy for re-rendering and tests)."""
    low, high = wilson_interval(n_success, n_trials)
    counts = {"none": n_success}
    if n_trials > n_success:
        counts[top_failure] = n_trials - n_success
    return CellResult(key, n_trials, n_success, n_success / n_trials, low, high,
                      tuple((m, counts.get(m, 0)) for m in FAILURE_MODES))

