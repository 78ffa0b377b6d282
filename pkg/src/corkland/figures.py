"""Matplotlib renderings of the result panels as PNG files.

These mirror the hand-built SVG charts (same series order, colours and
whiskers) for quick viewing; the SVG output stays the byte-stable artifact.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import ReportSpec, _slice, panel_stem, series_label, slices  # noqa: E402
from .sweep import SweepResults  # noqa: E402


def plot_panel(ax, results: SweepResults, kind: str, speed_mps: float,
               spec: ReportSpec | None = None) -> None:
    spec = spec or ReportSpec()
    s = _slice(results, kind, speed_mps)
    n = len(s.series)
    width = 0.8 / n
    x = np.arange(len(s.tilts))
    for si, duty in enumerate(s.series):
        xs, rates, err_lo, err_hi = [], [], [], []
        for ti, tilt in enumerate(s.tilts):
            c = s.get(tilt, duty)
            if c is None:
                continue
            xs.append(x[ti] - 0.4 + (si + 0.5) * width)
            rates.append(100 * c.rate)
            err_lo.append(100 * (c.rate - c.ci_low))
            err_hi.append(100 * (c.ci_high - c.rate))
        ax.bar(xs, rates, width * 0.9, color=spec.colors[si % len(spec.colors)],
               edgecolor="#333333", linewidth=0.5, label=series_label(duty),
               yerr=[err_lo, err_hi], capsize=2, error_kw={"linewidth": 0.8})
    ax.set_xticks(x)
    ax.set_xticklabels([f"{t:g}" for t in s.tilts])
    ax.set_ylim(0, 105)
    ax.set_xlabel(spec.x_label)
    ax.set_ylabel(spec.y_label)
    ax.set_title(f"{kind}, {speed_mps:g} m/s")
    ax.legend(fontsize=8, frameon=False, loc="upper right")


def write_figures(results: SweepResults, out_dir, spec: ReportSpec | None = None,
                  dpi: int = 120) -> list[Path]:
    """One PNG per ``(kind, speed)`` panel; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind, speed in slices(results):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        try:
            plot_panel(ax, results, kind, speed, spec)
            fig.tight_layout()
            path = out_dir / f"{panel_stem(kind, speed)}.png"
            fig.savefig(path, dpi=dpi, metadata={"Software": None})
        finally:
            plt.close(fig)
        written.append(path)
    return written
