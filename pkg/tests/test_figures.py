from corkland.figures import write_figures
from corkland.report import single_cell
from corkland.sweep import CellKey, SweepResults


def test_png_panels_written(tmp_path):
    cells = [single_cell(CellKey("landing", t, -0.25, d), 5, 5 if t < 30 else 2, "slide_off")
             for t in (12.0, 43.0) for d in (0.45, None)]
    cells.append(single_cell(CellKey("takeoff", 12.0, 0.25, 0.15), 5, 1, "stuck_engaged"))
    paths = write_figures(SweepResults(tuple(cells)), tmp_path)
    assert sorted(p.name for p in paths) == ["landing_0p25.png", "takeoff_0p25.png"]
    for p in paths:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
