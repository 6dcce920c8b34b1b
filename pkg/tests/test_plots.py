import xml.etree.ElementTree as ET

import pytest

from shiftgauge.errors import InputError
from shiftgauge.plots import emit_plot, regression_line, scatter_svg

SVG = "{http://www.w3.org/2000/svg}"


def parse(text):
    return ET.fromstring(text)


def test_all_kinds_write_valid_svg(tmp_path):
    cases = {
        "risk_curve": {"x": [1, 2, 3], "curves": {"proxy": [0.3, 0.2, 0.25], "true": [0.2, 0.1, 0.15]}},
        "scatter_pred_vs_true": {"predicted": [0.1, 0.2, 0.4], "true": [0.1, 0.25, 0.3]},
        "division_ucurve": {1: [0.1, 0.2], 2: [0.05, 0.07], 3: [0.3, 0.2]},
    }
    for kind, series in cases.items():
        path = emit_plot(series, kind, tmp_path / f"{kind}.svg", title="t & <x>")
        root = parse(path.read_text())
        assert root.tag == f"{SVG}svg"


def test_perfect_scatter_points_sit_on_identity_line():
    vals = [0.1, 0.2, 0.35, 0.5]
    root = parse(scatter_svg(vals, vals))
    line = root.find(f".//{SVG}line[@class='identity']")
    assert line.get("stroke-dasharray")
    x1, y1, x2, y2 = (float(line.get(k)) for k in ("x1", "y1", "x2", "y2"))
    for c in root.iter(f"{SVG}circle"):
        cx, cy = float(c.get("cx")), float(c.get("cy"))
        # collinear with the identity segment
        assert abs((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) < 1e-6 * (x2 - x1) ** 2


def test_regression_slope_for_offset_predictions():
    true = [0.1, 0.2, 0.3, 0.6]
    pred = [t + 0.1 for t in true]
    slope, icpt = regression_line(true, pred)
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert icpt == pytest.approx(0.1, abs=1e-12)
    line = parse(scatter_svg(pred, true)).find(f".//{SVG}line[@class='regression']")
    assert float(line.get("data-slope")) == pytest.approx(1.0, abs=1e-12)


def test_bad_series_rejected(tmp_path):
    with pytest.raises(InputError):
        emit_plot({}, "risk_curve", tmp_path / "a.svg")
    with pytest.raises(InputError):
        emit_plot({"x": [1]}, "histogram", tmp_path / "a.svg")
    with pytest.raises(InputError):
        scatter_svg([0.1, float("nan")], [0.1, 0.2])
    with pytest.raises(InputError):
        scatter_svg([0.1], [0.1, 0.2])
