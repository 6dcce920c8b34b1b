import json

import numpy as np
import pytest

from shiftgauge.errors import FormatError, InputError
from shiftgauge.reports import (RISK_COLUMNS, RiskReport, csv_text, fmt, read_methods_report,
                                read_risk_reports, write_csv, write_manifest, write_risk_reports)


def test_abs_err_follows_true_risk():
    r = RiskReport("t", "proxy", 0.3, 0, true_risk=0.25)
    assert r.abs_err == pytest.approx(0.05)
    assert RiskReport("t", "proxy", 0.3, 0).abs_err is None
    with pytest.raises(InputError):
        RiskReport("t", "proxy", 0.3, 0, abs_err=0.1)
    with pytest.raises(InputError):
        RiskReport("t", "proxy", 0.3, 0, true_risk=0.2, abs_err=0.5)


def test_fmt():
    assert fmt(None) == ""
    assert fmt(True) == "1"
    assert fmt(np.float64(0.1)) == "0.1"
    assert fmt(np.int64(3)) == "3"
    assert float(fmt(1 / 3)) == 1 / 3


def test_risk_report_round_trip(tmp_path):
    reports = [RiskReport("moons", "proxy", 0.125, 1, 0.1), RiskReport("moons", "ben_david", 0.4, 1)]
    p = write_risk_reports(tmp_path / "r.csv", reports)
    assert p.read_text().splitlines()[0] == ",".join(RISK_COLUMNS)
    back = read_risk_reports(p)
    assert [(r.method, r.estimated_risk, r.true_risk, r.abs_err) for r in back] == \
        [(r.method, r.estimated_risk, r.true_risk, r.abs_err) for r in reports]


def test_wall_time_is_not_written(tmp_path):
    a = RiskReport("t", "proxy", 0.1, 0, wall_time_s=1.0)
    b = RiskReport("t", "proxy", 0.1, 0, wall_time_s=99.0)
    assert csv_text(RISK_COLUMNS, [a.row()]) == csv_text(RISK_COLUMNS, [b.row()])


def test_row_width_checked():
    with pytest.raises(InputError):
        csv_text(["a", "b"], [[1]])


def test_methods_report_reader(tmp_path):
    p = write_csv(tmp_path / "m.csv", ["task", "method", "predicted_risk", "true_risk", "abs_err"],
                  [["x", "proxy", 0.2, 0.1, 0.1]])
    assert read_methods_report(p) == [("x", "proxy", 0.2, 0.1)]
    bad = tmp_path / "bad.csv"
    bad.write_text("method,predicted_risk\nproxy,0.1\n")
    with pytest.raises(FormatError, match="true_risk"):
        read_methods_report(bad)
    junk = tmp_path / "junk.csv"
    junk.write_text("method,predicted_risk,true_risk\nproxy,abc,0.1\n")
    with pytest.raises(FormatError):
        read_methods_report(junk)


def test_manifest_contents(tmp_path):
    out = write_csv(tmp_path / "a.csv", ["x"], [[1]])
    m = write_manifest(tmp_path / "m.json", "train", "[model]\n", [0, 1], [out], {"total": 1.5}, ["train"])
    doc = json.loads(m.read_text())
    assert doc["seeds"] == [0, 1]
    assert doc["config"] == "[model]\n"
    assert len(doc["outputs"]["a.csv"]) == 64
    assert doc["wall_time_s"] == {"total": 1.5}
    assert "numpy" in doc["versions"]
