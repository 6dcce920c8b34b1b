"""CSV reports and run manifests.

Every CSV is written with fixed column order, ``repr`` floats and ``\\n`` line
ends so that identical runs give identical bytes. Wall-clock times go to the
manifest, never into a CSV.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import sys
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import FormatError, InputError

RISK_COLUMNS = ["task", "method", "estimated_risk", "true_risk", "abs_err", "seed"]
METHODS_COLUMNS = ["task", "method", "predicted_risk", "true_risk", "abs_err"]
SWEEP_COLUMNS = ["division_index", "second_level_division", "seed",
                 "worst_in_class_proxy_risk", "true_target_risk"]
EARLYSTOP_COLUMNS = ["epoch", "src_risk", "proxy_risk", "true_target_risk"]


@dataclass
class RiskReport:
    task: str
    method: str
    estimated_risk: float
    seed: int
    true_risk: float | None = None
    abs_err: float | None = None
    wall_time_s: float = 0.0

    def __post_init__(self):
        if self.true_risk is not None and self.abs_err is None:
            self.abs_err = abs(self.estimated_risk - self.true_risk)
        if (self.abs_err is None) != (self.true_risk is None):
            raise InputError("abs_err must be given exactly when true_risk is")
        if self.true_risk is not None and abs(self.abs_err - abs(self.estimated_risk - self.true_risk)) > 1e-12:
            raise InputError(f"abs_err {self.abs_err} does not match |{self.estimated_risk} - {self.true_risk}|")

    def with_truth(self, true_risk: float) -> "RiskReport":
        return RiskReport(self.task, self.method, self.estimated_risk, self.seed, true_risk,
                          None, self.wall_time_s)

    def row(self) -> list:
        return [self.task, self.method, self.estimated_risk, self.true_risk, self.abs_err, self.seed]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        r = list(r)
        if len(r) != len(columns):
            raise InputError(f"row has {len(r)} fields, header has {len(columns)}")
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(csv_text(columns, rows))
    return path


def read_csv(path) -> list[dict[str, str]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None


def parse_optional(value: str | None, path="", column="") -> float | None:
    if value is None or value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise FormatError(f"{path}: column {column} holds non-numeric {value!r}") from None


def write_risk_reports(path, reports: Sequence[RiskReport]) -> Path:
    return write_csv(path, RISK_COLUMNS, [r.row() for r in reports])


def read_risk_reports(path) -> list[RiskReport]:
    out = []
    for rec in read_csv(path):
        missing = [c for c in RISK_COLUMNS if c not in rec]
        if missing:
            raise FormatError(f"{path}: missing column {missing[0]}")
        out.append(RiskReport(rec["task"], rec["method"],
                              parse_optional(rec["estimated_risk"], path, "estimated_risk"),
                              int(rec["seed"]),
                              parse_optional(rec["true_risk"], path, "true_risk"),
                              parse_optional(rec["abs_err"], path, "abs_err")))
    return out


def methods_rows(reports: Sequence[RiskReport]) -> list[list]:
    return [[r.task, r.method, r.estimated_risk, r.true_risk, r.abs_err] for r in reports]


def read_methods_report(path) -> list[tuple[str, str, float, float | None]]:
    """(task, method, predicted_risk, true_risk) rows of a methods report."""
    out = []
    for rec in read_csv(path):
        for c in ("method", "predicted_risk", "true_risk"):
            if c not in rec:
                raise FormatError(f"{path}: missing column {c}")
        out.append((rec.get("task", ""), rec["method"],
                    parse_optional(rec["predicted_risk"], path, "predicted_risk"),
                    parse_optional(rec["true_risk"], path, "true_risk")))
    return out


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config_text: str, seeds: Sequence[int],
                   outputs: Sequence[Path], timings: dict[str, float], argv: Sequence[str]) -> Path:
    """Config snapshot, seeds, versions and output hashes for one run."""
    path = Path(path)
    doc = {
        "command": command,
        "argv": list(argv),
        "seeds": [int(s) for s in seeds],
        "config": config_text,
        "versions": {"shiftgauge": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "platform": sys.platform},
        "outputs": {Path(p).name: sha256_file(p) for p in sorted(outputs, key=lambda p: Path(p).name)},
        "wall_time_s": timings,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def as_rows(items: Sequence, columns: Sequence[str]) -> list[list]:
    """Pull ``columns`` out of dataclass instances in order."""
    rows = []
    for it in items:
        d = asdict(it) if is_dataclass(it) else dict(it)
        rows.append([d.get(c) for c in columns])
    return rows
