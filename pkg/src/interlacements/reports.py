"""Experiment reports: deterministic JSON, CSV and per-figure plot data.

The report depends only on the resolved configuration (which excludes the
worker count) and on the build id, so repeated runs are byte-identical.

CSV columns (one row per verdict):

experiment, config_hash, check, statistic, oracle, se, k, allowance,
tolerance, deviation, verdict, gating, note
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stats import Verdict

CSV_COLUMNS = ["experiment", "config_hash", "check", "statistic", "oracle", "se", "k", "allowance",
               "tolerance", "deviation", "verdict", "gating", "note"]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def build_id() -> str:
    """git-describe style id of the source tree, or the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    from . import __version__
    return f"v{__version__}"


@dataclass
class PlotTable:
    columns: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    verdicts: list
    estimates: dict = field(default_factory=dict)
    oracles: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    plotdata: dict = field(default_factory=dict)
    build: str = ""

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts if v.gating)

    def failures(self) -> list:
        return [v for v in self.verdicts if v.gating and not v.passed]

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "build_id": self.build,
            "config_hash": self.config_hash,
            "config": self.config,
            "passed": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "estimates": self.estimates,
            "oracles": self.oracles,
            "oracle_tolerances": self.tolerances,
            "plotdata": sorted(self.plotdata),
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        h = self.config_hash
        for v in self.verdicts:
            d = v.to_dict()
            w.writerow([self.experiment, h, v.name, _fmt(d["statistic"]), _fmt(d["oracle"]), _fmt(d["se"]),
                        _fmt(d["k"]), _fmt(d["allowance"]), _fmt(d["tolerance"]), _fmt(d["deviation"]),
                        "pass" if v.passed else "fail", "yes" if v.gating else "no", v.note])
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        (out / "plotdata").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "report.csv").write_text(self.to_csv())
        emit_plot_data(self, out / "plotdata")
        return out


def emit_plot_data(report: ExperimentReport, directory) -> list:
    """Write one CSV per plot table; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(report.plotdata):
        p = directory / f"{name}.csv"
        p.write_text(report.plotdata[name].to_csv())
        paths.append(p)
    return paths


def verdict_from_dict(d: dict) -> Verdict:
    return Verdict(d["experiment"], d["name"], d["statistic"], d["oracle"], d["se"], d["k"],
                   d["allowance"], d["gating"], d.get("note", ""))
