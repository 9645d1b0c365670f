from __future__ import annotations

import csv
import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlacements.reports import (CSV_COLUMNS, ExperimentReport, PlotTable, build_id, canonical_json,
                                    config_hash, emit_plot_data, verdict_from_dict)
from interlacements.stats import check


def _report():
    v = [check("demo", "a", 1.0, 1.05, 0.02, 3.0), check("demo", "b", 2.0, 0.0, 0.1, 3.0, gating=False)]
    plots = {"mgf_curve": PlotTable(["z", "empirical"], [[-1.0, 0.5], [0.0, 1.0], [1.0, 2.0]])}
    return ExperimentReport("demo", {"experiment": "demo", "seed": 1, "params": {"n": 10}}, v,
                            {"x": float("nan")}, {"y": 1.0}, {"tol": 1e-9}, plots, "v0")


def test_report_pass_logic():
    r = _report()
    assert r.passed and r.failures() == []


def test_json_is_deterministic_and_clean(tmp_path):
    r = _report()
    a, b = r.to_json(), _report().to_json()
    assert a == b
    d = json.loads(a)
    assert d["estimates"]["x"] == "nan"
    assert d["config_hash"] == config_hash(r.config) and d["build_id"] == "v0"
    assert d["oracle_tolerances"] == {"tol": 1e-9}


def test_csv_columns_and_rows():
    rows = list(csv.reader(io.StringIO(_report().to_csv())))
    assert rows[0] == CSV_COLUMNS
    assert rows[1][CSV_COLUMNS.index("verdict")] == "pass"
    assert rows[2][CSV_COLUMNS.index("gating")] == "no"


def test_write_and_plot_data(tmp_path):
    out = _report().write(tmp_path / "run")
    assert (out / "report.json").exists() and (out / "report.csv").exists()
    text = (out / "plotdata" / "mgf_curve.csv").read_text().splitlines()
    assert text[0] == "z,empirical" and "0.0,1.0" in text
    assert emit_plot_data(_report(), tmp_path / "p")[0].name == "mgf_curve.csv"


def test_verdict_round_trip():
    v = _report().verdicts[1]
    assert verdict_from_dict(v.to_dict()) == v


def test_build_id_nonempty():
    assert build_id()


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=5), st.one_of(st.integers(), st.floats(allow_nan=False),
                                                                  st.text(max_size=5)), max_size=6))
def test_config_hash_ignores_key_order(cfg):
    rev = dict(reversed(list(cfg.items())))
    assert config_hash(cfg) == config_hash(rev)
    assert canonical_json(cfg) == canonical_json(rev)
