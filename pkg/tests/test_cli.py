from __future__ import annotations

import json

import pytest

from interlacements.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_FAIL, EXIT_PASS, main


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_experiments(capsys):
    assert main(["--list-experiments"]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "mean-occupation" in out and "det2-mgf" in out


def test_missing_config_path():
    assert main([]) == EXIT_CONFIG


def test_unknown_experiment(tmp_path, capsys):
    assert main([_write(tmp_path, 'experiment = "nope"\n')]) == EXIT_CONFIG
    assert "unknown experiment" in capsys.readouterr().err


def test_unknown_parameter(tmp_path):
    cfg = 'experiment = "green-sanity"\n[params]\nbogus = 1\n'
    assert main([_write(tmp_path, cfg)]) == EXIT_CONFIG


def test_wrong_type_and_bad_toml(tmp_path):
    assert main([_write(tmp_path, 'experiment = "green-sanity"\n[params]\nfar_point = "x"\n')]) == EXIT_CONFIG
    assert main([_write(tmp_path, "experiment = \n")]) == EXIT_CONFIG
    assert main([str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main([_write(tmp_path, 'experiment = "green-sanity"\nseed = -1\n')]) == EXIT_CONFIG


def test_bad_workers(tmp_path):
    assert main([_write(tmp_path, 'experiment = "green-sanity"\n'), "--workers", "0"]) == EXIT_CONFIG


def test_pass_writes_outputs(tmp_path):
    out = tmp_path / "out"
    cfg = 'experiment = "green-sanity"\nseed = 3\n[params]\ntable_range = 32\nfar_point = 30\n'
    assert main([_write(tmp_path, cfg), "--out", str(out), "--seed", "5"]) == EXIT_PASS
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["seed"] == 5 and rep["config"]["params"]["far_point"] == 30
    assert (out / "report.csv").exists() and (out / "plotdata" / "green_axis.csv").exists()


def test_gating_failure_exit_code(tmp_path):
    cfg = 'experiment = "green-sanity"\n[params]\ntable_range = 32\nfar_point = 30\nfar_tolerance = 1e-9\n'
    assert main([_write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_FAIL


def test_domain_error_exit_code(tmp_path, capsys):
    cfg = ('experiment = "lattice-laplace"\n[params]\ntable_range = 32\nn = 200\n'
           'z_fractions = [0.5, 2.5]\n')
    assert main([_write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_DOMAIN
    assert "domain" in capsys.readouterr().err


def test_continuum_domain_error(tmp_path):
    cfg = ('experiment = "brownian-laplace"\n[params]\nn = 100\nz_grid = [400.0]\n')
    assert main([_write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_DOMAIN
