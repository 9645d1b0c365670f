"""Command-line runner: one TOML config file per run.

Usage::

    interlacements CONFIG.toml [--seed S] [--workers W] [--out DIR]
    interlacements --list-experiments

Config layout::

    experiment = "mean-occupation"
    seed = 7                    # optional, default 0
    workers = 4                 # optional, never affects results
    output = "runs/mean"        # optional, default runs/<experiment>

    [params]                    # optional overrides of the experiment defaults
    n = 10000
    levels = [0.5, 1.0]

Exit codes: 0 all gating verdicts pass, 1 a gating verdict fails,
2 configuration error, 3 oracle-domain error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import tomli

from .experiments import EXPERIMENTS, ConfigError, resolve_config, run_experiment
from .potential import DomainError
from .stats import MGFDomainError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3

log = logging.getLogger("interlacements")


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interlacements",
                                description="Run one random-interlacements experiment from a TOML config.")
    p.add_argument("config", nargs="?", help="path to the TOML config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output directory (report.json, report.csv, plotdata/)")
    p.add_argument("--list-experiments", action="store_true", help="list experiment ids and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_experiments:
        for name, (_, desc, _) in EXPERIMENTS.items():
            print(f"{name:28s} {desc}")
        return EXIT_PASS
    if not args.config:
        parser.print_usage(sys.stderr)
        print("error: a config path is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        workers = args.workers if args.workers is not None else cfg.get("workers", 1)
        if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer")
        resolved = resolve_config(cfg)
        out = Path(args.out or cfg.get("output") or Path("runs") / resolved["experiment"])
        report = run_experiment(cfg, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, MGFDomainError) as exc:
        print(f"oracle domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    report.write(out)
    n_fail = len(report.failures())
    n_gate = sum(v.gating for v in report.verdicts)
    print(f"{report.experiment}: {n_gate - n_fail}/{n_gate} gating verdicts pass -> {out}")
    for v in report.failures():
        print(f"  FAIL {v.name}: |{v.statistic:.6g} - {v.oracle:.6g}| = {v.deviation:.3g} > {v.tolerance:.3g}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
