"""``thermogauge simulate|verify|sweep --config <path>``.

Exit codes: 0 success, 1 a verify property failed, 2 configuration error,
3 numerical failure (the message names the grid index when one is known).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import suites as S
from .config import SCHEMA_VERSION, SUITES, ConfigError, RunConfig, VerifyConfig, apply_sweep_value
from .dynamics import (
    HamiltonianFamilySpec,
    TrajectoryGrid,
    build_family,
    initial_state,
    random_drive_spec,
    trajectory_from_hamiltonians,
    uniform_grid,
)
from .functionals import CSV_COLUMNS, first_law_report
from .operators import ThermoGaugeError
from .thermo_group import make_rng

log = logging.getLogger("thermogauge")

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

SWEEP_COLUMNS = ("value", "W_inv", "Q_inv", "delta_U", "S_GT_initial", "S_GT_final", "first_law_residual")


class NumericalFailure(Exception):
    def __init__(self, message: str, index: int | None = None):
        where = f" at grid index {index}" if index is not None and f"grid index {index}" not in message else ""
        super().__init__(message + where)
        self.index = index


# -- io --------------------------------------------------------------------


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def _check_writable(path: str, field: str) -> None:
    parent = Path(path).parent
    if not parent.is_dir():
        raise ConfigError(f"directory {str(parent)!r} does not exist", field=field)
    if not os.access(parent, os.W_OK):
        raise ConfigError(f"directory {str(parent)!r} is not writable", field=field)


def load_config(path, mode: str, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", field=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc.msg}, column {exc.colno})", line=exc.lineno) from None
    if isinstance(data, dict):
        declared = data.get("mode", mode)
        if declared != mode:
            raise ConfigError(f"config declares mode {declared!r} but the {mode!r} subcommand was run", field="mode")
        data = {**data, "mode": mode}
    cfg = RunConfig.from_dict(data)
    return cfg if seed is None else cfg.with_seed(seed)


# -- pipeline ----------------------------------------------------------------


def build_trajectory(cfg: RunConfig, spec: HamiltonianFamilySpec) -> TrajectoryGrid:
    """Sample the family and evolve; config-level problems raise ConfigError."""
    try:
        times = uniform_grid(cfg.grid.N, cfg.grid.tau)
        H = build_family(spec, times)
        rho0 = initial_state(cfg.initial_state, H[0], cfg.tolerances.cluster_tol)
    except KeyError as exc:
        raise ConfigError("required parameter is missing", field=f"hamiltonian.params.{exc.args[0]}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field="hamiltonian") from None
    try:
        return trajectory_from_hamiltonians(times, H, rho0, cfg.tolerances.cluster_tol)
    except ThermoGaugeError as exc:
        raise NumericalFailure(str(exc), getattr(exc, "index", None)) from exc


def thermo_record(traj: TrajectoryGrid, residual_tol: float):
    try:
        return first_law_report(traj, residual_tol)
    except ThermoGaugeError as exc:
        raise NumericalFailure(str(exc), getattr(exc, "index", None)) from exc


def _report(cfg: RunConfig, timestamp: bool) -> dict:
    out = {"schema": SCHEMA_VERSION, "version": __version__, "seed": cfg.seed, "config": cfg.to_dict()}
    if timestamp:
        out["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return out


def run_simulate(cfg: RunConfig, timestamp: bool = True) -> int:
    _check_writable(cfg.outputs.report_path, "outputs.report_path")
    _check_writable(cfg.outputs.csv_path, "outputs.csv_path")
    traj = build_trajectory(cfg, cfg.hamiltonian)
    rec = thermo_record(traj, cfg.tolerances.residual_tol)
    report = _report(cfg, timestamp)
    report["thermo_record"] = rec.to_dict()
    report["partition"] = rec.partition.to_dict()
    atomic_write(cfg.outputs.report_path, dump_json(report))
    atomic_write(cfg.outputs.csv_path, csv_text(CSV_COLUMNS, rec.csv_rows()))
    log.info("W_inv=%.6g Q_inv=%.6g dU=%.6g residual=%.3e", rec.W_inv, rec.Q_inv, rec.delta_U, rec.first_law_residual)
    return EXIT_OK


TRAJECTORY_SUITES = ("first_law", "gauge_invariance", "frame_gauge", "work_oracle")


def verify_family(cfg: RunConfig) -> HamiltonianFamilySpec:
    if cfg.hamiltonian is not None:
        return cfg.hamiltonian
    v = cfg.verify or VerifyConfig()
    return random_drive_spec(make_rng(cfg.seed, S.STREAM["family"]), v.dimension, cfg.grid.tau)


def collect_suites(cfg: RunConfig) -> dict:
    """Run the selected suites; returns the report fragment (without config echo)."""
    v = cfg.verify or VerifyConfig()
    selected = [name for name in SUITES if name in v.suites]
    results: list[S.SuiteResult] = []
    out: dict = {}

    if any(name in TRAJECTORY_SUITES for name in selected):
        spec = verify_family(cfg)
        out["family"] = {"family": spec.family, "params": spec.params}
        traj = build_trajectory(cfg, spec)
        rec = first_law_report(traj, residual_tol=np.inf)
        out["thermo_record"] = rec.to_dict()
        out["partition"] = rec.partition.to_dict()
        try:
            if "first_law" in selected:
                results.append(S.first_law_suite(traj, cfg.tolerances.residual_tol))
            if "gauge_invariance" in selected:
                results.append(S.gauge_invariance_suite(traj, cfg.seed, v.gauge_paths))
            if "frame_gauge" in selected:
                results.append(S.frame_gauge_suite(traj, cfg.seed))
            if "work_oracle" in selected:
                results.append(S.work_oracle_suite(traj))
        except ThermoGaugeError as exc:
            raise NumericalFailure(str(exc), getattr(exc, "index", None)) from exc

    if "twirl_oracle" in selected:
        results.append(S.twirl_oracle_suite(cfg.seed, v.twirl_samples))
    if "twirl_properties" in selected:
        results.append(S.twirl_properties_suite(cfg.seed))
    if "covariant_identity" in selected:
        results.extend(S.covariant_identity_suites())
    if "geometry" in selected:
        geo_results, checks = S.geometry_suites(cfg.seed, v.geometry_pairs)
        results.extend(geo_results)
        out["geometry_checks"] = checks
    out["suites"] = [r.to_dict() for r in results]
    out["passed"] = all(r.passed for r in results)
    return out


def run_verify(cfg: RunConfig, timestamp: bool = True) -> int:
    _check_writable(cfg.outputs.report_path, "outputs.report_path")
    report = _report(cfg, timestamp)
    report.update(collect_suites(cfg))
    atomic_write(cfg.outputs.report_path, dump_json(report))
    for r in report["suites"]:
        log.info("%s %s: %.3e (tol %.1e)", "PASS" if r["passed"] else "FAIL", r["name"], r["max_residual"], r["tolerance"])
    return EXIT_OK if report["passed"] else EXIT_PROPERTY


def sweep_rows(cfg: RunConfig):
    for k, value in enumerate(cfg.sweep.values):
        point = apply_sweep_value(cfg, cfg.sweep.parameter, value)
        try:
            rec = thermo_record(build_trajectory(point, point.hamiltonian), cfg.tolerances.residual_tol)
        except NumericalFailure as exc:
            raise NumericalFailure(f"sweep value #{k} ({value!r}): {exc}", exc.index) from exc
        yield (value, rec.W_inv, rec.Q_inv, rec.delta_U, rec.S_initial, rec.S_final, rec.first_law_residual)


def run_sweep(cfg: RunConfig, timestamp: bool = True) -> int:
    _check_writable(cfg.outputs.csv_path, "outputs.csv_path")
    rows = list(sweep_rows(cfg))
    atomic_write(cfg.outputs.csv_path, csv_text(SWEEP_COLUMNS, rows))
    return EXIT_OK


RUNNERS = {"simulate": run_simulate, "verify": run_verify, "sweep": run_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermogauge", description="Gauge-invariant work and heat for driven quantum systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "evolve one configuration and write the report and CSV series"),
        ("verify", "run the property suites and write a pass/fail report"),
        ("sweep", "scan one parameter and write one CSV row per value"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the timestamp so reports are reproducible byte for byte")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.command, args.seed)
        return RUNNERS[args.command](cfg, timestamp=not args.no_timestamp)
    except ConfigError as exc:
        print(f"thermogauge: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"thermogauge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
