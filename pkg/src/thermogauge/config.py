"""Run configuration: strict JSON parsing with field-level diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .dynamics import FAMILIES, HamiltonianFamilySpec
from .spectral import DEFAULT_CLUSTER_TOL

SCHEMA_VERSION = 1
MODES = ("simulate", "verify", "sweep")
NAMED_STATES = ("ground", "maximally_mixed", "plus")
SUITES = (
    "first_law",
    "gauge_invariance",
    "frame_gauge",
    "work_oracle",
    "twirl_oracle",
    "twirl_properties",
    "covariant_identity",
    "geometry",
)

# Scalar family parameters that a sweep may target by bare name.
FAMILY_SCALARS = {
    "constant": (),
    "rotating_qubit": ("omega", "nu"),
    "amplitude_drive": (),
    "landau_zener": ("delta", "v", "t0"),
    "piecewise_quench": (),
    "custom_grid": (),
}
GRID_SWEEPS = {"tau": "grid.tau", "grid.tau": "grid.tau", "N": "grid.N", "grid.N": "grid.N", "seed": "seed"}

U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = f"{field}: " if field else ""
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class GridConfig:
    N: int = 2000
    tau: float = 10.0


@dataclass(frozen=True)
class Tolerances:
    cluster_tol: float = DEFAULT_CLUSTER_TOL
    residual_tol: float = 1e-8


@dataclass(frozen=True)
class Outputs:
    report_path: str = "report.json"
    csv_path: str = "series.csv"


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple[float, ...] = ()


@dataclass(frozen=True)
class VerifyConfig:
    """Knobs for ``verify``; ``dimension`` applies only when no Hamiltonian is given."""

    suites: tuple[str, ...] = SUITES
    dimension: int = 4
    gauge_paths: int = 20
    twirl_samples: int = 20000
    geometry_pairs: int = 20


@dataclass(frozen=True)
class RunConfig:
    hamiltonian: HamiltonianFamilySpec | None = None
    initial_state: Any = "ground"
    grid: GridConfig = field(default_factory=GridConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    outputs: Outputs = field(default_factory=Outputs)
    mode: str = "simulate"
    sweep: SweepConfig | None = None
    verify: VerifyConfig | None = None

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        return _parse(data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg}, column {exc.colno})", line=exc.lineno) from None
        return _parse(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", field=str(path)) from None
        return cls.from_json(text)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=_u64(seed, "seed"))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "hamiltonian": None
            if self.hamiltonian is None
            else {"family": self.hamiltonian.family, "params": _jsonable(self.hamiltonian.params)},
            "initial_state": _jsonable(self.initial_state),
            "grid": {"N": self.grid.N, "tau": self.grid.tau},
            "tolerances": {"cluster_tol": self.tolerances.cluster_tol, "residual_tol": self.tolerances.residual_tol},
            "seed": self.seed,
            "outputs": {"report_path": self.outputs.report_path, "csv_path": self.outputs.csv_path},
            "mode": self.mode,
        }
        if self.sweep is not None:
            out["sweep"] = {"parameter": self.sweep.parameter, "values": list(self.sweep.values)}
        if self.verify is not None:
            v = self.verify
            out["verify"] = {
                "suites": list(v.suites),
                "dimension": v.dimension,
                "gauge_paths": v.gauge_paths,
                "twirl_samples": v.twirl_samples,
                "geometry_pairs": v.geometry_pairs,
            }
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _copy_json(x):
    if isinstance(x, dict):
        return {k: _copy_json(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_copy_json(v) for v in x]
    return x


def _object(data, where: str, allowed: tuple[str, ...], required: tuple[str, ...] = ()) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", field=where or None)
    prefix = f"{where}." if where else ""
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field (allowed: {', '.join(allowed)})", field=prefix + unknown[0])
    for name in required:
        if name not in data:
            raise ConfigError("required field is missing", field=prefix + name)
    return data


def _number(x, where: str, positive: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"expected a number, got {x!r}", field=where)
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError(f"must be finite, got {x}", field=where)
    if positive and not x > 0:
        raise ConfigError(f"must be > 0, got {x}", field=where)
    return x


def _integer(x, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        if isinstance(x, float) and x.is_integer():
            return int(x)
        raise ConfigError(f"expected an integer, got {x!r}", field=where)
    return x


def _u64(x, where: str) -> int:
    x = _integer(x, where)
    if not 0 <= x <= U64_MAX:
        raise ConfigError("must be an unsigned 64-bit integer", field=where)
    return x


def _string(x, where: str) -> str:
    if not isinstance(x, str) or not x:
        raise ConfigError(f"expected a non-empty string, got {x!r}", field=where)
    return x


def _parse_hamiltonian(data) -> HamiltonianFamilySpec | None:
    if data is None:
        return None
    d = _object(data, "hamiltonian", ("family", "params"), ("family",))
    family = d["family"]
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r} (known: {', '.join(FAMILIES)})", field="hamiltonian.family")
    params = d.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("expected an object", field="hamiltonian.params")
    for name in FAMILY_SCALARS[family]:
        if name in params:
            _number(params[name], f"hamiltonian.params.{name}")
    return HamiltonianFamilySpec(family, _copy_json(params))


def _parse_initial_state(x):
    if isinstance(x, str):
        if x not in NAMED_STATES:
            raise ConfigError(f"unknown named state {x!r} (known: {', '.join(NAMED_STATES)})", field="initial_state")
        return x
    if isinstance(x, list) and x:
        return _copy_json(x)
    raise ConfigError("expected a named state or a matrix literal", field="initial_state")


def _resolve_sweep_parameter(name: str, ham: HamiltonianFamilySpec | None) -> None:
    if name in GRID_SWEEPS:
        return
    bare = name.removeprefix("hamiltonian.params.")
    if ham is not None and bare in FAMILY_SCALARS[ham.family]:
        return
    known = sorted(GRID_SWEEPS) + ([] if ham is None else list(FAMILY_SCALARS[ham.family]))
    raise ConfigError(f"unknown sweep parameter {name!r} (known: {', '.join(known)})", field="sweep.parameter")


def _parse(data) -> RunConfig:
    d = _object(
        data,
        "",
        ("schema", "hamiltonian", "initial_state", "grid", "tolerances", "seed", "outputs", "mode", "sweep", "verify"),
        ("schema",),
    )
    if d["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {d['schema']!r}, expected {SCHEMA_VERSION}", field="schema")

    mode = d.get("mode", "simulate")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r} (known: {', '.join(MODES)})", field="mode")

    ham = _parse_hamiltonian(d.get("hamiltonian"))
    if ham is None and mode != "verify":
        raise ConfigError(f"required for mode {mode!r}", field="hamiltonian")

    g = _object(d.get("grid", {}), "grid", ("N", "tau"))
    N = _integer(g.get("N", GridConfig.N), "grid.N")
    if N < 2:
        raise ConfigError(f"grid.N must be >= 2 (got {N})", field="grid.N")
    grid = GridConfig(N, _number(g.get("tau", GridConfig.tau), "grid.tau", positive=True))

    t = _object(d.get("tolerances", {}), "tolerances", ("cluster_tol", "residual_tol"))
    tol = Tolerances(
        _number(t.get("cluster_tol", Tolerances.cluster_tol), "tolerances.cluster_tol", positive=True),
        _number(t.get("residual_tol", Tolerances.residual_tol), "tolerances.residual_tol", positive=True),
    )

    o = _object(d.get("outputs", {}), "outputs", ("report_path", "csv_path"))
    outputs = Outputs(
        _string(o.get("report_path", Outputs.report_path), "outputs.report_path"),
        _string(o.get("csv_path", Outputs.csv_path), "outputs.csv_path"),
    )

    sweep = None
    if d.get("sweep") is not None:
        s = _object(d["sweep"], "sweep", ("parameter", "values"), ("parameter", "values"))
        parameter = _string(s["parameter"], "sweep.parameter")
        _resolve_sweep_parameter(parameter, ham)
        if not isinstance(s["values"], list):
            raise ConfigError("expected a list", field="sweep.values")
        values = tuple(_number(v, f"sweep.values[{i}]") for i, v in enumerate(s["values"]))
        sweep = SweepConfig(parameter, values)
    elif mode == "sweep":
        raise ConfigError("required for mode 'sweep'", field="sweep")

    verify = None
    if d.get("verify") is not None:
        v = _object(d["verify"], "verify", ("suites", "dimension", "gauge_paths", "twirl_samples", "geometry_pairs"))
        suites = v.get("suites", list(SUITES))
        if not isinstance(suites, list):
            raise ConfigError("expected a list", field="verify.suites")
        for i, name in enumerate(suites):
            if name not in SUITES:
                raise ConfigError(f"unknown suite {name!r} (known: {', '.join(SUITES)})", field=f"verify.suites[{i}]")
        defaults = VerifyConfig()
        counts = {}
        for key in ("dimension", "gauge_paths", "twirl_samples", "geometry_pairs"):
            n = _integer(v.get(key, getattr(defaults, key)), f"verify.{key}")
            if n < 1:
                raise ConfigError("must be >= 1", field=f"verify.{key}")
            counts[key] = n
        verify = VerifyConfig(tuple(suites), **counts)

    return RunConfig(
        hamiltonian=ham,
        initial_state=_parse_initial_state(d.get("initial_state", "ground")),
        grid=grid,
        tolerances=tol,
        seed=_u64(d.get("seed", 0), "seed"),
        outputs=outputs,
        mode=mode,
        sweep=sweep,
        verify=verify,
    )


def apply_sweep_value(config: RunConfig, parameter: str, value: float) -> RunConfig:
    """Copy of ``config`` with one swept parameter replaced."""
    target = GRID_SWEEPS.get(parameter)
    if target == "grid.tau":
        if not value > 0:
            raise ConfigError(f"must be > 0, got {value}", field="grid.tau")
        return replace(config, grid=replace(config.grid, tau=float(value)))
    if target == "grid.N":
        n = _integer(value, "grid.N")
        if n < 2:
            raise ConfigError(f"grid.N must be >= 2 (got {n})", field="grid.N")
        return replace(config, grid=replace(config.grid, N=n))
    if target == "seed":
        return replace(config, seed=_u64(value, "seed"))
    _resolve_sweep_parameter(parameter, config.hamiltonian)
    bare = parameter.removeprefix("hamiltonian.params.")
    ham = config.hamiltonian
    return replace(config, hamiltonian=HamiltonianFamilySpec(ham.family, {**ham.params, bare: float(value)}))
