"""Configuration-driven experiment runner.

A configuration is a single YAML mapping with a strict key set (unknown
keys are rejected with a field-level message).  One experiment computes,
per requested engine and per sweep cell, either a Bloch trajectory or a
QFI curve on a uniform time grid, and serializes each curve as a CSV with
a JSON metadata sidecar.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import gbe, heom, qfi, rwa
from .artifacts import ResultArtifact, Stopwatch, write_csv, write_metadata, write_plotscript
from .core import (
    MIXED,
    PERPENDICULAR_Z,
    ConfigError,
    ModelParams,
    NumericsError,
    Trajectory,
    bloch_from_density,
    coupling_operator,
    density_from_bloch,
)

NAMED_STATES = {
    "z+": (0.0, 0.0, 1.0),
    "z-": (0.0, 0.0, -1.0),
    "x+": (1.0, 0.0, 0.0),
    "x-": (-1.0, 0.0, 0.0),
    "y+": (0.0, 1.0, 0.0),
    "y-": (0.0, -1.0, 0.0),
}

_TOP_KEYS = {
    "quantity",
    "engines",
    "delta",
    "coupling",
    "gamma_env",
    "gamma_over_coupling",
    "coupling_kind",
    "chi",
    "initial_state",
    "t_max",
    "output_step",
    "solver",
    "sweep",
    "out_dir",
}
_SOLVER_KEYS = {"depth", "substeps", "eps"}
_SWEEP_KEYS = {"gamma_over_coupling", "chi"}


@dataclass(frozen=True)
class SolverOverrides:
    """Explicit discretization; None means converge automatically."""

    depth: int | None = None
    substeps: int | None = None
    eps: float | None = None

    def heom_settings(self) -> heom.HeomSettings | None:
        if self.depth is None and self.substeps is None:
            return None
        if self.depth is None or self.substeps is None:
            raise ConfigError("solver.depth and solver.substeps must be given together")
        return heom.HeomSettings(depth=self.depth, substeps=self.substeps)


@dataclass(frozen=True)
class ExperimentConfig:
    quantity: str
    engines: tuple[str, ...]
    delta: float
    coupling: float
    gamma_env: float
    t_max: float
    output_step: float
    coupling_kind: str = PERPENDICULAR_Z
    chi: float = 0.0
    initial_state: tuple[float, float, float] = (0.0, 0.0, 1.0)
    solver: SolverOverrides = field(default_factory=SolverOverrides)
    sweep_ratio: tuple[float, ...] = ()
    sweep_chi: tuple[float, ...] = ()
    out_dir: str | None = None
    label: str = "experiment"

    def __post_init__(self):
        if self.quantity not in ("trajectory", "qfi"):
            raise ConfigError(f"quantity must be 'trajectory' or 'qfi', got {self.quantity!r}")
        if not self.engines:
            raise ConfigError("engines must name at least one engine")
        for engine in self.engines:
            if engine not in qfi.ENGINES:
                raise ConfigError(f"unknown engine {engine!r}; choose from {qfi.ENGINES}")
        if self.coupling_kind not in (PERPENDICULAR_Z, MIXED):
            raise ConfigError(f"coupling_kind must be perpendicular_z or mixed, got {self.coupling_kind!r}")
        if self.coupling_kind == MIXED or self.sweep_chi:
            bad = [e for e in self.engines if e != "heom"]
            if bad:
                raise ConfigError(
                    f"engines {bad} support perpendicular_z coupling only; "
                    f"mixed (chi) coupling requires the heom engine"
                )
        if self.delta <= 0 or self.gamma_env <= 0:
            raise ConfigError("delta and gamma_env must be > 0")
        if self.coupling < 0:
            raise ConfigError("coupling must be >= 0")
        if self.t_max <= 0 or self.output_step <= 0:
            raise ConfigError("t_max and output_step must be > 0")
        n = round(self.t_max / self.output_step)
        if n < 1 or abs(n * self.output_step - self.t_max) > 1e-9 * self.t_max:
            raise ConfigError("output_step must divide t_max")
        norm = float(np.linalg.norm(self.initial_state))
        if norm > 1.0 + 1e-9:
            raise ConfigError(f"initial state Bloch norm {norm} exceeds 1")

    def t_grid(self) -> np.ndarray:
        n = round(self.t_max / self.output_step)
        return np.arange(n + 1) * self.output_step

    def model(self, ratio: float | None = None, chi: float | None = None) -> ModelParams:
        gamma_env = self.gamma_env if ratio is None else ratio * self.coupling
        return ModelParams(
            delta=self.delta,
            gamma_env=gamma_env,
            coupling=self.coupling,
            chi=self.chi if chi is None else chi,
        )

    def sweep_cells(self) -> list[dict[str, float]]:
        """Cross product of the sweep axes; empty when no axis is given."""
        cells: list[dict[str, float]] = []
        ratios = self.sweep_ratio or (None,)
        chis = self.sweep_chi or (None,)
        if not self.sweep_ratio and not self.sweep_chi:
            return []
        for ratio in ratios:
            for chi in chis:
                cell: dict[str, float] = {}
                if ratio is not None:
                    cell["gamma_over_coupling"] = float(ratio)
                if chi is not None:
                    cell["chi"] = float(chi)
                cells.append(cell)
        return cells


def _require_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def _parse_initial_state(value) -> tuple[float, float, float]:
    if isinstance(value, str):
        try:
            return NAMED_STATES[value]
        except KeyError:
            raise ConfigError(
                f"unknown initial_state {value!r}; use one of {sorted(NAMED_STATES)} or a Bloch triple"
            ) from None
    try:
        triple = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"initial_state must be a name or 3 numbers, got {value!r}") from None
    if len(triple) != 3:
        raise ConfigError("initial_state triple must have exactly 3 components")
    return triple


def _parse_axis(value, name: str) -> tuple[float, ...]:
    if value is None:
        return ()
    try:
        axis = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"sweep.{name} must be a list of numbers, got {value!r}") from None
    return axis  # an empty axis degrades to a plain single run


def parse_config(mapping: dict, label: str = "experiment") -> ExperimentConfig:
    if not isinstance(mapping, dict):
        raise ConfigError("configuration must be a mapping")
    _require_keys(mapping, _TOP_KEYS, "configuration")
    missing = [k for k in ("quantity", "engines", "delta", "coupling", "t_max", "output_step") if k not in mapping]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    if ("gamma_env" in mapping) == ("gamma_over_coupling" in mapping):
        raise ConfigError("give exactly one of gamma_env or gamma_over_coupling")
    if "gamma_env" in mapping:
        gamma_env = float(mapping["gamma_env"])
    else:
        gamma_env = float(mapping["gamma_over_coupling"]) * float(mapping["coupling"])

    solver_map = mapping.get("solver") or {}
    if not isinstance(solver_map, dict):
        raise ConfigError("solver must be a mapping")
    _require_keys(solver_map, _SOLVER_KEYS, "solver")
    solver = SolverOverrides(
        depth=None if solver_map.get("depth") is None else int(solver_map["depth"]),
        substeps=None if solver_map.get("substeps") is None else int(solver_map["substeps"]),
        eps=None if solver_map.get("eps") is None else float(solver_map["eps"]),
    )

    sweep_map = mapping.get("sweep") or {}
    if not isinstance(sweep_map, dict):
        raise ConfigError("sweep must be a mapping")
    _require_keys(sweep_map, _SWEEP_KEYS, "sweep")

    engines = mapping["engines"]
    if isinstance(engines, str):
        engines = [engines]

    try:
        return ExperimentConfig(
            quantity=str(mapping["quantity"]),
            engines=tuple(str(e) for e in engines),
            delta=float(mapping["delta"]),
            coupling=float(mapping["coupling"]),
            gamma_env=gamma_env,
            coupling_kind=str(mapping.get("coupling_kind", PERPENDICULAR_Z)),
            chi=float(mapping.get("chi", 0.0)),
            initial_state=_parse_initial_state(mapping.get("initial_state", "z+")),
            t_max=float(mapping["t_max"]),
            output_step=float(mapping["output_step"]),
            solver=solver,
            sweep_ratio=_parse_axis(sweep_map["gamma_over_coupling"], "gamma_over_coupling")
            if "gamma_over_coupling" in sweep_map
            else (),
            sweep_chi=_parse_axis(sweep_map["chi"], "chi") if "chi" in sweep_map else (),
            out_dir=mapping.get("out_dir"),
            label=label,
        )
    except ValueError as exc:  # ModelParams-style validation
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        mapping = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(mapping, label=path.stem)


def apply_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``key=value`` strings (dotted keys reach solver/sweep)."""
    if not overrides:
        return config
    mapping = _config_to_mapping(config)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        value = yaml.safe_load(raw)
        parts = key.split(".")
        target = mapping
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override key {key!r} does not address a mapping")
        target[parts[-1]] = value
    if "gamma_over_coupling" in mapping and "gamma_env" in mapping:
        del mapping["gamma_env"]
    return parse_config(mapping, label=config.label)


def _config_to_mapping(config: ExperimentConfig) -> dict:
    mapping: dict[str, Any] = {
        "quantity": config.quantity,
        "engines": list(config.engines),
        "delta": config.delta,
        "coupling": config.coupling,
        "gamma_env": config.gamma_env,
        "coupling_kind": config.coupling_kind,
        "chi": config.chi,
        "initial_state": list(config.initial_state),
        "t_max": config.t_max,
        "output_step": config.output_step,
    }
    if config.solver != SolverOverrides():
        mapping["solver"] = {
            k: v
            for k, v in (
                ("depth", config.solver.depth),
                ("substeps", config.solver.substeps),
                ("eps", config.solver.eps),
            )
            if v is not None
        }
    sweep = {}
    if config.sweep_ratio:
        sweep["gamma_over_coupling"] = list(config.sweep_ratio)
    if config.sweep_chi:
        sweep["chi"] = list(config.sweep_chi)
    if sweep:
        mapping["sweep"] = sweep
    if config.out_dir:
        mapping["out_dir"] = config.out_dir
    return mapping


def compute_curve(
    engine: str,
    config: ExperimentConfig,
    cell: dict[str, float] | None = None,
) -> Trajectory:
    """One engine run for one sweep cell (or the base parameters)."""
    cell = cell or {}
    model = config.model(cell.get("gamma_over_coupling"), cell.get("chi"))
    rho0 = density_from_bloch(config.initial_state)
    t_grid = config.t_grid()
    settings = config.solver.heom_settings()
    if config.quantity == "qfi":
        samples = qfi.qfi_via_solver(
            engine,
            model,
            t_grid,
            rho0,
            coupling_kind=config.coupling_kind,
            eps=config.solver.eps,
            heom_settings=settings,
        )
        traj = qfi.qfi_trajectory(samples)
    else:
        if engine == "heom":
            traj = heom.heom_propagate_grid(
                model, _coupling(config, model), rho0, t_grid, settings
            ).as_bloch()
        elif engine == "gbe":
            traj = gbe.gbe_propagate(
                bloch_from_density(rho0), t_grid, model.delta, model.coupling, model.gamma_env
            )
        elif engine == "rwa":
            traj = rwa.rwa_propagate(rho0, t_grid, model.delta, model.coupling, model.gamma_env)
        else:
            raise ConfigError(f"unknown engine {engine!r}")
    traj.meta.update(
        {
            "delta": model.delta,
            "coupling": model.coupling,
            "gamma_env": model.gamma_env,
            "coupling_kind": config.coupling_kind,
        }
    )
    if config.coupling_kind == MIXED:
        traj.meta["chi"] = model.chi
    if cell:
        traj.meta["cell"] = dict(cell)
    return traj


def _coupling(config: ExperimentConfig, model: ModelParams):
    if config.coupling_kind == MIXED:
        return coupling_operator(MIXED, model.chi)
    return coupling_operator(PERPENDICULAR_Z)


def _cell_suffix(cell: dict[str, float]) -> str:
    parts = []
    for key in ("gamma_over_coupling", "chi"):
        if key in cell:
            short = "ratio" if key == "gamma_over_coupling" else "chi"
            parts.append(f"{short}{cell[key]:g}".replace(".", "p").replace("-", "m"))
    return "_".join(parts)


def _curve_columns(traj: Trajectory):
    if traj.kind == "bloch":
        return ["t", "sx", "sy", "sz"], [
            traj.times,
            traj.values[:, 0],
            traj.values[:, 1],
            traj.values[:, 2],
        ]
    if traj.kind == "qfi":
        return ["t", "qfi"], [traj.times, traj.values]
    raise ValueError(f"cannot serialize trajectory kind {traj.kind!r}")


def _meta_payload(config: ExperimentConfig, traj_meta: dict, wall_seconds: float) -> dict:
    clean = {k: v for k, v in traj_meta.items() if k not in ("hierarchy_snapshots", "pairs")}
    return {
        "config": _config_to_mapping(config),
        "solver_used": clean,
        "wall_seconds": wall_seconds,
    }


def _run_cell(args) -> tuple[str, dict | None, Trajectory | None, str | None]:
    engine, config, cell = args
    name = engine if not cell else f"{engine}_{_cell_suffix(cell)}"
    try:
        traj = compute_curve(engine, config, cell)
        return name, cell, traj, None
    except NumericsError as exc:
        return name, cell, None, str(exc)


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path,
    *,
    workers: int = 1,
    emit_plotscript: bool = False,
    fail_fast: bool = True,
    return_curves: bool = False,
    extra_meta: dict | None = None,
):
    """Run every engine (and sweep cell) in a config; write one CSV each.

    With fail_fast (the run surface) an engine failure removes partial
    artifacts and re-raises; without it (the sweep surface) failed cells
    are recorded in metadata and the run continues.  With return_curves the
    in-memory trajectories come back alongside the artifacts, keyed by the
    artifact name.
    """
    out_dir = Path(out_dir)
    cells = config.sweep_cells() or [None]
    tasks = [(engine, config, cell) for engine in config.engines for cell in cells]

    results = []
    with Stopwatch() as clock:
        if workers > 1 and len(tasks) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_cell, tasks))
        else:
            results = [_run_cell(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    artifacts: list[ResultArtifact] = []
    curves: dict[str, Trajectory] = {}
    failures = {}
    written: list[Path] = []
    for name, cell, traj, error in results:
        if error is not None:
            if fail_fast:
                for path in written:
                    path.unlink(missing_ok=True)
                raise NumericsError(f"{name}: {error}")
            failures[name] = error
            continue
        curves[name] = traj
        header, columns = _curve_columns(traj)
        csv_path = write_csv(out_dir / f"{config.label}_{name}.csv", header, columns)
        written.append(csv_path)
        payload = _meta_payload(config, traj.meta, clock.seconds)
        if extra_meta:
            payload.update(extra_meta)
        meta_path = write_metadata(out_dir / f"{config.label}_{name}.meta.json", payload)
        artifacts.append(ResultArtifact(csv_path, meta_path))

    if config.quantity == "qfi" and config.sweep_cells():
        artifacts.append(_write_fmax_table(config, results, out_dir, failures, clock.seconds))
    if emit_plotscript:
        write_plotscript(out_dir, [a.csv_path.name for a in artifacts])
    if return_curves:
        return artifacts, curves
    return artifacts


def _write_fmax_table(config, results, out_dir, failures, wall_seconds) -> ResultArtifact:
    axis_keys = []
    if config.sweep_ratio:
        axis_keys.append("gamma_over_coupling")
    if config.sweep_chi:
        axis_keys.append("chi")
    rows = []
    for name, cell, traj, error in results:
        if traj is None or traj.kind != "qfi" or cell is None:
            continue
        peak = int(np.argmax(traj.values))
        rows.append([cell[k] for k in axis_keys] + [traj.times[peak], traj.values[peak]])
    rows.sort(key=lambda r: r[: len(axis_keys)])
    header = axis_keys + ["t_at_max", "f_max"]
    columns = [np.array([r[i] for r in rows]) for i in range(len(header))]
    csv_path = write_csv(Path(out_dir) / f"{config.label}_fmax.csv", header, columns)
    meta_path = write_metadata(
        Path(out_dir) / f"{config.label}_fmax.meta.json",
        {
            "config": _config_to_mapping(config),
            "failed_cells": failures,
            "wall_seconds": wall_seconds,
        },
    )
    return ResultArtifact(csv_path, meta_path)


def run_sweep(
    config: ExperimentConfig,
    out_dir: str | Path,
    *,
    workers: int = 1,
    emit_plotscript: bool = False,
) -> list[ResultArtifact]:
    """Sweep surface: long-format CSV plus the per-cell peak table.

    Cells are computed independently; a failed cell is recorded in the
    metadata and skipped rather than aborting the sweep.
    """
    out_dir = Path(out_dir)
    cells = config.sweep_cells()
    if not cells:
        return run_experiment(config, out_dir, workers=workers, emit_plotscript=emit_plotscript)
    if len(config.engines) != 1:
        raise ConfigError("sweep expects exactly one engine")
    if config.quantity != "qfi":
        raise ConfigError("sweep supports the qfi quantity")
    engine = config.engines[0]
    tasks = [(engine, config, cell) for cell in cells]
    with Stopwatch() as clock:
        if workers > 1 and len(tasks) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_cell, tasks))
        else:
            results = [_run_cell(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    axis_keys = []
    if config.sweep_ratio:
        axis_keys.append("gamma_over_coupling")
    if config.sweep_chi:
        axis_keys.append("chi")
    long_cols: list[list[float]] = [[] for _ in range(len(axis_keys) + 2)]
    failures = {}
    for name, cell, traj, error in results:
        if error is not None:
            failures[name] = error
            continue
        for i, key in enumerate(axis_keys):
            long_cols[i].extend([cell[key]] * len(traj.times))
        long_cols[-2].extend(traj.times)
        long_cols[-1].extend(traj.values)
    header = axis_keys + ["t", "qfi"]
    csv_path = write_csv(
        out_dir / f"{config.label}_sweep.csv", header, [np.array(c) for c in long_cols]
    )
    meta_path = write_metadata(
        out_dir / f"{config.label}_sweep.meta.json",
        {
            "config": _config_to_mapping(config),
            "failed_cells": failures,
            "wall_seconds": clock.seconds,
        },
    )
    artifacts = [ResultArtifact(csv_path, meta_path)]
    artifacts.append(_write_fmax_table(config, results, out_dir, failures, clock.seconds))
    if emit_plotscript:
        write_plotscript(out_dir, [a.csv_path.name for a in artifacts])
    return artifacts
