import json

import numpy as np
import pytest
import yaml

from qprobe.core import ConfigError, NumericsError
from qprobe.experiments import (
    ExperimentConfig,
    SolverOverrides,
    apply_overrides,
    load_config,
    parse_config,
    run_experiment,
    run_sweep,
)

BASE = {
    "quantity": "qfi",
    "engines": ["rwa"],
    "delta": 1.0,
    "coupling": 0.1,
    "gamma_env": 0.5,
    "t_max": 10.0,
    "output_step": 0.5,
}


def _write_config(tmp_path, mapping, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(mapping))
    return path


def test_parse_minimal_config():
    config = parse_config(dict(BASE), label="demo")
    assert config.engines == ("rwa",)
    assert config.label == "demo"
    assert len(config.t_grid()) == 21


def test_unknown_keys_are_rejected_with_field_names():
    bad = dict(BASE, colour="red")
    with pytest.raises(ConfigError, match="colour"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="solver"):
        parse_config(dict(BASE, solver={"stepsize": 2}))
    with pytest.raises(ConfigError, match="sweep"):
        parse_config(dict(BASE, sweep={"epsilon": [1, 2]}))


def test_missing_required_keys_are_reported():
    with pytest.raises(ConfigError, match="t_max"):
        parse_config({k: v for k, v in BASE.items() if k != "t_max"})


def test_exactly_one_memory_specification():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(dict(BASE, gamma_over_coupling=10.0))
    no_gamma = {k: v for k, v in BASE.items() if k != "gamma_env"}
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(no_gamma)
    config = parse_config(dict(no_gamma, gamma_over_coupling=10.0))
    assert config.gamma_env == pytest.approx(1.0)


def test_mixed_coupling_requires_heom_engine():
    with pytest.raises(ConfigError, match="perpendicular_z coupling only"):
        parse_config(dict(BASE, coupling_kind="mixed", chi=1.0))
    with pytest.raises(ConfigError, match="perpendicular_z coupling only"):
        parse_config(dict(BASE, sweep={"chi": [0.0, 1.0]}))
    ok = parse_config(dict(BASE, engines=["heom"], coupling_kind="mixed", chi=1.0))
    assert ok.chi == 1.0


def test_named_and_numeric_initial_states():
    assert parse_config(dict(BASE, initial_state="x+")).initial_state == (1.0, 0.0, 0.0)
    assert parse_config(dict(BASE, initial_state=[0.1, 0.2, 0.3])).initial_state == (0.1, 0.2, 0.3)
    with pytest.raises(ConfigError, match="unknown initial_state"):
        parse_config(dict(BASE, initial_state="w+"))
    with pytest.raises(ConfigError, match="exceeds 1"):
        parse_config(dict(BASE, initial_state=[1.0, 1.0, 1.0]))


def test_grid_divisibility_is_enforced():
    with pytest.raises(ConfigError, match="divide"):
        parse_config(dict(BASE, output_step=0.3))


def test_empty_sweep_axis_degrades_to_single_run(tmp_path):
    config = parse_config(dict(BASE, sweep={"gamma_over_coupling": []}), label="empty")
    assert config.sweep_cells() == []
    artifacts = run_experiment(config, tmp_path)
    assert [a.csv_path.name for a in artifacts] == ["empty_rwa.csv"]


def test_solver_overrides_must_pair_depth_and_substeps():
    overrides = SolverOverrides(depth=8, substeps=None)
    with pytest.raises(ConfigError, match="together"):
        overrides.heom_settings()
    assert SolverOverrides().heom_settings() is None
    settings = SolverOverrides(depth=8, substeps=4).heom_settings()
    assert (settings.depth, settings.substeps) == (8, 4)


def test_apply_overrides_scalars_and_nested_keys():
    config = parse_config(dict(BASE))
    updated = apply_overrides(config, ["delta=2.0", "solver.eps=1e-6", "engines=[rwa,gbe]"])
    assert updated.delta == 2.0
    assert updated.solver.eps == 1e-6
    assert updated.engines == ("rwa", "gbe")
    with pytest.raises(ConfigError, match="key=value"):
        apply_overrides(config, ["delta:2"])


def test_load_config_round_trip(tmp_path):
    path = _write_config(tmp_path, BASE)
    config = load_config(path)
    assert config.label == "exp"
    with pytest.raises(ConfigError, match="cannot parse"):
        bad = tmp_path / "broken.yaml"
        bad.write_text("engines: [rwa\n")
        load_config(bad)


def test_run_experiment_writes_csv_and_metadata(tmp_path):
    config = parse_config(dict(BASE), label="demo")
    artifacts = run_experiment(config, tmp_path)
    assert len(artifacts) == 1
    body = artifacts[0].csv_path.read_text()
    lines = body.splitlines()
    assert lines[0] == "t,qfi"
    assert len(lines) == 22
    value = float(lines[1].split(",")[1])
    assert value == pytest.approx(0.0, abs=1e-12)
    meta = json.loads(artifacts[0].meta_path.read_text())
    assert meta["config"]["delta"] == 1.0
    assert meta["solver_used"]["engine"] == "rwa"
    assert "wall_seconds" in meta and "tool_version" in meta


def test_trajectory_runs_use_bloch_header(tmp_path):
    config = parse_config(dict(BASE, quantity="trajectory"), label="traj")
    artifacts = run_experiment(config, tmp_path)
    header = artifacts[0].csv_path.read_text().splitlines()[0]
    assert header == "t,sx,sy,sz"


def test_csv_format_is_deterministic_scientific(tmp_path):
    config = parse_config(dict(BASE), label="fmt")
    first = run_experiment(config, tmp_path / "a")[0].csv_path.read_bytes()
    second = run_experiment(config, tmp_path / "b")[0].csv_path.read_bytes()
    assert first == second
    assert b"\r" not in first
    sample = first.decode().splitlines()[3].split(",")[1]
    mantissa, exponent = sample.split("e")
    assert len(mantissa.split(".")[1]) == 14  # 15 significant digits


def test_sweep_produces_long_format_and_reduction(tmp_path):
    config = parse_config(
        dict(BASE, engines=["rwa"], sweep={"gamma_over_coupling": [0.25, 0.5, 5.0]}),
        label="swp",
    )
    artifacts = run_sweep(config, tmp_path)
    names = {a.csv_path.name for a in artifacts}
    assert names == {"swp_sweep.csv", "swp_fmax.csv"}
    long_lines = (tmp_path / "swp_sweep.csv").read_text().splitlines()
    assert long_lines[0] == "gamma_over_coupling,t,qfi"
    assert len(long_lines) == 1 + 3 * 21
    fmax_lines = (tmp_path / "swp_fmax.csv").read_text().splitlines()
    assert fmax_lines[0] == "gamma_over_coupling,t_at_max,f_max"
    assert len(fmax_lines) == 4
    peaks = [float(line.split(",")[2]) for line in fmax_lines[1:]]
    assert peaks[0] > peaks[1] > peaks[2]


def test_two_dimensional_sweep_has_nine_reduction_rows(tmp_path):
    config = parse_config(
        dict(
            BASE,
            engines=["heom"],
            coupling_kind="mixed",
            t_max=4.0,
            output_step=0.5,
            solver={"depth": 5, "substeps": 8},
            sweep={"gamma_over_coupling": [5.0, 10.0, 20.0], "chi": [0.0, 0.5, 1.0]},
        ),
        label="grid",
    )
    artifacts = run_sweep(config, tmp_path)
    fmax = [a for a in artifacts if a.csv_path.name == "grid_fmax.csv"][0]
    lines = fmax.csv_path.read_text().splitlines()
    assert lines[0] == "gamma_over_coupling,chi,t_at_max,f_max"
    assert len(lines) == 10


def test_single_cell_sweep_matches_plain_run(tmp_path):
    swept = parse_config(
        dict(BASE, sweep={"gamma_over_coupling": [5.0]}), label="one"
    )
    plain = parse_config(
        {**{k: v for k, v in BASE.items() if k != "gamma_env"}, "gamma_over_coupling": 5.0},
        label="one",
    )
    run_sweep(swept, tmp_path / "sweep")
    run_experiment(plain, tmp_path / "run")
    long_rows = np.loadtxt(tmp_path / "sweep" / "one_sweep.csv", delimiter=",", skiprows=1)
    run_rows = np.loadtxt(tmp_path / "run" / "one_rwa.csv", delimiter=",", skiprows=1)
    assert long_rows[:, 1:] == pytest.approx(run_rows)


def test_sweep_records_failed_cells_and_continues(tmp_path, monkeypatch):
    import qprobe.experiments as experiments

    real = experiments.compute_curve

    def flaky(engine, config, cell=None):
        if cell and cell.get("gamma_over_coupling") == 0.5:
            raise NumericsError("injected cell failure")
        return real(engine, config, cell)

    monkeypatch.setattr(experiments, "compute_curve", flaky)
    config = parse_config(
        dict(BASE, sweep={"gamma_over_coupling": [0.25, 0.5, 5.0]}), label="flaky"
    )
    artifacts = run_sweep(config, tmp_path)
    meta = json.loads([a for a in artifacts if "sweep" in a.csv_path.name][0].meta_path.read_text())
    assert list(meta["failed_cells"].values()) == ["injected cell failure"]
    fmax_lines = (tmp_path / "flaky_fmax.csv").read_text().splitlines()
    assert len(fmax_lines) == 3  # two surviving cells


def test_run_experiment_failure_removes_partial_artifacts(tmp_path, monkeypatch):
    import qprobe.experiments as experiments

    real = experiments.compute_curve

    def failing(engine, config, cell=None):
        if engine == "gbe":
            raise NumericsError("injected engine failure")
        return real(engine, config, cell)

    monkeypatch.setattr(experiments, "compute_curve", failing)
    config = parse_config(dict(BASE, engines=["rwa", "gbe"]), label="boom")
    with pytest.raises(NumericsError, match="injected"):
        run_experiment(config, tmp_path)
    assert not list(tmp_path.glob("*.csv"))


def test_parallel_sweep_matches_serial(tmp_path):
    config = parse_config(
        dict(BASE, sweep={"gamma_over_coupling": [0.25, 0.5, 5.0]}), label="par"
    )
    run_sweep(config, tmp_path / "serial", workers=1)
    run_sweep(config, tmp_path / "parallel", workers=3)
    serial = (tmp_path / "serial" / "par_sweep.csv").read_bytes()
    parallel = (tmp_path / "parallel" / "par_sweep.csv").read_bytes()
    assert serial == parallel


def test_experiment_config_direct_validation():
    with pytest.raises(ConfigError, match="quantity"):
        ExperimentConfig(
            quantity="spectrum", engines=("rwa",), delta=1.0, coupling=0.1,
            gamma_env=1.0, t_max=1.0, output_step=0.5,
        )
    with pytest.raises(ConfigError, match="at least one"):
        ExperimentConfig(
            quantity="qfi", engines=(), delta=1.0, coupling=0.1,
            gamma_env=1.0, t_max=1.0, output_step=0.5,
        )
