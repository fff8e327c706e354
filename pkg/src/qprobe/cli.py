"""Command-line interface: run, reproduce, sweep, selftest.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .core import ConfigError, NumericsError, QProbeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qprobe",
        description="Dissipative qubit-probe dynamics and Fisher-information experiments",
    )
    parser.add_argument("--version", action="version", version=f"qprobe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--workers", type=int, default=1, help="worker pool size for sweep cells")
    common.add_argument(
        "--emit-plotscript",
        action="store_true",
        help="write a generic matplotlib script next to the CSV files",
    )
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (dotted keys reach nested sections; repeatable)",
    )

    p_run = sub.add_parser("run", parents=[common], help="run an experiment config")
    p_run.add_argument("config", help="path to a YAML experiment file")

    p_rep = sub.add_parser("reproduce", parents=[common], help="run a built-in figure preset")
    p_rep.add_argument("figure", help="figure id, e.g. fig1a, fig2b, fig3cd")

    p_sweep = sub.add_parser("sweep", parents=[common], help="run a sweep config (long-format output)")
    p_sweep.add_argument("config", help="path to a YAML experiment file with sweep axes")

    sub.add_parser("selftest", parents=[common], help="run the oracle-agreement suite")
    return parser


def _cmd_run(args) -> int:
    from .experiments import apply_overrides, load_config, run_experiment

    config = apply_overrides(load_config(args.config), args.override)
    artifacts = run_experiment(
        config, args.out, workers=args.workers, emit_plotscript=args.emit_plotscript
    )
    for artifact in artifacts:
        print(f"wrote {artifact.csv_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .experiments import apply_overrides, load_config, run_sweep

    config = apply_overrides(load_config(args.config), args.override)
    artifacts = run_sweep(
        config, args.out, workers=args.workers, emit_plotscript=args.emit_plotscript
    )
    for artifact in artifacts:
        print(f"wrote {artifact.csv_path}")
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    from .presets import reproduce

    if args.override:
        raise ConfigError("reproduce uses built-in parameter sets; --override is not supported")
    artifacts, checks = reproduce(
        args.figure, args.out, workers=args.workers, emit_plotscript=args.emit_plotscript
    )
    for artifact in artifacts:
        print(f"wrote {artifact.csv_path}")
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"check {check.name}: {status} ({check.detail})")
    return EXIT_OK


def _selftest_checks():
    """Fast oracle-agreement suite; each item returns (ok, detail)."""
    from . import bath, gbe, heom, oracles, qfi, rwa
    from .core import ModelParams, PERPENDICULAR_Z, coupling_operator, density_from_bloch

    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    cop = coupling_operator(PERPENDICULAR_Z)
    rho0 = density_from_bloch([0.0, 0.0, 1.0])

    def check_qfi_formulas():
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(200):
            r = rng.uniform(-1, 1, 3)
            r *= rng.uniform(0, 0.98) / np.linalg.norm(r)
            dr = rng.uniform(-1, 1, 3)
            a = qfi.qfi_bloch(r, dr)
            drho = 0.5 * (
                dr[0] * np.array([[0, 1], [1, 0]], dtype=complex)
                + dr[1] * np.array([[0, -1j], [1j, 0]])
                + dr[2] * np.array([[1, 0], [0, -1]], dtype=complex)
            )
            b = qfi.qfi_eigen(density_from_bloch(r), drho)
            worst = max(worst, abs(a - b) / max(abs(a), 1e-30))
        return worst < 1e-8, f"eigen-vs-bloch rel dev {worst:.2e}"

    def check_gbe_inversion():
        grid = np.linspace(0.0, 10.0, 501)
        res = gbe.gbe_propagate([0, 0, 1.0], grid, 1.0, 0.1, 1.0)
        direct = gbe.volterra_propagate([0, 0, 1.0], grid, 1.0, 0.1, 1.0)
        gap = float(np.max(np.abs(res.values - direct.values)))
        return gap < 5e-3, f"residues-vs-volterra sup {gap:.2e}"

    def check_heom_backends():
        cfg = heom.HeomConfig(model, cop, depth=6, step=0.01, horizon=5.0, rho0=rho0)
        a = heom.heom_propagate(cfg, output_stride=10, backend="python")
        if heom.compiled_core_available():
            b = heom.heom_propagate(cfg, output_stride=10, backend="compiled")
            gap = float(np.max(np.abs(a.values - b.values)))
            return gap < 1e-13, f"python-vs-compiled sup {gap:.2e}"
        return True, "compiled core unavailable; python backend only"

    def check_heom_dephasing():
        from .core import HADAMARD, MIXED

        dep_model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
        cfg = heom.HeomConfig(
            dep_model,
            coupling_operator(MIXED, 0.0),
            depth=12,
            step=0.005,
            horizon=8.0,
            rho0=rho0,
        )
        traj = heom.heom_propagate(cfg, output_stride=20)
        pm = np.einsum("ij,tjk,kl->til", HADAMARD, traj.values, HADAMARD)
        coh = np.abs(pm[:, 0, 1])
        target = 0.5 * oracles.dephasing_coherence(traj.times, 0.1, 1.0)
        gap = float(np.max(np.abs(coh - target)))
        return gap < 1e-6, f"dephasing closed form sup {gap:.2e}"

    def check_rwa_pipeline():
        grid = np.linspace(0.0, 10.0, 201)
        samples = qfi.qfi_via_solver("rwa", ModelParams(1.0, 0.05, 0.1), grid, rho0)
        closed = rwa.rwa_qfi(grid, 1.0, 0.1, 0.05)
        values = np.array([s.value for s in samples])
        rel = float(np.max(np.abs(values[1:] - closed[1:]) / closed[1:]))
        return rel < 1e-6, f"pipeline-vs-closed-form rel dev {rel:.2e}"

    def check_lindblad_rates():
        a_hat, b_hat = gbe.kernel_laplace(0.0, 1.0, 0.1, 1e6)
        gen = oracles.lindblad_generator(1.0, 0.1)
        gap = max(abs(a_hat.real + gen[0, 0]), abs(b_hat.real + gen[1, 1]))
        return gap < 1e-6, f"kernel-integral vs generator rate gap {gap:.2e}"

    def check_few_mode_survival():
        dis = bath.discretize_bath(ModelParams(1.0, 1.0, 0.1), n_modes=400, band_limit=50.0)
        grid = np.linspace(0.0, 5.0, 51)
        amp = oracles.few_mode_rwa_survival(dis, grid)
        target = rwa.decay_factor(grid, 0.1, 1.0)
        gap = float(np.max(np.abs(amp - target)))
        return gap < 1e-3, f"survival-vs-decay-factor sup {gap:.2e}"

    return [
        ("qfi_formula_equivalence", check_qfi_formulas),
        ("gbe_inversion_vs_volterra", check_gbe_inversion),
        ("heom_backend_parity", check_heom_backends),
        ("heom_pure_dephasing", check_heom_dephasing),
        ("rwa_pipeline_anchor", check_rwa_pipeline),
        ("lindblad_rate_convention", check_lindblad_rates),
        ("few_mode_survival", check_few_mode_survival),
    ]


def _cmd_selftest(args) -> int:
    failures = 0
    for name, fn in _selftest_checks():
        try:
            ok, detail = fn()
        except QProbeError as exc:
            ok, detail = False, str(exc)
        print(f"selftest {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        if not ok:
            failures += 1
    if failures:
        print(f"{failures} selftest check(s) failed")
        return EXIT_NUMERIC
    print("all selftest checks passed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "reproduce": _cmd_reproduce,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
