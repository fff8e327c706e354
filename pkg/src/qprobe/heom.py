"""Exact reduced dynamics via a hierarchy of auxiliary density operators.

The probe state is the top of a two-index family rho^(m,n) (m + n <= depth)
of 2x2 matrices obeying coupled linear equations

    d/dt rho^(m,n) = -i [H_s, rho^(m,n)] - gamma (m+n) rho^(m,n)
                     + (Gamma gamma / 2) [m S rho^(m-1,n) + n rho^(m,n-1) S]
                     - [S, rho^(m+1,n)] + [S, rho^(m,n+1)],

closed by setting every rho^(m,n) with m + n > depth to zero.  Only
rho^(0,0) is physical; it starts at the initial state and the rest start at
zero.  The family satisfies rho^(m,n) = adjoint(rho^(n,m)) along the flow,
which licenses an optional halved storage mode (keep m <= n, reconstruct the
rest by adjoints); full storage is kept available so tests can verify the
symmetry rather than assume it.

Propagation is classical fixed-step fourth-order Runge-Kutta, which keeps
runs bit-reproducible.  The stepping kernel is a compiled extension when
available, with a vectorized numpy fallback selected at import; both share
the neighbor-table layout prepared here and agree to round-off.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _heom_py
from .core import (
    CouplingOperator,
    ModelParams,
    NumericsError,
    Trajectory,
    validate_density,
)

try:
    from . import _heom_core
except ImportError:  # pure-python install
    _heom_core = None

#: Hierarchy entries above this magnitude are treated as a blown-up run.
OVERFLOW_LIMIT = 1e9
#: Convergence ladder increases the truncation depth by this much per rung.
DEPTH_STRIDE = 4
DEFAULT_MAX_DEPTH = 40


class HeomInstabilityError(NumericsError):
    """The hierarchy norm overflowed during propagation."""


class ConvergenceError(NumericsError):
    """Depth or step refinement did not reach the requested tolerance."""


def compiled_core_available() -> bool:
    return _heom_core is not None


def resolve_backend(backend: str = "auto") -> str:
    """Pick the stepping kernel: 'compiled' or 'python'.

    'auto' honours the QPROBE_BACKEND environment variable and otherwise
    prefers the compiled core when it imported.
    """
    name = (backend or "auto").lower()
    if name == "auto":
        forced = os.environ.get("QPROBE_BACKEND", "").strip().lower()
        if forced in ("compiled", "python"):
            name = forced
    if name == "auto":
        return "compiled" if _heom_core is not None else "python"
    if name == "compiled":
        if _heom_core is None:
            raise RuntimeError("compiled HEOM core is not available in this install")
        return name
    if name == "python":
        return name
    raise ValueError(f"unknown backend {backend!r}; use 'auto', 'compiled' or 'python'")


def _kernel_module(backend: str):
    return _heom_core if resolve_backend(backend) == "compiled" else _heom_py


def hierarchy_pairs(depth: int, symmetric: bool) -> tuple[tuple[int, int], ...]:
    """Index pairs (m, n) in level-major order; (0, 0) is always first."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    pairs = []
    for level in range(depth + 1):
        for m in range(level + 1):
            n = level - m
            if symmetric and m > n:
                continue
            pairs.append((m, n))
    return tuple(pairs)


def _kernel_tables(pairs, depth: int):
    index = {p: i for i, p in enumerate(pairs)}
    count = len(pairs)
    nbr = np.full((count, 4), -1, dtype=np.int64)
    adj = np.zeros((count, 4), dtype=np.uint8)
    mn_sum = np.zeros(count)
    coef_dm = np.zeros(count)
    coef_dn = np.zeros(count)

    def locate(m, n):
        if m < 0 or n < 0 or m + n > depth:
            return -1, 0
        stored = index.get((m, n))
        if stored is not None:
            return stored, 0
        return index[(n, m)], 1

    for i, (m, n) in enumerate(pairs):
        mn_sum[i] = m + n
        coef_dm[i] = m
        coef_dn[i] = n
        for j, (dm, dn) in enumerate(((-1, 0), (0, -1), (1, 0), (0, 1))):
            nbr[i, j], adj[i, j] = locate(m + dm, n + dn)
    return nbr, adj, mn_sum, coef_dm, coef_dn


@dataclass(frozen=True)
class AdoHierarchy:
    """Indexed family of auxiliary 2x2 matrices at one instant."""

    depth: int
    symmetric: bool
    pairs: tuple[tuple[int, int], ...]
    table: np.ndarray  # (n_stored, 2, 2)

    @classmethod
    def from_initial(cls, rho0: np.ndarray, depth: int, symmetric: bool = True) -> "AdoHierarchy":
        rho0 = validate_density(rho0, "initial state")
        pairs = hierarchy_pairs(depth, symmetric)
        table = np.zeros((len(pairs), 2, 2), dtype=complex)
        table[0] = rho0
        return cls(depth, symmetric, pairs, table)

    @property
    def top(self) -> np.ndarray:
        return self.table[0]

    def get(self, m: int, n: int) -> np.ndarray:
        """Matrix at (m, n); zero beyond the truncation, adjoint-reconstructed
        when only the mirror pair is stored."""
        if m < 0 or n < 0 or m + n > self.depth:
            return np.zeros((2, 2), dtype=complex)
        try:
            i = self.pairs.index((m, n))
        except ValueError:
            j = self.pairs.index((n, m))
            return self.table[j].conj().T
        return self.table[i]

    def conjugate_symmetry_residual(self) -> float:
        """Max deviation from rho^(m,n) = adjoint(rho^(n,m)) over the family.

        In halved storage this reduces to the Hermiticity of the diagonal
        (m = m) entries; in full storage every mirror pair is compared.
        """
        worst = 0.0
        for m, n in self.pairs:
            if m > n:
                continue
            diff = np.max(np.abs(self.get(m, n) - self.get(n, m).conj().T))
            worst = max(worst, float(diff))
        return worst


@dataclass(frozen=True)
class HeomConfig:
    """One propagation: model, coupling, truncation, stepping, initial state."""

    model: ModelParams
    coupling: CouplingOperator
    depth: int
    step: float
    horizon: float
    rho0: np.ndarray
    symmetric_storage: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.step <= 0.0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.horizon < 0.0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        validate_density(self.rho0, "initial state")

    @property
    def amp(self) -> float:
        """Ladder amplitude Gamma * gamma / 2 = alpha(0)."""
        return 0.5 * self.model.coupling * self.model.gamma_env


def default_step(model: ModelParams) -> float:
    """Default RK4 step, 0.01 over the fastest model rate."""
    return 0.01 / max(model.delta, model.gamma_env, model.coupling)


def heom_rhs(state: AdoHierarchy, config: HeomConfig) -> AdoHierarchy:
    """Reference time derivative of a hierarchy (plain loops, kernel-free).

    The stepping kernels reimplement this for speed; tests pin them against
    this function.  The top-level derivative is traceless, which is what
    conserves the physical trace.
    """
    h_sys = config.model.hamiltonian()
    s_op = config.coupling.matrix
    gamma = config.model.gamma_env
    amp = config.amp
    out = np.zeros_like(state.table)
    for i, (m, n) in enumerate(state.pairs):
        rho = state.table[i]
        d = -1j * (h_sys @ rho - rho @ h_sys) - gamma * (m + n) * rho
        if m >= 1:
            d += amp * m * (s_op @ state.get(m - 1, n))
        if n >= 1:
            d += amp * n * (state.get(m, n - 1) @ s_op)
        up_m = state.get(m + 1, n)
        up_n = state.get(m, n + 1)
        d -= s_op @ up_m - up_m @ s_op
        d += s_op @ up_n - up_n @ s_op
        out[i] = d
    return AdoHierarchy(state.depth, state.symmetric, state.pairs, out)


def _validate_tops(tops: np.ndarray, config: HeomConfig) -> None:
    traces = np.abs(tops[:, 0, 0] + tops[:, 1, 1] - 1.0)
    if traces.max() > 1e-8:
        raise NumericsError(
            f"top-level trace drifted by {traces.max():.3e}; the run is unreliable "
            f"(step {config.step:g}, depth {config.depth})"
        )
    herm = np.abs(tops - np.conj(np.swapaxes(tops, -1, -2))).max()
    if herm > 1e-8:
        raise NumericsError(f"top-level state lost Hermiticity by {herm:.3e}")


def heom_propagate(
    config: HeomConfig,
    *,
    output_stride: int = 1,
    backend: str = "auto",
    keep_hierarchy: bool = False,
) -> Trajectory:
    """Propagate and return the physical state on the output grid.

    The solver step may be finer than the output grid (``output_stride``
    solver steps per stored snapshot); output is subsampled, never
    interpolated.  Raises HeomInstabilityError with a sizing suggestion if
    the hierarchy norm overflows.
    """
    if output_stride < 1:
        raise ValueError(f"output_stride must be >= 1, got {output_stride}")
    n_steps = int(round(config.horizon / config.step))
    if abs(n_steps * config.step - config.horizon) > 1e-9 * max(1.0, config.horizon):
        raise ValueError("horizon must be an integer number of steps")
    if n_steps % output_stride != 0:
        raise ValueError("output_stride must divide the step count")
    pairs = hierarchy_pairs(config.depth, config.symmetric_storage)
    nbr, adj, mn_sum, coef_dm, coef_dn = _kernel_tables(pairs, config.depth)
    state = np.zeros((len(pairs), 2, 2), dtype=complex)
    state[0] = config.rho0

    n_out = n_steps // output_stride + 1
    n_snap_ados = len(pairs) if keep_hierarchy else 1
    snapshots = np.empty((n_out, n_snap_ados, 2, 2), dtype=complex)
    kernel = _kernel_module(backend)
    failed = kernel.rk4_propagate(
        state,
        config.model.hamiltonian(),
        config.coupling.matrix,
        config.model.gamma_env,
        config.amp,
        mn_sum,
        coef_dm,
        coef_dn,
        nbr,
        adj,
        config.step,
        n_steps,
        output_stride,
        snapshots,
        OVERFLOW_LIMIT,
    )
    if failed:
        raise HeomInstabilityError(
            f"hierarchy norm exceeded {OVERFLOW_LIMIT:g} at t = {failed * config.step:g}; "
            f"reduce the step (h = {config.step:g}) or increase the depth (N = {config.depth})"
        )
    times = np.arange(n_out) * (config.step * output_stride)
    tops = snapshots[:, 0]
    _validate_tops(tops, config)
    meta: dict[str, Any] = {
        "engine": "heom",
        "depth": config.depth,
        "step": config.step,
        "backend": resolve_backend(backend),
        "symmetric_storage": config.symmetric_storage,
    }
    if keep_hierarchy:
        meta["hierarchy_snapshots"] = snapshots
        meta["pairs"] = pairs
    return Trajectory(times, tops, "density", meta)


@dataclass(frozen=True)
class HeomSettings:
    """Converged discretization: truncation depth and solver substeps per
    output-grid interval.  Pinned across stencil runs so that
    discretization error cancels in parameter differences."""

    depth: int
    substeps: int
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)


def _uniform_spacing(t_grid: np.ndarray) -> float:
    if len(t_grid) < 2:
        raise ValueError("time grid needs at least two points")
    if abs(t_grid[0]) > 1e-12:
        raise ValueError("time grid must start at 0")
    dt = float(t_grid[1] - t_grid[0])
    if dt <= 0 or not np.allclose(np.diff(t_grid), dt, rtol=1e-9, atol=1e-12):
        raise ValueError("HEOM propagation requires a uniform time grid")
    return dt


def heom_propagate_grid(
    model: ModelParams,
    coupling: CouplingOperator,
    rho0: np.ndarray,
    t_grid,
    settings: HeomSettings | None = None,
    *,
    backend: str = "auto",
) -> Trajectory:
    """Propagate onto a uniform output grid using converged settings.

    When no settings are given they are converged first (see
    converge_settings); the chosen values travel in the trajectory metadata.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dt = _uniform_spacing(t_grid)
    if settings is None:
        settings = converge_settings(model, coupling, rho0, t_grid, backend=backend)
    config = HeomConfig(
        model=model,
        coupling=coupling,
        depth=settings.depth,
        step=dt / settings.substeps,
        horizon=float(t_grid[-1]),
        rho0=rho0,
    )
    traj = heom_propagate(config, output_stride=settings.substeps, backend=backend)
    traj.meta["substeps"] = settings.substeps
    traj.meta.update({k: v for k, v in settings.diagnostics.items()})
    return traj


def _sup_distance(a: Trajectory, b: Trajectory) -> float:
    return float(np.max(np.abs(a.values - b.values)))


def converge_settings(
    model: ModelParams,
    coupling: CouplingOperator,
    rho0: np.ndarray,
    t_grid,
    *,
    depth_tol: float = 1e-6,
    step_tol: float = 1e-8,
    max_depth: int = DEFAULT_MAX_DEPTH,
    initial_substeps: int | None = None,
    backend: str = "auto",
) -> HeomSettings:
    """Choose truncation depth and step by successive refinement.

    Depth climbs 1, 5, 9, ... until the top-level trajectory moves by less
    than depth_tol (sup norm) under a depth + 4 refinement; the step is then
    halved until a further halving moves the trajectory by less than
    step_tol.  Raises ConvergenceError listing the last delta when the
    ladder is exhausted.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dt = _uniform_spacing(t_grid)
    if initial_substeps is None:
        initial_substeps = max(1, math.ceil(dt / default_step(model)))

    def run(depth: int, substeps: int) -> Trajectory:
        config = HeomConfig(
            model=model,
            coupling=coupling,
            depth=depth,
            step=dt / substeps,
            horizon=float(t_grid[-1]),
            rho0=rho0,
        )
        return heom_propagate(config, output_stride=substeps, backend=backend)

    depth_ladder: list[tuple[int, float]] = []
    depth = None
    prev = run(1, initial_substeps)
    prev_depth = 1
    while prev_depth + DEPTH_STRIDE <= max_depth:
        cand = prev_depth + DEPTH_STRIDE
        cur = run(cand, initial_substeps)
        depth_delta = _sup_distance(prev, cur)
        depth_ladder.append((prev_depth, depth_delta))
        if depth_delta < depth_tol:
            depth = prev_depth
            break
        prev, prev_depth = cur, cand
    if depth is None:
        raise ConvergenceError(
            f"hierarchy depth did not converge by N = {max_depth}: "
            f"last depth delta {depth_ladder[-1][1]:.3e} (tolerance {depth_tol:g})"
        )

    step_ladder: list[tuple[int, float]] = []
    substeps = initial_substeps
    chosen = None
    base = run(depth, substeps)
    for _ in range(8):
        finer = run(depth, substeps * 2)
        step_delta = _sup_distance(base, finer)
        step_ladder.append((substeps, step_delta))
        if step_delta < step_tol:
            chosen = substeps
            break
        base, substeps = finer, substeps * 2
    if chosen is None:
        raise ConvergenceError(
            f"step refinement did not converge: last delta {step_ladder[-1][1]:.3e} "
            f"(tolerance {step_tol:g})"
        )
    diagnostics = {
        "depth_delta": depth_ladder[-1][1],
        "step_delta": step_ladder[-1][1],
        "depth_ladder": depth_ladder,
        "step_ladder": step_ladder,
    }
    return HeomSettings(depth=depth, substeps=chosen, diagnostics=diagnostics)


def heom_converged_propagate(
    model: ModelParams,
    coupling: CouplingOperator,
    rho0: np.ndarray,
    t_grid,
    *,
    depth_tol: float = 1e-6,
    step_tol: float = 1e-8,
    max_depth: int = DEFAULT_MAX_DEPTH,
    backend: str = "auto",
) -> Trajectory:
    """Convergence-controlled propagation; chosen (depth, step) and the
    final refinement deltas are reported in the trajectory metadata."""
    settings = converge_settings(
        model,
        coupling,
        rho0,
        t_grid,
        depth_tol=depth_tol,
        step_tol=step_tol,
        max_depth=max_depth,
        backend=backend,
    )
    return heom_propagate_grid(model, coupling, rho0, t_grid, settings, backend=backend)
