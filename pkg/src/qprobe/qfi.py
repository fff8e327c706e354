"""Quantum Fisher information and the finite-difference estimation pipeline.

Two equivalent single-parameter QFI evaluations are provided for a qubit:
one from the eigendecomposition of the state, one from the Bloch vector.
They share no machinery, so their agreement on random states is a real
cross-check rather than a tautology.  The pipeline encodes the tunneling
frequency by propagation, differentiates the Bloch trajectory with a
five-point central stencil, and applies the Bloch-form QFI per time point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gbe, heom, rwa
from .core import (
    PERPENDICULAR_Z,
    CouplingOperator,
    ModelParams,
    NumericsError,
    Trajectory,
    coupling_for,
    hermiticity_residual,
    validate_density,
)

#: Eigenvalues below this are treated as outside the support of the state.
RANK_TOL = 1e-10
#: Below this value of (1 - |r|^2) the state counts as pure and the
#: mixed-state correction term is dropped.
PURITY_GUARD = 1e-12
#: Relative step of the derivative stencil.
DEFAULT_EPS_RATIO = 1e-5


class StencilNoiseWarning(UserWarning):
    """Finite-difference noise estimate is a noticeable fraction of the QFI."""


def qfi_eigen(rho: np.ndarray, drho: np.ndarray) -> float:
    """QFI from the eigendecomposition of the state.

    The three contributions are the classical Fisher information of the
    spectrum, the derivative norm of the eigenvectors, and the cross term
    that subtracts the non-extractable part.  For a qubit the two vector
    sums combine exactly into 4|<0|drho|1>|^2 / (xi_0 + xi_1), which is
    also their finite limit at spectral degeneracy.  Eigenvalues below
    RANK_TOL are excluded from the spectrum sum.
    """
    rho = validate_density(rho, "state")
    drho = np.asarray(drho, dtype=complex)
    if drho.shape != (2, 2):
        raise ValueError(f"state derivative must be 2x2, got shape {drho.shape}")
    res = hermiticity_residual(drho)
    if res > 1e-8:
        raise ValueError(f"state derivative is not Hermitian (residual {res:.3e})")
    if abs(np.trace(drho)) > 1e-10:
        raise ValueError("state derivative must be traceless (trace of a derivative)")
    xi, vecs = np.linalg.eigh(rho)
    m = vecs.conj().T @ drho @ vecs  # matrix elements in the eigenbasis
    value = 0.0
    for ell in range(2):
        if xi[ell] > RANK_TOL:
            value += m[ell, ell].real ** 2 / xi[ell]
    pair_weight = xi[0] + xi[1]
    if pair_weight > RANK_TOL:
        value += 4.0 * abs(m[0, 1]) ** 2 / pair_weight
    return float(value)


def qfi_bloch(r, dr) -> float:
    """QFI from a Bloch vector and its parameter derivative.

    F = |dr|^2 + (r . dr)^2 / (1 - |r|^2); for pure states (|r| = 1 within
    tolerance) the second term is dropped.
    """
    r = np.asarray(r, dtype=float)
    dr = np.asarray(dr, dtype=float)
    if r.shape != (3,) or dr.shape != (3,):
        raise ValueError("Bloch vector and derivative must each have 3 components")
    n2 = float(r @ r)
    if n2 > 1.0 + 2e-9:
        raise ValueError(f"Bloch norm {np.sqrt(n2)} exceeds 1 (unphysical)")
    value = float(dr @ dr)
    gap = 1.0 - n2
    if gap >= PURITY_GUARD:
        value += float(r @ dr) ** 2 / gap
    return value


def qfi_bloch_many(rs: np.ndarray, drs: np.ndarray) -> np.ndarray:
    """Vectorized qfi_bloch over (nt, 3) trajectories."""
    n2 = np.einsum("ti,ti->t", rs, rs)
    if np.any(n2 > 1.0 + 2e-9):
        worst = float(np.sqrt(n2.max()))
        raise ValueError(f"Bloch norm {worst} exceeds 1 (unphysical)")
    value = np.einsum("ti,ti->t", drs, drs)
    gap = 1.0 - n2
    mixed = gap >= PURITY_GUARD
    dot = np.einsum("ti,ti->t", rs, drs)
    value = value + np.where(mixed, dot**2 / np.where(mixed, gap, 1.0), 0.0)
    return value


# Five-point central first-derivative weights at offsets (-2, -1, +1, +2)*eps.
_STENCIL_OFFSETS = (2.0, 1.0, -1.0, -2.0)
_STENCIL_WEIGHTS = (-1.0, 8.0, -8.0, 1.0)


def finite_diff(f, theta: float, eps: float | None = None):
    """Five-point central derivative of f at theta; exact through quartics.

    The default step is |theta| * 1e-5; a zero theta therefore requires an
    explicit eps.  f may return scalars or arrays (differentiated
    componentwise).
    """
    if eps is None:
        if theta == 0.0:
            raise ValueError("theta = 0 requires an explicit eps")
        eps = abs(theta) * DEFAULT_EPS_RATIO
    acc = None
    for offset, weight in zip(_STENCIL_OFFSETS, _STENCIL_WEIGHTS):
        term = weight * np.asarray(f(theta + offset * eps))
        acc = term if acc is None else acc + term
    out = acc / (12.0 * eps)
    if isinstance(out, np.ndarray):
        if out.ndim:
            return out
        value = out[()]
        return float(value) if isinstance(value, (float, np.floating)) else value
    return out  # non-numpy scalar types (e.g. arbitrary precision) pass through


def cramer_rao_bound(fisher: float, repetitions: int = 1) -> float:
    """Smallest achievable root-mean-square error, 1/sqrt(nu * F)."""
    if fisher <= 0.0:
        raise ValueError(f"Fisher information must be > 0, got {fisher}")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    return 1.0 / np.sqrt(repetitions * fisher)


@dataclass(frozen=True)
class QfiSample:
    """One QFI evaluation: time, value, producing engine, stencil step."""

    t: float
    value: float
    method: str
    eps: float

    def __post_init__(self):
        if self.value < -1e-9:
            raise NumericsError(
                f"QFI {self.value} at t={self.t} is negative beyond round-off"
            )


ENGINES = ("heom", "gbe", "rwa")


def _propagate_bloch(
    engine: str,
    model: ModelParams,
    coupling_op: CouplingOperator,
    rho0: np.ndarray,
    t_grid: np.ndarray,
    heom_settings: "heom.HeomSettings | None",
) -> np.ndarray:
    if engine == "rwa":
        if coupling_op.kind != PERPENDICULAR_Z:
            raise ValueError("rwa engine supports perpendicular_z coupling only")
        traj = rwa.rwa_propagate(rho0, t_grid, model.delta, model.coupling, model.gamma_env)
        return traj.values
    if engine == "gbe":
        if coupling_op.kind != PERPENDICULAR_Z:
            raise ValueError("gbe engine supports perpendicular_z coupling only")
        from .core import bloch_from_density

        traj = gbe.gbe_propagate(
            bloch_from_density(rho0), t_grid, model.delta, model.coupling, model.gamma_env
        )
        return traj.values
    if engine == "heom":
        traj = heom.heom_propagate_grid(model, coupling_op, rho0, t_grid, heom_settings)
        return traj.as_bloch().values
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


def qfi_via_solver(
    engine: str,
    model: ModelParams,
    t_grid,
    rho0: np.ndarray,
    *,
    coupling_kind: str = PERPENDICULAR_Z,
    eps: float | None = None,
    heom_settings: "heom.HeomSettings | None" = None,
    noise_warn_fraction: float = 0.01,
) -> list[QfiSample]:
    """QFI of the tunneling frequency along a trajectory.

    Runs the chosen engine at delta and delta +- eps, +- 2 eps on a shared
    time grid, differentiates the Bloch vector with the five-point stencil
    and evaluates the Bloch-form QFI.  All solver discretization settings
    are pinned across the five runs so discretization error cancels in the
    differences; for the HEOM engine the settings are converged once at the
    central delta unless given explicitly.

    A warning is issued when the disagreement between the five-point and
    three-point derivative estimates shifts the QFI by more than
    noise_warn_fraction of its peak.
    """
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
    t_grid = np.asarray(t_grid, dtype=float)
    rho0 = validate_density(rho0, "initial state")
    if eps is None:
        eps = model.delta * DEFAULT_EPS_RATIO
    coupling_op = coupling_for(model, coupling_kind)

    if engine == "heom" and heom_settings is None:
        heom_settings = heom.converge_settings(model, coupling_op, rho0, t_grid)

    def run(delta: float) -> np.ndarray:
        shifted = ModelParams(delta, model.gamma_env, model.coupling, model.chi)
        return _propagate_bloch(engine, shifted, coupling_op, rho0, t_grid, heom_settings)

    center = run(model.delta)
    plus2, plus1 = run(model.delta + 2 * eps), run(model.delta + eps)
    minus1, minus2 = run(model.delta - eps), run(model.delta - 2 * eps)

    dr5 = (-plus2 + 8.0 * plus1 - 8.0 * minus1 + minus2) / (12.0 * eps)
    dr3 = (plus1 - minus1) / (2.0 * eps)

    values = qfi_bloch_many(center, dr5)
    alt = qfi_bloch_many(center, dr3)
    scale = float(np.max(values)) if values.size else 0.0
    if scale > 0.0:
        noise = float(np.max(np.abs(values - alt)))
        if noise > noise_warn_fraction * scale:
            warnings.warn(
                f"stencil noise estimate {noise:.3e} exceeds "
                f"{noise_warn_fraction:.0%} of peak QFI {scale:.3e}",
                StencilNoiseWarning,
                stacklevel=2,
            )
    return [QfiSample(float(t), float(v), engine, eps) for t, v in zip(t_grid, values)]


def qfi_trajectory(samples: list[QfiSample], meta: dict | None = None) -> Trajectory:
    """Pack QFI samples into a scalar trajectory for serialization."""
    times = np.array([s.t for s in samples])
    values = np.array([s.value for s in samples])
    info = {"kind": "qfi"}
    if samples:
        info.update({"engine": samples[0].method, "eps": samples[0].eps})
    if meta:
        info.update(meta)
    return Trajectory(times, values, "qfi", info)
