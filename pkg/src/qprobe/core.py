"""Shared qubit vocabulary: Pauli algebra, Bloch conversions, model parameters.

Conventions fixed here and used by every other module:

* computational basis = eigenbasis of ``sigma_z``;
* ``|+>``, ``|->`` are the eigenvectors of ``sigma_x`` (columns of
  :data:`HADAMARD`), so states in the tunneling eigenbasis are always
  obtained through :data:`HADAMARD` rather than re-derived locally;
* density matrices and Bloch vectors are plain numpy arrays; the helpers
  below validate the physicality invariants (Hermitian, unit trace,
  positive semidefinite, Bloch norm <= 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# Columns are |+> and |->, the sigma_x eigenvectors; HADAMARD is its own
# inverse, so it maps both ways between the computational and |+-> bases.
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)

for _m in (SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY_2, HADAMARD):
    _m.setflags(write=False)

HERMITICITY_TOL = 1e-8
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-9
BLOCH_NORM_TOL = 1e-9


class QProbeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(QProbeError):
    """Invalid experiment configuration or CLI input."""


class NumericsError(QProbeError):
    """A numerical procedure failed or left its validated regime."""


@dataclass(frozen=True)
class ModelParams:
    """Probe and environment parameters.

    delta      tunneling frequency of the qubit (the estimand),
    gamma_env  inverse memory time of the environment correlation,
    coupling   probe-environment coupling strength,
    chi        weight of the parallel component in the mixed coupling
               operator sigma_x + chi * sigma_z.
    """

    delta: float
    gamma_env: float
    coupling: float
    chi: float = 0.0

    def __post_init__(self):
        for name in ("delta", "gamma_env", "coupling", "chi"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.gamma_env <= 0.0:
            raise ValueError(f"gamma_env must be > 0, got {self.gamma_env}")
        if self.coupling < 0.0:
            raise ValueError(f"coupling must be >= 0, got {self.coupling}")

    def hamiltonian(self) -> np.ndarray:
        """Probe Hamiltonian (Delta/2) * sigma_x."""
        return 0.5 * self.delta * SIGMA_X


PERPENDICULAR_Z = "perpendicular_z"
MIXED = "mixed"


@dataclass(frozen=True)
class CouplingOperator:
    """Hermitian probe operator coupled to the environment."""

    matrix: np.ndarray
    kind: str
    chi: float | None = None

    def commutes_with_tunneling(self) -> bool:
        """True when the operator commutes with the probe Hamiltonian.

        This is the pure-dephasing condition: populations in the tunneling
        eigenbasis are then conserved and only coherences decay.
        """
        comm = self.matrix @ SIGMA_X - SIGMA_X @ self.matrix
        return bool(np.max(np.abs(comm)) < 1e-12)


def coupling_operator(kind: str, chi: float | None = None) -> CouplingOperator:
    """Build the probe-side coupling operator.

    ``perpendicular_z`` gives sigma_z (purely transversal to the tunneling
    term, the spin-boson choice); ``mixed`` gives sigma_x + chi * sigma_z,
    which interpolates from pure dephasing (chi = 0) to a mixed
    dephasing/relaxation channel.
    """
    if kind == PERPENDICULAR_Z:
        if chi is not None:
            raise ValueError("perpendicular_z coupling takes no chi")
        matrix = SIGMA_Z.copy()
    elif kind == MIXED:
        if chi is None:
            raise ValueError("mixed coupling requires chi")
        if not np.isfinite(chi):
            raise ValueError(f"chi must be finite, got {chi!r}")
        matrix = SIGMA_X + chi * SIGMA_Z
    else:
        raise ValueError(f"unknown coupling kind {kind!r}")
    matrix.setflags(write=False)
    return CouplingOperator(matrix=matrix, kind=kind, chi=chi)


def coupling_for(params: ModelParams, kind: str = MIXED) -> CouplingOperator:
    """Coupling operator for a parameter record (mixed uses params.chi)."""
    if kind == MIXED:
        return coupling_operator(MIXED, params.chi)
    return coupling_operator(kind)


def hermiticity_residual(rho: np.ndarray) -> float:
    return float(np.max(np.abs(rho - rho.conj().T)))


def validate_density(rho: np.ndarray, context: str = "density matrix") -> np.ndarray:
    """Check the physicality invariants of a 2x2 density matrix.

    Returns the input (as a complex ndarray) on success so calls can be
    chained; raises ValueError naming the violated invariant otherwise.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"{context} must be 2x2, got shape {rho.shape}")
    res = hermiticity_residual(rho)
    if res > HERMITICITY_TOL:
        raise ValueError(f"{context} is not Hermitian (residual {res:.3e})")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"{context} trace deviates from 1 by {abs(tr - 1.0):.3e}")
    eigvals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if eigvals.min() < -POSITIVITY_TOL:
        raise ValueError(
            f"{context} is not positive semidefinite (min eigenvalue {eigvals.min():.3e})"
        )
    return rho


def bloch_from_density(rho: np.ndarray) -> np.ndarray:
    """Pauli expectation values (<sigma_x>, <sigma_y>, <sigma_z>) of a state.

    Rejects non-Hermitian input; the imaginary parts of the traces are
    round-off residue on valid input and are discarded.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected 2x2 matrix, got shape {rho.shape}")
    res = hermiticity_residual(rho)
    if res > HERMITICITY_TOL:
        raise ValueError(f"state is not Hermitian (residual {res:.3e})")
    return np.array(
        [
            np.trace(SIGMA_X @ rho).real,
            np.trace(SIGMA_Y @ rho).real,
            np.trace(SIGMA_Z @ rho).real,
        ]
    )


def density_from_bloch(r) -> np.ndarray:
    """State (1/2)(I + r . sigma) from a Bloch vector r with |r| <= 1."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError(f"Bloch vector must have 3 components, got shape {r.shape}")
    norm = float(np.linalg.norm(r))
    if norm > 1.0 + BLOCH_NORM_TOL:
        raise ValueError(f"Bloch vector norm {norm} exceeds 1 (unphysical)")
    return 0.5 * (IDENTITY_2 + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z)


def bloch_many(rhos: np.ndarray) -> np.ndarray:
    """Vectorized Bloch conversion for an (nt, 2, 2) stack of states."""
    rhos = np.asarray(rhos, dtype=complex)
    out = np.empty(rhos.shape[:-2] + (3,), dtype=float)
    out[..., 0] = (rhos[..., 0, 1] + rhos[..., 1, 0]).real
    out[..., 1] = (1j * (rhos[..., 0, 1] - rhos[..., 1, 0])).real
    out[..., 2] = (rhos[..., 0, 0] - rhos[..., 1, 1]).real
    return out


@dataclass(frozen=True)
class Trajectory:
    """Time grid plus per-time payload with provenance metadata.

    kind is one of ``bloch`` (values shaped (nt, 3)), ``density``
    ((nt, 2, 2)) or ``qfi`` ((nt,)).
    """

    times: np.ndarray
    values: np.ndarray
    kind: str
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("bloch", "density", "qfi"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")

    def as_bloch(self) -> "Trajectory":
        """Bloch-vector view of a density trajectory (identity on bloch)."""
        if self.kind == "bloch":
            return self
        if self.kind != "density":
            raise ValueError(f"cannot convert {self.kind!r} trajectory to Bloch form")
        return Trajectory(self.times, bloch_many(self.values), "bloch", dict(self.meta))

    def component(self, i: int) -> np.ndarray:
        if self.kind != "bloch":
            raise ValueError("component() requires a bloch trajectory")
        return self.values[:, i]
