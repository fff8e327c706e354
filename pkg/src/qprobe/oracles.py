"""Independent reference solutions used only for validation.

Nothing here shares numerical machinery with the engines it validates:
the Lindblad propagation uses exact matrix exponentials, the pure-dephasing
coherence is a closed form, and the few-mode simulation propagates the full
probe+modes wave function with a sparse Krylov exponential.  Agreement with
an engine is therefore evidence, not tautology.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .bath import DiscretizedBath
from .core import (
    CouplingOperator,
    ModelParams,
    Trajectory,
    validate_density,
)

#: Refuse few-mode runs whose truncated Hilbert space exceeds this dimension.
MAX_FEW_MODE_DIM = 400_000


def lindblad_generator(delta: float, coupling: float) -> np.ndarray:
    """Bloch-space generator of the memoryless (delta-correlated) limit.

    The dissipator is Gamma (sigma_z rho sigma_z - rho): transverse
    components decay at 2*Gamma, the population difference is undamped
    except through its precession coupling.  The 2*Gamma rate equals the
    full time integral of the memory kernels, which removes the boundary
    ambiguity of a delta-function correlation.
    """
    return np.array(
        [
            [-2.0 * coupling, 0.0, 0.0],
            [0.0, -2.0 * coupling, -delta],
            [0.0, delta, 0.0],
        ]
    )


def lindblad_propagate(r0, t_grid, delta: float, coupling: float) -> Trajectory:
    """Exact solution of the Lindblad-limit Bloch equation.

    Matrix exponentials of the 3x3 generator per time point; no time
    stepping is involved, so there is no integrator error to tune.
    """
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (3,):
        raise ValueError("initial Bloch vector must have 3 components")
    t_grid = np.asarray(t_grid, dtype=float)
    gen = lindblad_generator(delta, coupling)
    values = np.empty((len(t_grid), 3))
    for i, t in enumerate(t_grid):
        values[i] = scipy.linalg.expm(gen * t) @ r0
    return Trajectory(
        t_grid,
        values,
        "bloch",
        {"engine": "lindblad-oracle", "delta": delta, "coupling": coupling},
    )


def dephasing_coherence(t, coupling: float, gamma_env: float):
    """Coherence magnitude ratio for a coupling that commutes with the probe.

    exp(-2 Gamma (t - (1 - e^{-gamma t}) / gamma)): the exact second-cumulant
    decay exp(-4 Phi(t)) of the off-diagonal element between coupling
    eigenvalues +-1, with Phi the iterated correlation integral.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("dephasing coherence defined for t >= 0")
    out = np.exp(-2.0 * coupling * (t - (1.0 - np.exp(-gamma_env * t)) / gamma_env))
    return out if out.ndim else float(out)


def _bath_basis(n_modes: int, cap: int) -> list[tuple[int, ...]]:
    """Occupation tuples with total quanta <= cap, lowest totals first."""
    if cap == 0:
        return [()]
    states: list[tuple[int, ...]] = [()]
    singles = [(k,) for k in range(n_modes)]
    states += singles
    if cap >= 2:
        states += [(k, l) for k in range(n_modes) for l in range(k, n_modes)]
    if cap >= 3:
        raise ValueError("occupation caps above 2 are not supported")
    return states


def _mode_occupations(state: tuple[int, ...], n_modes: int) -> np.ndarray:
    occ = np.zeros(n_modes, dtype=int)
    for k in state:
        occ[k] += 1
    return occ


def _bath_operators(bath: DiscretizedBath, cap: int):
    """Sparse bath Hamiltonian and displacement operator on the capped basis.

    Basis states are multisets of excited-mode labels; the displacement
    B = sum_k g_k (b_k^dagger + b_k) connects states whose totals differ by
    one, with the usual sqrt(occupation) bosonic amplitudes.
    """
    n_modes = bath.count
    basis = _bath_basis(n_modes, cap)
    index = {s: i for i, s in enumerate(basis)}
    g = np.sqrt(bath.weights)

    diag = np.array(
        [float(np.sum(bath.frequencies[list(s)])) for s in basis]
    )
    h_bath = scipy.sparse.diags(diag).tocsr()

    rows, cols, vals = [], [], []
    for i, s in enumerate(basis):
        occ = _mode_occupations(s, n_modes)
        total = len(s)
        if total >= cap:
            continue
        for k in range(n_modes):
            raised = tuple(sorted(s + (k,)))
            j = index[raised]
            amp = g[k] * np.sqrt(occ[k] + 1.0)
            rows.append(j)
            cols.append(i)
            vals.append(amp)
    raise_op = scipy.sparse.coo_matrix(
        (vals, (rows, cols)), shape=(len(basis), len(basis))
    ).tocsr()
    displacement = raise_op + raise_op.T
    return basis, h_bath, displacement


def _check_dimension(dim: int, n_modes: int, cap: int) -> None:
    if dim > MAX_FEW_MODE_DIM:
        raise ValueError(
            f"truncated Hilbert space has dimension {dim} > {MAX_FEW_MODE_DIM}; "
            f"reduce the mode count (K = {n_modes}) or the occupation cap ({cap})"
        )


def few_mode_schrodinger(
    bath: DiscretizedBath,
    coupling_op: CouplingOperator,
    model: ModelParams,
    t_grid,
    occupation_cap: int = 1,
) -> Trajectory:
    """Brute-force unitary propagation of probe plus discretized modes.

    The bath Fock space is truncated at ``occupation_cap`` total quanta
    (1 covers the single-excitation-dominated weak-coupling regime, 2 is
    for strong-coupling spot checks); the reduced probe state is recovered
    by partial trace.  The initial state is the probe's sigma_z-up state
    with the modes in vacuum.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or t_grid[0] != 0.0:
        raise ValueError("time grid must start at 0 with at least two points")
    dt = t_grid[1] - t_grid[0]
    if not np.allclose(np.diff(t_grid), dt):
        raise ValueError("few-mode propagation requires a uniform grid")
    basis, h_bath, displacement = _bath_operators(bath, occupation_cap)
    nb = len(basis)
    _check_dimension(2 * nb, bath.count, occupation_cap)

    eye_b = scipy.sparse.identity(nb, format="csr")
    eye_s = scipy.sparse.identity(2, format="csr")
    h_full = (
        scipy.sparse.kron(scipy.sparse.csr_matrix(model.hamiltonian()), eye_b)
        + scipy.sparse.kron(eye_s, h_bath)
        + scipy.sparse.kron(scipy.sparse.csr_matrix(coupling_op.matrix), displacement)
    ).tocsc()

    psi0 = np.zeros(2 * nb, dtype=complex)
    psi0[0] = 1.0  # probe sigma_z-up, bath vacuum
    psi_t = scipy.sparse.linalg.expm_multiply(
        -1j * h_full, psi0, start=0.0, stop=float(t_grid[-1]), num=len(t_grid), endpoint=True
    )
    norms = np.linalg.norm(psi_t, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-8:
        raise AssertionError(
            f"unitary propagation lost norm by {np.max(np.abs(norms - 1.0)):.3e}"
        )
    amplitudes = psi_t.reshape(len(t_grid), 2, nb)
    states = np.einsum("tib,tjb->tij", amplitudes, amplitudes.conj())
    return Trajectory(
        t_grid,
        states,
        "density",
        {
            "engine": "few-mode-oracle",
            "modes": bath.count,
            "occupation_cap": occupation_cap,
            "recurrence_time": 2.0 * np.pi / (bath.frequencies[1] - bath.frequencies[0]),
        },
    )


def few_mode_rwa_survival(bath: DiscretizedBath, t_grid) -> np.ndarray:
    """Rotating-frame survival amplitude of the upper tunneling level under
    excitation-conserving coupling, single-excitation sector.

    The sector spans the excited probe with vacuum plus one quantum in any
    mode (dimension K + 1); propagation is by exact diagonalization of the
    Hermitian sector Hamiltonian.  The amplitude is computed in the frame
    rotating at the probe splitting, where its memory kernel is the bath
    correlation itself; the splitting contributes only the trivial phase
    e^{-i delta t / 2}, which is not included.  For a symmetric mode grid
    the returned amplitude is real up to round-off and converges to the
    rotating-wave decay factor.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    k = bath.count
    _check_dimension(k + 1, k, 1)
    g = np.sqrt(bath.weights)
    h = np.zeros((k + 1, k + 1))
    h[0, 1:] = g
    h[1:, 0] = g
    idx = np.arange(1, k + 1)
    h[idx, idx] = bath.frequencies
    energies, modes = np.linalg.eigh(h)
    # initial state is basis vector 0, so the survival amplitude is the
    # spectral sum of |<eigenmode|e0>|^2 phases
    weights = np.abs(modes[0, :]) ** 2
    phases = np.exp(-1j * np.outer(t_grid, energies))
    return phases @ weights.astype(complex)


def validate_trajectory_states(traj: Trajectory) -> None:
    """Assert every snapshot of a density trajectory is physical."""
    for i, state in enumerate(traj.values):
        validate_density(state, f"state at t = {traj.times[i]:g}")
