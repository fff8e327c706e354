"""Closed-form reduced dynamics under the rotating-wave approximation.

For purely transversal coupling at zero temperature the excitation-conserving
(rotating-wave) model is exactly solvable: the state in the tunneling
eigenbasis evolves through a single real decay factor

    G(t) = exp(-gamma t / 2) [cosh(Omega t / 2) + (gamma/Omega) sinh(Omega t / 2)],
    Omega = sqrt(gamma^2 - 2 gamma Gamma),

which is the vacuum survival amplitude of the upper tunneling level.  Omega
is imaginary for gamma < 2 Gamma; the decay factor then oscillates through
zero (collapse and revival).  Everything here is evaluated with complex
arithmetic so no regime branching is needed.
"""

from __future__ import annotations

import numpy as np

from .core import HADAMARD, Trajectory, bloch_many, validate_density

#: Below this |Omega t| the hyperbolic bracket is evaluated by series to avoid
#: the removable 0/0 at Omega = 0.
_SERIES_CUTOFF = 1e-6


def decay_factor(t, coupling: float, gamma_env: float):
    """Survival-amplitude decay factor G(t); real for all t >= 0.

    Evaluated as the exponential pair
    (1/2)(1 + gamma/Omega) e^{(Omega-gamma)t/2} + (1/2)(1 - gamma/Omega) e^{-(Omega+gamma)t/2},
    whose exponents never have positive real part, so large gamma*t cannot
    overflow.  The critically damped point gamma = 2*coupling (Omega = 0) is
    handled by the series limit exp(-gamma t/2)(1 + gamma t/2).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("decay factor defined for t >= 0")
    if gamma_env <= 0.0:
        raise ValueError(f"gamma_env must be > 0, got {gamma_env}")
    if coupling < 0.0:
        raise ValueError(f"coupling must be >= 0, got {coupling}")
    omega = np.sqrt(complex(gamma_env**2 - 2.0 * gamma_env * coupling))
    x = 0.5 * omega * t  # complex half-argument
    small = np.abs(x) < _SERIES_CUTOFF
    if omega != 0:
        value = 0.5 * (1.0 + gamma_env / omega) * np.exp(x - 0.5 * gamma_env * t) + 0.5 * (
            1.0 - gamma_env / omega
        ) * np.exp(-x - 0.5 * gamma_env * t)
    else:
        value = None
    if value is None or np.any(small):
        # cosh + (gamma/Omega) sinh expanded in x = Omega t / 2
        series = np.exp(-0.5 * gamma_env * t) * (
            1.0 + x**2 / 2.0 + 0.5 * gamma_env * t * (1.0 + x**2 / 6.0)
        )
        value = series if value is None else np.where(small, series, value)
    residue = float(np.max(np.abs(np.asarray(value).imag)))
    if residue > 1e-12 * max(1.0, float(np.max(np.abs(value)))):
        raise AssertionError(f"decay factor acquired imaginary part {residue:.3e}")
    out = np.asarray(value).real
    return out if out.ndim else float(out)


def rwa_state(t: float, rho0: np.ndarray, delta: float, coupling: float, gamma_env: float) -> np.ndarray:
    """Reduced state at time t for an arbitrary physical initial state.

    In the tunneling eigenbasis the upper population scales by G^2, the
    coherence by G * exp(-i delta t), and the lower population absorbs the
    remainder, so the trace is exactly 1 by construction.
    """
    rho0 = validate_density(rho0, "initial state")
    g = decay_factor(t, coupling, gamma_env)
    pm0 = HADAMARD @ rho0 @ HADAMARD  # tunneling eigenbasis
    pm = np.empty((2, 2), dtype=complex)
    pm[0, 0] = pm0[0, 0] * g * g
    pm[0, 1] = pm0[0, 1] * g * np.exp(-1j * delta * t)
    pm[1, 0] = np.conj(pm[0, 1])
    pm[1, 1] = 1.0 - pm[0, 0]
    return HADAMARD @ pm @ HADAMARD


def rwa_propagate(rho0: np.ndarray, t_grid, delta: float, coupling: float, gamma_env: float) -> Trajectory:
    """Bloch trajectory of the closed-form state on an arbitrary time grid."""
    rho0 = validate_density(rho0, "initial state")
    t_grid = np.asarray(t_grid, dtype=float)
    g = np.atleast_1d(decay_factor(t_grid, coupling, gamma_env))
    pm0 = HADAMARD @ rho0 @ HADAMARD
    phase = np.exp(-1j * delta * t_grid)
    states = np.empty((len(t_grid), 2, 2), dtype=complex)
    states[:, 0, 0] = pm0[0, 0] * g * g
    states[:, 0, 1] = pm0[0, 1] * g * phase
    states[:, 1, 0] = np.conj(states[:, 0, 1])
    states[:, 1, 1] = 1.0 - states[:, 0, 0]
    states = np.einsum("ij,tjk,kl->til", HADAMARD, states, HADAMARD)
    return Trajectory(
        t_grid,
        bloch_many(states),
        "bloch",
        {"engine": "rwa", "delta": delta, "coupling": coupling, "gamma_env": gamma_env},
    )


def rwa_qfi(t, delta: float, coupling: float, gamma_env: float):
    """Fisher information t^2 G(t)^2 of the tunneling frequency.

    Valid for the equal-superposition initial state of the tunneling
    eigenstates (the sigma_z-up state); other initial states must go
    through the generic finite-difference pipeline.
    """
    t = np.asarray(t, dtype=float)
    g = decay_factor(t, coupling, gamma_env)
    out = t**2 * np.asarray(g) ** 2
    return out if out.ndim else float(out)
