"""Environment correlation function and its discretized-mode representation.

The environment is characterized by an Ornstein-Uhlenbeck auto-correlation

    alpha(t) = (1/2) * coupling * gamma_env * exp(-gamma_env * t),

whose Fourier representation is a Lorentzian weight over mode frequencies.
The discretization here samples that Lorentzian on a symmetric uniform grid;
negative frequencies are a numerical device that keeps the reconstructed
correlation exactly real, matching the model correlation rather than any
physical spectral density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams, NumericsError

#: Default discretization knobs for the brute-force oracle.  At this band
#: limit the Lorentzian tail truncation dominates the reconstruction error
#: (about 1.3e-2 relative to alpha(0)); the error falls off as 1/W, see
#: tests for the measured curve.
DEFAULT_MODE_COUNT = 2001
DEFAULT_BAND_LIMIT_FACTOR = 50.0


def ou_correlation(t, coupling: float, gamma_env: float):
    """One-sided correlation alpha(t) for t >= 0 (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("correlation is one-sided; negative t rejected")
    out = 0.5 * coupling * gamma_env * np.exp(-gamma_env * t)
    return out if out.ndim else float(out)


def correlation_integral(coupling: float) -> float:
    """Closed form of the full time integral of alpha: coupling / 2."""
    return 0.5 * coupling


def correlation_double_integral(t, coupling: float, gamma_env: float):
    """Iterated integral Phi(t) of alpha over the ordered triangle 0<=t2<=t1<=t.

    Phi(t) = (coupling/2) * (t - (1 - exp(-gamma_env t)) / gamma_env); the
    pure-dephasing coherence decays as exp(-4 Phi(t)).
    """
    t = np.asarray(t, dtype=float)
    out = 0.5 * coupling * (t - (1.0 - np.exp(-gamma_env * t)) / gamma_env)
    return out if out.ndim else float(out)


def markovianity_ratio(params: ModelParams) -> float:
    """gamma_env / coupling; large values mean short-memory (Markovian) noise."""
    if params.coupling == 0.0:
        raise ValueError("markovianity ratio undefined for zero coupling")
    return params.gamma_env / params.coupling


def spectral_weight(omega, coupling: float, gamma_env: float):
    """Lorentzian frequency weight whose Fourier transform is alpha(t)."""
    omega = np.asarray(omega, dtype=float)
    return (coupling * gamma_env**2 / (2.0 * np.pi)) / (omega**2 + gamma_env**2)


@dataclass(frozen=True)
class DiscretizedBath:
    """Finite mode set (frequencies, squared couplings) approximating alpha."""

    frequencies: np.ndarray
    weights: np.ndarray
    band_limit: float

    @property
    def count(self) -> int:
        return len(self.frequencies)

    def reconstruct(self, t) -> np.ndarray:
        """Correlation sum_k g_k^2 exp(-i omega_k t) of the discrete modes."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-1j * np.outer(t, self.frequencies)) @ self.weights

    def reconstruction_error(self, t_grid, coupling: float, gamma_env: float) -> float:
        """Sup-norm mismatch against the target correlation on a time grid."""
        target = ou_correlation(t_grid, coupling, gamma_env)
        return float(np.max(np.abs(self.reconstruct(t_grid) - target)))


def discretize_bath(
    params: ModelParams,
    n_modes: int = DEFAULT_MODE_COUNT,
    band_limit: float | None = None,
    *,
    check_tolerance: float | None = None,
    check_horizon: float | None = None,
) -> DiscretizedBath:
    """Sample the Lorentzian weight on a uniform grid over [-W, W].

    Weights are spectral_weight(omega_k) * d_omega.  When check_tolerance is
    given, the reconstruction is compared against alpha on
    [0, check_horizon or 5/gamma_env] and a diagnostic error naming the grid
    is raised if the sup error exceeds it.
    """
    if n_modes < 2:
        raise ValueError(f"need at least 2 modes for a frequency grid, got {n_modes}")
    if band_limit is None:
        band_limit = DEFAULT_BAND_LIMIT_FACTOR * params.gamma_env
    if band_limit <= 0.0:
        raise ValueError(f"band limit must be > 0, got {band_limit}")
    freqs = np.linspace(-band_limit, band_limit, n_modes)
    d_omega = freqs[1] - freqs[0]
    weights = spectral_weight(freqs, params.coupling, params.gamma_env) * d_omega
    bath = DiscretizedBath(frequencies=freqs, weights=weights, band_limit=band_limit)
    if check_tolerance is not None:
        horizon = check_horizon if check_horizon is not None else 5.0 / params.gamma_env
        t_grid = np.linspace(0.0, horizon, 512)
        err = bath.reconstruction_error(t_grid, params.coupling, params.gamma_env)
        if err > check_tolerance:
            raise NumericsError(
                f"bath reconstruction error {err:.3e} exceeds {check_tolerance:.3e} "
                f"for K={n_modes}, W={band_limit:g}; increase the mode count or "
                f"band limit"
            )
    return bath
