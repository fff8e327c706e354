import math

import numpy as np
import pytest

from qprobe.bath import discretize_bath
from qprobe.core import (
    HADAMARD,
    MIXED,
    PERPENDICULAR_Z,
    ModelParams,
    coupling_operator,
    density_from_bloch,
)
from qprobe.gbe import kernel_laplace
from qprobe.heom import heom_propagate_grid
from qprobe.oracles import (
    dephasing_coherence,
    few_mode_rwa_survival,
    few_mode_schrodinger,
    lindblad_generator,
    lindblad_propagate,
    validate_trajectory_states,
)
from qprobe.rwa import decay_factor


def test_lindblad_free_precession():
    t = np.linspace(0.0, 10.0, 101)
    traj = lindblad_propagate([0.0, 0.0, 1.0], t, 1.0, 0.0)
    assert traj.values[:, 1] == pytest.approx(-np.sin(t), abs=1e-12)
    assert traj.values[:, 2] == pytest.approx(np.cos(t), abs=1e-12)


def test_lindblad_transverse_decay_closed_form():
    # Without tunneling, the x component closes on itself: exp(-2 Gamma t).
    t = np.linspace(0.0, 5.0, 51)
    traj = lindblad_propagate([1.0, 0.0, 0.0], t, 1e-12, 0.3)
    assert traj.values[:, 0] == pytest.approx(np.exp(-0.6 * t), abs=1e-9)
    assert np.max(np.abs(traj.values[:, 1:])) < 1e-9


def test_lindblad_rate_matches_kernel_integral():
    # The generator's 2 Gamma transverse rate equals the full time integral
    # of the memory kernels (their Laplace transform at 0), evaluated in the
    # short-memory limit for the tunneling-dressed kernel.
    coupling = 0.17
    gen = lindblad_generator(1.0, coupling)
    a_hat, b_hat = kernel_laplace(0.0, 1.0, coupling, 1e8)
    assert -gen[1, 1] == pytest.approx(b_hat.real, rel=1e-12)
    assert -gen[0, 0] == pytest.approx(a_hat.real, rel=1e-7)


def test_dephasing_coherence_anchors():
    assert dephasing_coherence(0.0, 0.1, 1.0) == 1.0
    # hand-quadrature value at t = 1: exp(-0.2 * e^{-1})
    assert dephasing_coherence(1.0, 0.1, 1.0) == pytest.approx(
        math.exp(-0.2 * math.exp(-1.0)), rel=1e-12
    )


def test_dephasing_coherence_memoryless_limit():
    t = np.linspace(0.0, 5.0, 21)
    assert dephasing_coherence(t, 0.1, 1e9) == pytest.approx(np.exp(-0.2 * t), rel=1e-8)


def test_dephasing_coherence_is_monotone():
    t = np.linspace(0.0, 40.0, 400)
    values = dephasing_coherence(t, 0.2, 0.05)
    assert np.all(np.diff(values) <= 0.0)
    with pytest.raises(ValueError):
        dephasing_coherence(-1.0, 0.1, 1.0)


def test_few_mode_free_probe_ignores_modes():
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.0)
    bath = discretize_bath(model, n_modes=21, band_limit=10.0)
    grid = np.linspace(0.0, 5.0, 26)
    traj = few_mode_schrodinger(bath, coupling_operator(PERPENDICULAR_Z), model, grid)
    z = traj.as_bloch().values[:, 2]
    assert z == pytest.approx(np.cos(grid), abs=1e-9)
    validate_trajectory_states(traj)


def test_few_mode_norm_and_metadata():
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.05)
    bath = discretize_bath(model, n_modes=41, band_limit=10.0)
    grid = np.linspace(0.0, 2.0, 11)
    traj = few_mode_schrodinger(bath, coupling_operator(PERPENDICULAR_Z), model, grid)
    assert traj.meta["modes"] == 41
    assert traj.meta["recurrence_time"] == pytest.approx(2 * np.pi / 0.5)
    traces = traj.values[:, 0, 0] + traj.values[:, 1, 1]
    assert np.max(np.abs(traces - 1.0)) < 1e-8


def test_few_mode_refuses_oversized_spaces():
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(model, n_modes=2001, band_limit=20.0)
    with pytest.raises(ValueError, match="reduce the mode count"):
        few_mode_schrodinger(
            bath, coupling_operator(PERPENDICULAR_Z), model,
            np.linspace(0.0, 1.0, 5), occupation_cap=2,
        )
    with pytest.raises(ValueError, match="caps above 2"):
        few_mode_schrodinger(
            bath, coupling_operator(PERPENDICULAR_Z), model,
            np.linspace(0.0, 1.0, 5), occupation_cap=3,
        )


def test_few_mode_dephasing_agrees_with_closed_form():
    # Weak-coupling short-horizon run where a two-quantum truncation holds.
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(model, n_modes=161, band_limit=12.0)
    grid = np.linspace(0.0, 2.0, 21)
    traj = few_mode_schrodinger(bath, coupling_operator(MIXED, 0.0), model, grid, occupation_cap=2)
    pm = np.einsum("ij,tjk,kl->til", HADAMARD, traj.values, HADAMARD)
    coherence = 2.0 * np.abs(pm[:, 0, 1])
    assert np.max(np.abs(coherence - dephasing_coherence(grid, 0.1, 1.0))) < 1e-3


def test_few_mode_survival_matches_decay_factor():
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(model, n_modes=200, band_limit=50.0)
    grid = np.linspace(0.0, 5.0, 51)
    amplitude = few_mode_rwa_survival(bath, grid)
    assert np.max(np.abs(amplitude.imag)) < 1e-12  # symmetric spectrum
    assert np.max(np.abs(amplitude - decay_factor(grid, 0.1, 1.0))) < 1e-3


def test_few_mode_validates_heom_in_transversal_regime():
    # No closed form exists for transversal coupling; the truncated wave
    # function is the reference.  Its truncation error shrinks with the
    # occupation cap, and the exact hierarchy sits inside that shrinking
    # envelope.
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(model, n_modes=161, band_limit=15.0)
    grid = np.linspace(0.0, 5.0, 26)
    cop = coupling_operator(PERPENDICULAR_Z)
    heom_z = heom_propagate_grid(model, cop, density_from_bloch([0, 0, 1.0]), grid).as_bloch().values[:, 2]
    gaps = {}
    for cap in (1, 2):
        traj = few_mode_schrodinger(bath, cop, model, grid, occupation_cap=cap)
        gaps[cap] = np.max(np.abs(traj.as_bloch().values[:, 2] - heom_z))
    assert gaps[2] < gaps[1]
    assert gaps[2] < 5e-3


def test_few_mode_validates_heom_for_mixed_coupling():
    # The mixed dephasing/relaxation channel has no analytic solution at
    # all; the truncated wave function is the only independent reference.
    # The mixed operator pumps quanta faster than the transversal one
    # (|S|^2 = 1 + chi^2), so the window is kept where a two-quantum
    # truncation is faithful.
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1, chi=0.75)
    cop = coupling_operator(MIXED, 0.75)
    bath_modes = discretize_bath(model, n_modes=161, band_limit=15.0)
    grid = np.linspace(0.0, 3.0, 21)
    ref = heom_propagate_grid(model, cop, density_from_bloch([0, 0, 1.0]), grid).as_bloch().values
    gaps = {}
    for cap in (1, 2):
        traj = few_mode_schrodinger(bath_modes, cop, model, grid, occupation_cap=cap)
        gaps[cap] = float(np.max(np.abs(traj.as_bloch().values - ref)))
    assert gaps[2] < gaps[1] / 3.0
    assert gaps[2] < 1e-2


def test_few_mode_grid_validation():
    model = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(model, n_modes=11, band_limit=5.0)
    cop = coupling_operator(PERPENDICULAR_Z)
    with pytest.raises(ValueError, match="start at 0"):
        few_mode_schrodinger(bath, cop, model, np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="uniform"):
        few_mode_schrodinger(bath, cop, model, np.array([0.0, 0.1, 0.5]))
