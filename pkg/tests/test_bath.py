import numpy as np
import pytest
from scipy.integrate import quad

from qprobe.bath import (
    correlation_double_integral,
    correlation_integral,
    discretize_bath,
    markovianity_ratio,
    ou_correlation,
    spectral_weight,
)
from qprobe.core import ModelParams, NumericsError


def test_correlation_at_zero_is_half_coupling_times_rate():
    assert ou_correlation(0.0, 0.1, 1.0) == pytest.approx(0.05)


def test_correlation_decays_to_zero():
    assert ou_correlation(1e3, 0.1, 1.0) < 1e-300 or ou_correlation(1e3, 0.1, 1.0) == 0.0


def test_correlation_at_memory_time():
    coupling, gamma = 0.3, 2.0
    assert ou_correlation(1.0 / gamma, coupling, gamma) == pytest.approx(
        coupling * gamma / (2.0 * np.e)
    )


def test_correlation_rejects_negative_time():
    with pytest.raises(ValueError, match="one-sided"):
        ou_correlation(-0.1, 0.1, 1.0)


def test_correlation_is_monotone_decreasing():
    t = np.linspace(0.0, 10.0, 256)
    values = ou_correlation(t, 0.1, 1.0)
    assert np.all(np.diff(values) < 0.0)


@pytest.mark.parametrize(
    "gamma_env,coupling,expected",
    [(1.0, 0.1, 10.0), (0.02, 0.1, 0.2), (0.3, 0.3, 1.0)],
)
def test_markovianity_ratio(gamma_env, coupling, expected):
    params = ModelParams(delta=1.0, gamma_env=gamma_env, coupling=coupling)
    assert markovianity_ratio(params) == pytest.approx(expected)


def test_markovianity_ratio_rejects_zero_coupling():
    with pytest.raises(ValueError):
        markovianity_ratio(ModelParams(delta=1.0, gamma_env=1.0, coupling=0.0))


@pytest.mark.parametrize("coupling,gamma_env", [(0.1, 1.0), (0.25, 0.05), (1.0, 3.0)])
def test_time_integral_of_correlation_is_half_coupling(coupling, gamma_env):
    numeric, _ = quad(lambda t: ou_correlation(t, coupling, gamma_env), 0.0, np.inf)
    assert numeric == pytest.approx(correlation_integral(coupling), rel=1e-10)


@pytest.mark.parametrize("t", [0.3, 1.0, 4.0, 20.0])
def test_double_integral_closed_form_matches_quadrature(t):
    coupling, gamma_env = 0.2, 0.7
    inner = lambda t1: quad(lambda t2: ou_correlation(t1 - t2, coupling, gamma_env), 0.0, t1)[0]
    numeric, _ = quad(inner, 0.0, t, limit=200)
    assert numeric == pytest.approx(
        correlation_double_integral(t, coupling, gamma_env), rel=1e-10
    )


def test_discretize_rejects_degenerate_grid():
    with pytest.raises(ValueError, match="at least 2"):
        discretize_bath(ModelParams(1.0, 1.0, 0.1), n_modes=1)


def test_discretize_zero_coupling_has_zero_weights():
    bath = discretize_bath(ModelParams(1.0, 1.0, 0.0), n_modes=11, band_limit=5.0)
    assert np.all(bath.weights == 0.0)


def test_default_reconstruction_is_tail_limited():
    # At the default band limit (50 / memory time) the truncated Lorentzian
    # tail dominates: the sup error sits near 1.3e-2 * alpha(0) and cannot
    # reach 1e-3 * alpha(0) however many modes are used.
    params = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(params)
    t = np.linspace(0.0, 5.0, 512)
    err = bath.reconstruction_error(t, 0.1, 1.0)
    alpha0 = ou_correlation(0.0, 0.1, 1.0)
    assert err < 2e-2 * alpha0
    assert err > 5e-3 * alpha0  # the tail floor; widen the band to do better


def test_wide_band_reconstruction_reaches_one_permille():
    params = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(params, n_modes=40001, band_limit=1000.0)
    t = np.linspace(0.0, 5.0, 512)
    err = bath.reconstruction_error(t, 0.1, 1.0)
    assert err < 1e-3 * ou_correlation(0.0, 0.1, 1.0)


def test_reconstruction_error_scales_with_band_limit():
    params = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    t = np.linspace(0.0, 5.0, 256)
    errs = []
    for band in (50.0, 200.0, 800.0):
        bath = discretize_bath(params, n_modes=int(2 * band / 0.05) + 1, band_limit=band)
        errs.append(bath.reconstruction_error(t, 0.1, 1.0))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    for ratio in ratios:  # error ~ 1/W
        assert 2.0 < ratio < 8.0


def test_reconstruction_tolerance_diagnostic_names_grid():
    params = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    with pytest.raises(NumericsError, match=r"K=51.*W=50"):
        discretize_bath(params, n_modes=51, band_limit=50.0, check_tolerance=1e-6)


def test_spectral_weight_fourier_pair():
    # Fourier quadrature of the Lorentzian weight against the correlation;
    # the weight is even, so integrate the cosine transform on [0, inf).
    coupling, gamma_env = 0.1, 1.0
    density = lambda w: spectral_weight(w, coupling, gamma_env)
    numeric0, _ = quad(density, -np.inf, np.inf)
    assert numeric0 == pytest.approx(ou_correlation(0.0, coupling, gamma_env), rel=1e-8)
    for t in (0.5, 2.0):
        numeric, _ = quad(density, 0.0, np.inf, weight="cos", wvar=t)
        assert 2.0 * numeric == pytest.approx(ou_correlation(t, coupling, gamma_env), rel=1e-8)


def test_reconstruction_is_real_on_symmetric_grid():
    params = ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1)
    bath = discretize_bath(params, n_modes=201, band_limit=30.0)
    rec = bath.reconstruct(np.linspace(0.0, 3.0, 64))
    assert np.max(np.abs(rec.imag)) < 1e-15
