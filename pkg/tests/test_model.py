import math

import numpy as np
import pytest

from spdeavg.errors import ConfigurationError
from spdeavg.model import (dissipativity_margin, make_fixture,
                           validate_assumptions)
from spdeavg.noise import NoiseStream, make_noise_spec
from spdeavg.spectral import SpectralField

PI = math.pi
N = 16


def test_kappa_arithmetic_linear():
    c = make_fixture("linear_ou", N, PI, gamma=0.5, sigma1=0.1, sigma2=0.5)
    assert dissipativity_margin(c, PI) == pytest.approx(0.75)


def test_kappa_fatal_when_nonpositive():
    c = make_fixture("linear_ou", N, PI, gamma=1.0, sigma1=0.1, sigma2=0.5)
    assert dissipativity_margin(c, PI) == pytest.approx(-0.25)
    report = validate_assumptions(c, PI, n_modes=N, probes=8,
                                  stream=NoiseStream(0, (0, 9)))
    assert report.fatal


def test_linear_ou_no_violations():
    c = make_fixture("linear_ou", N, PI, gamma=0.5, sigma1=0.1, sigma2=0.5)
    report = validate_assumptions(c, PI, n_modes=N, probes=64,
                                  stream=NoiseStream(1, (0, 9)))
    assert report.violations == []
    assert not report.fatal
    assert report.kappa == pytest.approx(0.75)


def test_linear_ou_drift_example():
    # g(x, y) = -gamma*y + x: at y = 0 the fast drift equals x
    c = make_fixture("linear_ou", 4, PI, gamma=0.5)
    x = SpectralField.unit_mode(1, 4, PI)
    y = SpectralField.zeros(4, PI)
    out = c.drift_fast(x, y)
    np.testing.assert_allclose(out.coeffs, x.coeffs)


def test_constant_diffusion_has_zero_empirical_lipschitz():
    c = make_fixture("linear_ou", N, PI)
    report = validate_assumptions(c, PI, n_modes=N, probes=32,
                                  stream=NoiseStream(2, (0, 9)))
    assert report.estimated["b_fast_lipschitz"] <= 1e-12
    assert report.estimated["b_slow_lipschitz"] <= 1e-12
    assert report.estimated["sigma_lipschitz"] <= 1e-12


def test_linear_ou_empirical_fast_lipschitz_matches_gamma():
    gamma = 0.5
    c = make_fixture("linear_ou", N, PI, gamma=gamma)
    report = validate_assumptions(c, PI, n_modes=N, probes=64,
                                  stream=NoiseStream(3, (0, 9)))
    assert report.estimated["g_fast_lipschitz"] == pytest.approx(gamma, rel=0.01)


def test_bounded_fixture_f_is_bounded():
    a = 1.0
    c = make_fixture("bounded_nonlinear", N, PI, a=a, gamma=0.5)
    bound = a * math.sqrt(PI)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        x = rng.standard_normal(N) * rng.uniform(0.1, 5.0)
        y = rng.standard_normal(N) * rng.uniform(0.1, 5.0)
        worst = max(worst, float(np.sqrt(np.sum(c.f(x, y) ** 2))))
    assert worst <= bound
    assert c.f_bound == pytest.approx(bound)


def test_bounded_fixture_no_violations():
    c = make_fixture("bounded_nonlinear", N, PI, a=1.0, gamma=0.5)
    report = validate_assumptions(c, PI, n_modes=N, probes=128,
                                  stream=NoiseStream(4, (0, 9)))
    assert report.violations == []
    assert report.kappa == pytest.approx(2.0 - 1.0 - 0.25)


def test_probe_estimates_never_exceed_declared():
    # ties the declared constants to the code for both fixtures
    for name in ("linear_ou", "bounded_nonlinear"):
        c = make_fixture(name, N, PI)
        report = validate_assumptions(c, PI, n_modes=N, probes=100,
                                      stream=NoiseStream(5, (0, 9)))
        for key, declared in report.declared.items():
            assert report.estimated[key] <= declared * 1.05 + 1e-12, (name, key)


def test_declared_constant_too_small_is_flagged():
    import dataclasses
    c = make_fixture("linear_ou", N, PI, gamma=0.5)
    lying = dataclasses.replace(c, g_fast_lipschitz=0.1)
    report = validate_assumptions(lying, PI, n_modes=N, probes=32,
                                  stream=NoiseStream(6, (0, 9)))
    assert any("g_fast_lipschitz" in v for v in report.violations)


def test_unknown_fixture_rejected():
    with pytest.raises(ConfigurationError):
        make_fixture("cubic")
    with pytest.raises(ConfigurationError):
        make_fixture("linear_ou", N, PI, nu=1.0)


def test_derivative_callbacks_match_finite_differences():
    c = make_fixture("bounded_nonlinear", N, PI, a=1.0, gamma=0.5)
    rng = np.random.default_rng(12)
    x, y, h = rng.standard_normal(N), rng.standard_normal(N), rng.standard_normal(N)
    tau = 1e-6
    fd_g = (c.g(x + tau * h, y) - c.g(x, y)) / tau
    np.testing.assert_allclose(c.g_dx(x, y, h), fd_g, atol=1e-5)
    fd_b = (c.b(x, y + tau * h) - c.b(x, y)) / tau
    np.testing.assert_allclose(c.b_dy(x, y, h), fd_b, atol=1e-5)


def test_diagonal_diffusion_shapes_batched():
    c = make_fixture("bounded_nonlinear", N, PI)
    batch = np.zeros((5, N))
    assert c.sigma(batch).shape == (5, N)
    assert c.b(batch, batch).shape == (5, N)
    assert c.f(batch, batch).shape == (5, N)
