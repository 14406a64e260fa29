import math

import numpy as np
import pytest

from spdeavg.coupled import SystemConfig
from spdeavg.model import CoefficientSet, make_fixture
from spdeavg.noise import make_noise_spec
from spdeavg.spectral import SpectralField

PI = math.pi


def zero_coefficients() -> CoefficientSet:
    """All nonlinearities off: the system reduces to free wave + heat flow."""
    def zero2(xc, yc):
        return np.zeros(np.shape(xc))

    def zero1(xc):
        return np.zeros(np.shape(xc))

    return CoefficientSet(
        name="zero", f=zero2, g=zero2, sigma=zero1, b=zero2,
        f_lipschitz=0.0, f_bound=0.0,
        g_slow_lipschitz=0.0, g_fast_lipschitz=0.0,
        b_slow_lipschitz=0.0, b_fast_lipschitz=0.0, sigma_lipschitz=0.0,
        g_dx=lambda xc, yc, hc: np.zeros(np.shape(hc)),
        g_dy=lambda xc, yc, zc: np.zeros(np.shape(zc)),
        b_dx=lambda xc, yc, hc: np.zeros(np.shape(hc)),
        b_dy=lambda xc, yc, zc: np.zeros(np.shape(zc)),
    )


def make_config(coeffs=None, *, n_modes=16, length=PI, epsilon=1e-2,
                t_final=1.0, dt=1e-3, x_mode=1, x_amp=1.0, v_amp=0.0,
                y_amp=0.0, **kwargs) -> SystemConfig:
    if coeffs is None:
        coeffs = make_fixture("linear_ou", n_modes, length)
    noise = kwargs.pop("noise", None) or make_noise_spec("polynomial", n_modes)
    x0 = (SpectralField.unit_mode(x_mode, n_modes, length, x_amp)
          if x_amp else SpectralField.zeros(n_modes, length))
    v0 = (SpectralField.unit_mode(1, n_modes, length, v_amp)
          if v_amp else SpectralField.zeros(n_modes, length))
    y0 = (SpectralField.unit_mode(1, n_modes, length, y_amp)
          if y_amp else SpectralField.zeros(n_modes, length))
    return SystemConfig(
        domain_length=length, n_modes=n_modes, coefficients=coeffs,
        noise=noise, epsilon=epsilon, t_final=t_final, dt=dt,
        initial_position=x0, initial_velocity=v0, initial_fast=y0,
        **kwargs)


@pytest.fixture
def linear_fixture():
    return make_fixture("linear_ou", 16, PI, gamma=0.5, sigma1=0.1, sigma2=0.5)


@pytest.fixture
def bounded_fixture():
    return make_fixture("bounded_nonlinear", 16, PI, a=1.0, gamma=0.5)
