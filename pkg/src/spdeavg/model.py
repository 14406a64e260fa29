"""Coefficient functions of the coupled system and their declared constants.

A :class:`CoefficientSet` bundles the slow drift f(x, y), the fast drift
g(x, y), and the two diagonal diffusion maps sigma(x) and b(x, y), together
with declared sensitivity bounds:

  * ``f_lipschitz``  -- bound on both directional derivatives of f
  * ``f_bound``      -- sup of ||f|| (may be inf for the linear fixture)
  * ``g_slow_lipschitz`` / ``g_fast_lipschitz`` -- derivative bounds of g
    in the slow and fast argument
  * ``b_slow_lipschitz`` / ``b_fast_lipschitz`` -- same for b, measured in
    the covariance-weighted operator norm
  * ``sigma_lipschitz``

The dissipativity margin

    kappa = 2*alpha_1 - 2*g_fast_lipschitz - b_fast_lipschitz**2

must be positive for the fast dynamics to forget its initial condition
exponentially fast; everything ergodic downstream is gated on it.

Drifts are maps H x H -> H evaluated either mode-wise (linear fixture) or
pointwise on the collocation grid (Nemytskii form); diffusions are per-mode
multiplier sequences, so stochastic integrals stay exact per mode.  All
callables accept coefficient arrays shaped (..., N) so integrators can run
batches of replicas through them at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .noise import NoiseSpec, NoiseStream, make_noise_spec
from .spectral import SpectralField, eigenvalue, grid_to_modes, modes_to_grid

__all__ = [
    "CoefficientSet",
    "AssumptionReport",
    "make_fixture",
    "validate_assumptions",
    "dissipativity_margin",
]

ArrayMap2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
ArrayMap3 = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientSet:
    """Nonlinearities of the coupled system, in batched coefficient form.

    ``f``/``g`` map (x, y) coefficient arrays to drift coefficient arrays;
    ``sigma``/``b`` map state coefficients to per-mode diffusion multipliers.
    The optional derivative callbacks (g_dx, g_dy, b_dx, b_dy) return the
    directional derivatives needed by the first-variation equation.
    """

    name: str
    f: ArrayMap2
    g: ArrayMap2
    sigma: Callable[[np.ndarray], np.ndarray]
    b: ArrayMap2
    f_lipschitz: float
    f_bound: float
    g_slow_lipschitz: float
    g_fast_lipschitz: float
    b_slow_lipschitz: float
    b_fast_lipschitz: float
    sigma_lipschitz: float
    g_dx: ArrayMap3 | None = None
    g_dy: ArrayMap3 | None = None
    b_dx: ArrayMap3 | None = None
    b_dy: ArrayMap3 | None = None
    params: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        for attr in ("f_lipschitz", "g_slow_lipschitz", "g_fast_lipschitz",
                     "b_slow_lipschitz", "b_fast_lipschitz", "sigma_lipschitz"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be nonnegative")
        if self.f_bound < 0:
            raise ValueError("f_bound must be nonnegative (inf allowed)")

    # SpectralField-level convenience wrappers
    def drift_slow(self, x: SpectralField, y: SpectralField) -> SpectralField:
        return x.with_coeffs(self.f(x.coeffs, y.coeffs))

    def drift_fast(self, x: SpectralField, y: SpectralField) -> SpectralField:
        return x.with_coeffs(self.g(x.coeffs, y.coeffs))

    def diffusion_slow(self, x: SpectralField) -> np.ndarray:
        return self.sigma(x.coeffs)

    def diffusion_fast(self, x: SpectralField, y: SpectralField) -> np.ndarray:
        return self.b(x.coeffs, y.coeffs)

    @property
    def has_derivatives(self) -> bool:
        return None not in (self.g_dx, self.g_dy, self.b_dx, self.b_dy)

    def kappa(self, domain_length: float) -> float:
        return dissipativity_margin(self, domain_length)


def dissipativity_margin(coeffs: CoefficientSet, domain_length: float) -> float:
    """2*alpha_1 - 2*L_g - L_b^2 from the declared constants."""
    return (2.0 * eigenvalue(1, domain_length)
            - 2.0 * coeffs.g_fast_lipschitz
            - coeffs.b_fast_lipschitz**2)


def make_fixture(name: str, n_modes: int = 16, domain_length: float = math.pi,
                 **params) -> CoefficientSet:
    """Built-in coefficient sets with closed-form or probe-checkable behavior.

    ``linear_ou(gamma, sigma1, sigma2)``
        f(x, y) = y, g(x, y) = -gamma*y + x, both mode-wise; sigma and b are
        constant diagonals sigma1, sigma2.  The frozen fast dynamics is then
        an independent per-mode mean-reverting process with closed-form
        invariant mean and variance, which makes this the analytic oracle
        throughout the test-suite.  Note f is unbounded (the declared sup is
        inf), a documented deviation tolerated for the oracle's sake; the
        fast-diffusion sensitivity bound is declared as sigma2 so the
        dissipativity margin accounts for the noise amplitude.

    ``bounded_nonlinear(a, gamma, sigma0=0.1, b0=0.5)``
        f(x, y) = a*tanh(x + y) pointwise on the collocation grid,
        g(x, y) = -gamma*y + tanh(x) with the tanh part on the grid; the
        diagonal diffusions are sigma_k = sigma0*tanh(1 + x_k) and
        b_k = b0*tanh(x_k + y_k) componentwise in the mode index.  All
        declared constants follow from |tanh| <= 1 and |tanh'| <= 1 (with
        covariance weights at most 1).
    """
    if name == "linear_ou":
        gamma = float(params.pop("gamma", 0.5))
        sigma1 = float(params.pop("sigma1", 0.1))
        sigma2 = float(params.pop("sigma2", 0.5))
        _reject_extras(name, params)
        if gamma < 0:
            raise ConfigurationError(f"gamma must be nonnegative, got {gamma}")

        def f(xc, yc):
            return yc.copy()

        def g(xc, yc):
            return xc - gamma * yc

        def sigma(xc):
            return np.full(np.shape(xc), sigma1)

        def b(xc, yc):
            return np.full(np.shape(xc), sigma2)

        return CoefficientSet(
            name=name, f=f, g=g, sigma=sigma, b=b,
            f_lipschitz=1.0, f_bound=math.inf,
            g_slow_lipschitz=1.0, g_fast_lipschitz=gamma,
            b_slow_lipschitz=0.0, b_fast_lipschitz=abs(sigma2),
            sigma_lipschitz=0.0,
            g_dx=lambda xc, yc, hc: hc.copy(),
            g_dy=lambda xc, yc, zc: -gamma * zc,
            b_dx=lambda xc, yc, hc: np.zeros(np.shape(hc)),
            b_dy=lambda xc, yc, zc: np.zeros(np.shape(zc)),
            params={"gamma": gamma, "sigma1": sigma1, "sigma2": sigma2},
        )

    if name == "bounded_nonlinear":
        a = float(params.pop("a", 1.0))
        gamma = float(params.pop("gamma", 0.5))
        sigma0 = float(params.pop("sigma0", 0.1))
        b0 = float(params.pop("b0", 0.5))
        _reject_extras(name, params)
        if a <= 0:
            raise ConfigurationError(f"amplitude a must be positive, got {a}")
        length = float(domain_length)

        def f(xc, yc):
            u = modes_to_grid(xc, length) + modes_to_grid(yc, length)
            return grid_to_modes(a * np.tanh(u), length)

        def g(xc, yc):
            u = modes_to_grid(xc, length)
            return grid_to_modes(np.tanh(u), length) - gamma * yc

        def sigma(xc):
            return sigma0 * np.tanh(1.0 + xc)

        def b(xc, yc):
            return b0 * np.tanh(xc + yc)

        def g_dx(xc, yc, hc):
            u = modes_to_grid(xc, length)
            hgrid = modes_to_grid(hc, length)
            return grid_to_modes((1.0 - np.tanh(u) ** 2) * hgrid, length)

        def g_dy(xc, yc, zc):
            return -gamma * zc

        def b_dx(xc, yc, hc):
            return b0 * (1.0 - np.tanh(xc + yc) ** 2) * hc

        def b_dy(xc, yc, zc):
            return b0 * (1.0 - np.tanh(xc + yc) ** 2) * zc

        return CoefficientSet(
            name=name, f=f, g=g, sigma=sigma, b=b,
            f_lipschitz=a, f_bound=a * math.sqrt(length),
            g_slow_lipschitz=1.0, g_fast_lipschitz=gamma,
            b_slow_lipschitz=abs(b0), b_fast_lipschitz=abs(b0),
            sigma_lipschitz=abs(sigma0),
            g_dx=g_dx, g_dy=g_dy, b_dx=b_dx, b_dy=b_dy,
            params={"a": a, "gamma": gamma, "sigma0": sigma0, "b0": b0},
        )

    raise ConfigurationError(f"unknown fixture '{name}'")


def _reject_extras(name: str, leftovers: dict):
    if leftovers:
        raise ConfigurationError(
            f"fixture '{name}' got unexpected parameters: {sorted(leftovers)}")


@dataclass
class AssumptionReport:
    """Outcome of probing a coefficient set against its declared constants."""

    kappa: float
    declared: dict
    estimated: dict
    violations: list
    fatal: bool

    def ok(self) -> bool:
        return not self.violations and not self.fatal


# Declared constants may exceed probe estimates (they are upper bounds);
# the other direction flags a violation once past this slack.
_PROBE_TOLERANCE = 1.05


def validate_assumptions(coeffs: CoefficientSet, domain_length: float,
                         n_modes: int = 16, probes: int = 64,
                         stream: NoiseStream | None = None,
                         noise: NoiseSpec | None = None) -> AssumptionReport:
    """Probe the coefficient maps and compare against declared constants.

    Lipschitz/derivative bounds are estimated by secant ratios over random
    field pairs; diffusion maps are measured in the covariance-weighted
    norm (sum_k lambda_k m_k^2)^(1/2).  A declared constant smaller than
    its estimate beyond a 5% slack is reported as a violation.  A
    nonpositive dissipativity margin sets the fatal flag.
    """
    if probes < 1:
        raise ValueError(f"probes must be >= 1, got {probes}")
    if stream is None:
        stream = NoiseStream(0, (0, 9))
    if noise is None:
        noise = make_noise_spec("polynomial", n_modes, c=1.0, p=2.0)
    if noise.n_modes != n_modes:
        raise ConfigurationError(
            f"noise spec has {noise.n_modes} modes, expected {n_modes}")

    lam1, lam2 = noise.lambda1, noise.lambda2

    def rand_field():
        return stream.normals(n_modes)

    def h_norm(c):
        return float(np.sqrt(np.sum(c**2)))

    est = {
        "f_lipschitz": 0.0, "f_bound": 0.0,
        "g_slow_lipschitz": 0.0, "g_fast_lipschitz": 0.0,
        "b_slow_lipschitz": 0.0, "b_fast_lipschitz": 0.0,
        "sigma_lipschitz": 0.0,
    }
    for _ in range(probes):
        x, y, h = rand_field(), rand_field(), rand_field()
        nh = h_norm(h)
        est["f_bound"] = max(est["f_bound"], h_norm(coeffs.f(x, y)))
        est["f_lipschitz"] = max(
            est["f_lipschitz"],
            h_norm(coeffs.f(x + h, y) - coeffs.f(x, y)) / nh,
            h_norm(coeffs.f(x, y + h) - coeffs.f(x, y)) / nh,
        )
        est["g_slow_lipschitz"] = max(
            est["g_slow_lipschitz"],
            h_norm(coeffs.g(x + h, y) - coeffs.g(x, y)) / nh)
        est["g_fast_lipschitz"] = max(
            est["g_fast_lipschitz"],
            h_norm(coeffs.g(x, y + h) - coeffs.g(x, y)) / nh)
        est["b_slow_lipschitz"] = max(
            est["b_slow_lipschitz"],
            _q_norm(coeffs.b(x + h, y) - coeffs.b(x, y), lam2) / nh)
        est["b_fast_lipschitz"] = max(
            est["b_fast_lipschitz"],
            _q_norm(coeffs.b(x, y + h) - coeffs.b(x, y), lam2) / nh)
        est["sigma_lipschitz"] = max(
            est["sigma_lipschitz"],
            _q_norm(coeffs.sigma(x + h) - coeffs.sigma(x), lam1) / nh)

    declared = {
        "f_lipschitz": coeffs.f_lipschitz, "f_bound": coeffs.f_bound,
        "g_slow_lipschitz": coeffs.g_slow_lipschitz,
        "g_fast_lipschitz": coeffs.g_fast_lipschitz,
        "b_slow_lipschitz": coeffs.b_slow_lipschitz,
        "b_fast_lipschitz": coeffs.b_fast_lipschitz,
        "sigma_lipschitz": coeffs.sigma_lipschitz,
    }
    violations = []
    for key, declared_value in declared.items():
        if math.isinf(declared_value):
            continue  # unbounded declaration: nothing to check against
        if est[key] > declared_value * _PROBE_TOLERANCE + 1e-12:
            violations.append(
                f"{key}: estimate {est[key]:.6g} exceeds declared {declared_value:.6g}")

    kappa = dissipativity_margin(coeffs, domain_length)
    return AssumptionReport(
        kappa=kappa, declared=declared, estimated=est,
        violations=violations, fatal=kappa <= 0,
    )


def _q_norm(multipliers: np.ndarray, lam: np.ndarray) -> float:
    return float(np.sqrt(np.sum(lam * multipliers**2)))
