import math

import numpy as np
import pytest

from spdeavg.spectral import (SpectralField, WaveState, apply_heat_semigroup,
                              apply_wave_propagator, collocation_grid,
                              eigenvalue, eigenvalues, project, sobolev_norm,
                              synthesize, wave_energy)

PI = math.pi


def test_eigenvalue_values():
    assert eigenvalue(1, PI) == pytest.approx(1.0)
    assert eigenvalue(2, PI) == pytest.approx(4.0)
    assert eigenvalue(1, 1.0) == pytest.approx(PI**2)


def test_eigenvalue_increasing():
    vals = eigenvalues(20, 2.7)
    assert np.all(np.diff(vals) > 0)


def test_eigenvalue_domain_errors():
    with pytest.raises(ValueError):
        eigenvalue(0, PI)
    with pytest.raises(ValueError):
        eigenvalue(1, -1.0)


def test_sobolev_norm_zero_field():
    z = SpectralField.zeros(8, PI)
    for s in (-1.0, 0.0, 1.0, 2.0):
        assert sobolev_norm(z, s) == 0.0


def test_sobolev_norm_single_modes():
    u1 = SpectralField.unit_mode(1, 4, PI)
    u2 = SpectralField.unit_mode(2, 4, PI)
    assert sobolev_norm(u1, 1.0) == pytest.approx(1.0)
    assert sobolev_norm(u2, 1.0) == pytest.approx(2.0)
    assert sobolev_norm(u2, 0.0) == pytest.approx(1.0)


def test_poincare_inequality_random_fields():
    rng = np.random.default_rng(7)
    for _ in range(50):
        u = SpectralField(rng.standard_normal(12), 2.0)
        bound = eigenvalue(1, 2.0) ** -0.5 * sobolev_norm(u, 1.0)
        assert sobolev_norm(u, 0.0) <= bound * (1 + 1e-12)


def test_heat_semigroup_identity_at_zero():
    rng = np.random.default_rng(1)
    u = SpectralField(rng.standard_normal(6), PI)
    out = apply_heat_semigroup(u, 0.0)
    np.testing.assert_array_equal(out.coeffs, u.coeffs)


def test_heat_semigroup_halving_time():
    u = SpectralField.unit_mode(1, 3, PI)
    out = apply_heat_semigroup(u, math.log(2.0))
    assert out.coeffs[0] == pytest.approx(0.5)


def test_heat_semigroup_contraction_all_s():
    rng = np.random.default_rng(2)
    u = SpectralField(rng.standard_normal(10), 1.5)
    out = apply_heat_semigroup(u, 5.0)
    for s in (0.0, 1.0, 2.0):
        assert sobolev_norm(out, s) <= sobolev_norm(u, s)


def test_heat_semigroup_law():
    rng = np.random.default_rng(3)
    u = SpectralField(rng.standard_normal(10), PI)
    once = apply_heat_semigroup(u, 0.7)
    twice = apply_heat_semigroup(apply_heat_semigroup(u, 0.3), 0.4)
    np.testing.assert_allclose(once.coeffs, twice.coeffs, rtol=1e-14)


def test_heat_semigroup_rejects_negative_time():
    u = SpectralField.zeros(2, PI)
    with pytest.raises(ValueError):
        apply_heat_semigroup(u, -0.1)


def test_wave_propagator_identity_and_quarter_turn():
    w = WaveState(SpectralField.unit_mode(1, 4, PI), SpectralField.zeros(4, PI))
    same = apply_wave_propagator(w, 0.0)
    np.testing.assert_array_equal(same.position.coeffs, w.position.coeffs)
    quarter = apply_wave_propagator(w, PI / 2.0)
    assert quarter.position.coeffs[0] == pytest.approx(0.0, abs=1e-15)
    assert quarter.velocity.coeffs[0] == pytest.approx(-1.0)


def test_wave_propagator_energy_exact():
    rng = np.random.default_rng(4)
    w = WaveState(SpectralField(rng.standard_normal(8), 2.0),
                  SpectralField(rng.standard_normal(8), 2.0))
    for t in (0.1, 1.0, 13.7):
        out = apply_wave_propagator(w, t)
        assert wave_energy(out) == pytest.approx(wave_energy(w), rel=1e-12)


def test_wave_propagator_inverse_rotation():
    rng = np.random.default_rng(5)
    w = WaveState(SpectralField(rng.standard_normal(8), PI),
                  SpectralField(rng.standard_normal(8), PI))
    fwd = apply_wave_propagator(w, 0.9)
    # the inverse rotation: propagate and flip velocity sign twice
    back = apply_wave_propagator(
        WaveState(fwd.position, fwd.position.with_coeffs(-fwd.velocity.coeffs)), 0.9)
    np.testing.assert_allclose(back.position.coeffs, w.position.coeffs, atol=1e-12)
    np.testing.assert_allclose(-back.velocity.coeffs, w.velocity.coeffs, atol=1e-12)


def test_wave_state_requires_matching_bases():
    with pytest.raises(ValueError):
        WaveState(SpectralField.zeros(4, PI), SpectralField.zeros(5, PI))


def test_transform_round_trip():
    rng = np.random.default_rng(6)
    u = SpectralField(rng.standard_normal(16), PI)
    back = project(synthesize(u), 16, PI)
    np.testing.assert_allclose(back.coeffs, u.coeffs, rtol=1e-10, atol=1e-12)


def test_synthesize_single_mode_value():
    u = SpectralField.unit_mode(1, 4, PI)
    val = synthesize(u, np.array([PI / 2.0]))
    assert val[0] == pytest.approx(math.sqrt(2.0 / PI))


def test_synthesize_zero_field():
    z = SpectralField.zeros(5, 1.0)
    assert np.all(synthesize(z) == 0.0)


def test_synthesize_rejects_outside_domain():
    u = SpectralField.zeros(3, 1.0)
    with pytest.raises(ValueError):
        synthesize(u, np.array([1.5]))
    with pytest.raises(ValueError):
        synthesize(u, np.array([0.0]))


def test_collocation_grid_interior():
    g = collocation_grid(7, 2.0)
    assert g[0] > 0 and g[-1] < 2.0
    assert len(g) == 7


def test_field_validation():
    with pytest.raises(ValueError):
        SpectralField(np.array([np.nan]), PI)
    with pytest.raises(ValueError):
        SpectralField(np.array([1.0]), -1.0)
    with pytest.raises(ValueError):
        SpectralField(np.array([]), PI)


def test_field_immutable():
    u = SpectralField.unit_mode(1, 3, PI)
    with pytest.raises(ValueError):
        u.coeffs[0] = 2.0
