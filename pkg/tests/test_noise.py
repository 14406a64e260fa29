import math

import numpy as np
import pytest

from spdeavg.errors import ConfigurationError
from spdeavg.noise import (ArrayStream, NoiseSpec, NoiseStream, make_noise_spec,
                           sample_increment)

PI = math.pi


def test_polynomial_spectrum_closed_form():
    spec = make_noise_spec("polynomial", 4, c=1.0, p=2.0)
    np.testing.assert_allclose(spec.lambda1, [1.0, 0.25, 1.0 / 9.0, 0.0625])
    assert spec.trace1 == pytest.approx(PI**2 / 6.0)


def test_polynomial_divergent_trace_rejected():
    with pytest.raises(ConfigurationError):
        make_noise_spec("polynomial", 4, c=1.0, p=1.0)


def test_flat_spectrum():
    spec = make_noise_spec("flat", 8, c=0.5, m=2)
    assert spec.lambda1[0] == 0.5 and spec.lambda1[1] == 0.5
    assert np.all(spec.lambda1[2:] == 0.0)
    assert spec.trace1 == pytest.approx(1.0)


def test_exponential_spectrum():
    spec = make_noise_spec("exponential", 6, c=2.0, rho=0.5)
    assert spec.lambda2[0] == pytest.approx(1.0)
    assert spec.trace2 == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        make_noise_spec("exponential", 6, c=1.0, rho=1.0)


def test_spec_trace_dominates_truncation():
    with pytest.raises(ValueError):
        NoiseSpec(np.ones(4), np.ones(4), trace1=3.0, trace2=4.0)


def test_stream_replay_bit_identical():
    a = NoiseStream(42, (3, 1))
    b = NoiseStream(42, (3, 1))
    np.testing.assert_array_equal(a.normals((5, 4)), b.normals((5, 4)))
    assert a.position == 20


def test_stream_chunking_invariance():
    whole = NoiseStream(7, (0, 2)).normals((10, 3))
    s = NoiseStream(7, (0, 2))
    parts = np.concatenate([s.normals((4, 3)), s.normals((6, 3))])
    np.testing.assert_array_equal(whole, parts)


def test_distinct_ids_differ():
    a = NoiseStream(1, (0, 1)).normals(8)
    b = NoiseStream(1, (0, 2)).normals(8)
    assert not np.allclose(a, b)


def test_stream_id_must_be_nonnegative():
    with pytest.raises(ConfigurationError):
        NoiseStream(0, (-1, 1))


def test_zero_spectrum_gives_zero_increment():
    spec = NoiseSpec(np.zeros(5), np.zeros(5), trace1=1.0, trace2=1.0)
    inc = sample_increment(spec, 1, 0.1, NoiseStream(0, (0, 1)), PI)
    assert np.all(inc.coeffs == 0.0)


def test_increment_variance_matches_law():
    # lambda_1 = 1, dt = 0.01: sample variance of mode 1 within 2%
    spec = make_noise_spec("flat", 2, c=1.0, m=2)
    stream = NoiseStream(2024, (0, 1))
    dt = 0.01
    draws = np.array([sample_increment(spec, 1, dt, stream, PI).coeffs[0]
                      for _ in range(100_000)])
    assert draws.var() == pytest.approx(dt, rel=0.02)
    assert abs(draws.mean()) < 3 * math.sqrt(dt / len(draws))


def test_independent_streams_uncorrelated():
    spec = make_noise_spec("flat", 1, c=1.0, m=1)
    s1 = NoiseStream(9, (0, 1))
    s2 = NoiseStream(9, (0, 2))
    dt = 0.01
    n = 100_000
    a = np.array([sample_increment(spec, 1, dt, s1, PI).coeffs[0] for _ in range(n)])
    b = np.array([sample_increment(spec, 2, dt, s2, PI).coeffs[0] for _ in range(n)])
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.01


def test_half_step_sum_matches_full_step_variance():
    spec = make_noise_spec("flat", 1, c=1.0, m=1)
    stream = NoiseStream(5, (0, 2))
    dt = 0.02
    n = 50_000
    halves = np.array([
        sample_increment(spec, 2, dt / 2, stream, PI).coeffs[0]
        + sample_increment(spec, 2, dt / 2, stream, PI).coeffs[0]
        for _ in range(n)])
    var = halves.var()
    # CLT band: var estimate of a N(0, dt) sample, 4 sigma
    assert abs(var - dt) < 4 * dt * math.sqrt(2.0 / n)


def test_sample_increment_validations():
    spec = make_noise_spec("polynomial", 4, c=1.0, p=2.0)
    stream = NoiseStream(0, (0, 1))
    with pytest.raises(ValueError):
        sample_increment(spec, 1, 0.0, stream, PI)
    with pytest.raises(ConfigurationError):
        sample_increment(spec, 1, 0.1, stream, PI, n_modes=8)
    with pytest.raises(ValueError):
        spec.weights(3)


def test_array_stream_serves_in_order():
    vals = np.arange(12.0)
    s = ArrayStream(vals, (0, 1))
    np.testing.assert_array_equal(s.normals((2, 3)), vals[:6].reshape(2, 3))
    np.testing.assert_array_equal(s.normals(6), vals[6:])
    with pytest.raises(ValueError):
        s.normals(1)
