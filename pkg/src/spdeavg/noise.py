"""Trace-class Wiener processes in mode space and reproducible streams.

The two driving noises are diagonal in the sine eigenbasis: noise i gives
mode k an independent Brownian motion scaled by sqrt(lambda_{i,k}), where
the weights are summable (finite trace).  Streams are counter-derived from
a global seed and a structured id, so replica r of two different systems
can share one noise path exactly, and independent paths never collide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .errors import ConfigurationError
from .spectral import SpectralField

__all__ = ["NoiseSpec", "NoiseStream", "make_noise_spec", "sample_increment"]

# tolerance for float roundoff when checking the truncated trace
_TRACE_SLACK = 1e-9


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance eigenvalues of the two driving noises, truncated to N modes.

    ``trace1``/``trace2`` are the full (untruncated) sums of the intended
    spectra; the truncated sums can never exceed them.
    """

    lambda1: np.ndarray
    lambda2: np.ndarray
    trace1: float
    trace2: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            arr = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            if arr.size < 1:
                raise ValueError(f"{name} must have at least one entry")
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must be finite and nonnegative")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.lambda1.size != self.lambda2.size:
            raise ValueError("lambda1 and lambda2 must have equal length")
        for arr, tr, name in ((self.lambda1, self.trace1, "trace1"),
                              (self.lambda2, self.trace2, "trace2")):
            if not np.isfinite(tr) or tr <= 0:
                raise ValueError(f"{name} must be positive and finite")
            if arr.sum() > tr + _TRACE_SLACK:
                raise ValueError(f"truncated spectrum exceeds declared {name}")

    @property
    def n_modes(self) -> int:
        return self.lambda1.size

    def weights(self, which: int) -> np.ndarray:
        if which not in (1, 2):
            raise ValueError(f"noise index must be 1 or 2, got {which}")
        return self.lambda1 if which == 1 else self.lambda2


def make_noise_spec(family: str, n_modes: int, *, c: float = 1.0,
                    p: float = 2.0, rho: float = 0.5, m: int = 1) -> NoiseSpec:
    """Build a spec from a named spectrum family, same law for both noises.

    Families:
      * ``polynomial``: lambda_k = c * k**(-p), needs p > 1 for a finite trace
      * ``exponential``: lambda_k = c * rho**k with 0 < rho < 1
      * ``flat``: lambda_k = c for k <= m, else 0

    The declared trace is the closed-form infinite sum of the family.
    """
    if c <= 0:
        raise ConfigurationError(f"spectrum scale must be positive, got {c}")
    k = np.arange(1, n_modes + 1, dtype=float)
    if family == "polynomial":
        if p <= 1:
            raise ConfigurationError(
                f"polynomial spectrum with p={p} has a divergent trace (needs p > 1)")
        lam = c * k**(-p)
        trace = c * float(zeta(p))
    elif family == "exponential":
        if not 0 < rho < 1:
            raise ConfigurationError(
                f"exponential spectrum needs 0 < rho < 1, got {rho}")
        lam = c * rho**k
        trace = c * rho / (1.0 - rho)
    elif family == "flat":
        if m < 1:
            raise ConfigurationError(f"flat spectrum needs m >= 1, got {m}")
        lam = np.where(k <= m, c, 0.0)
        trace = c * m
    else:
        raise ConfigurationError(f"unknown spectrum family '{family}'")
    return NoiseSpec(lam, lam, trace, trace)


class NoiseStream:
    """A replayable Gaussian source addressed by (seed, structured id).

    Two streams with different ids are statistically independent; the same
    (seed, stream_id) always replays the identical value sequence.  The
    conventional ids are (replica, 1) for the slow noise and (replica, 2)
    for the fast noise; derived ids append further nonnegative integers.
    """

    def __init__(self, seed: int, stream_id: tuple[int, ...] = (0, 1)):
        sid = tuple(int(i) for i in stream_id)
        if any(i < 0 for i in sid):
            raise ConfigurationError(f"stream id entries must be nonnegative: {sid}")
        self.seed = int(seed)
        self.stream_id = sid
        self.position = 0
        seq = np.random.SeedSequence(self.seed, spawn_key=sid)
        self._rng = np.random.Generator(np.random.PCG64(seq))

    def normals(self, shape) -> np.ndarray:
        """Draw standard normals of the given shape; advances the stream."""
        draws = self._rng.standard_normal(shape)
        self.position += draws.size
        return draws

    def replay(self) -> "NoiseStream":
        """Fresh stream at position 0 with the same identity."""
        return NoiseStream(self.seed, self.stream_id)

    def derived(self, *extra: int) -> "NoiseStream":
        """Independent substream with the id extended by ``extra``."""
        return NoiseStream(self.seed, self.stream_id + tuple(extra))

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, stream_id={self.stream_id}, position={self.position})"


class ArrayStream:
    """Stream facade serving pre-tabulated draws in order.

    Lets two integrations with different step sizes share one underlying
    Brownian path: tabulate fine-grid draws once, coarsen by pairwise sums,
    and feed each run its own :class:`ArrayStream`.
    """

    def __init__(self, values: np.ndarray, stream_id: tuple[int, ...]):
        self._flat = np.asarray(values, dtype=float).reshape(-1)
        self.stream_id = tuple(int(i) for i in stream_id)
        self.position = 0

    def normals(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        if self.position + count > self._flat.size:
            raise ValueError("pre-tabulated stream exhausted")
        out = self._flat[self.position:self.position + count].reshape(shape)
        self.position += count
        return out


def slow_noise_stream(seed: int, replica: int = 0) -> NoiseStream:
    return NoiseStream(seed, (replica, 1))


def fast_noise_stream(seed: int, replica: int = 0) -> NoiseStream:
    return NoiseStream(seed, (replica, 2))


def sample_increment(spec: NoiseSpec, which: int, dt: float, stream: NoiseStream,
                     domain_length: float, n_modes: int | None = None) -> SpectralField:
    """One Wiener increment of noise ``which`` over a step of length dt.

    Mode k receives an independent N(0, lambda_{which,k} * dt) value.
    """
    if dt <= 0:
        raise ValueError(f"step length must be positive, got {dt}")
    lam = spec.weights(which)
    if n_modes is not None and n_modes != lam.size:
        raise ConfigurationError(
            f"spectrum has {lam.size} modes but {n_modes} were requested")
    draws = stream.normals(lam.size)
    return SpectralField(np.sqrt(lam * dt) * draws, domain_length)
