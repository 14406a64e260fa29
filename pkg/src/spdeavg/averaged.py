"""Integration of the averaged wave equation with a pluggable drift.

The averaged system replaces the fast-dependent slow drift by its average
against the stationary law of the frozen fast dynamics.  Structurally the
integrator is the slow half of the coupled one: exact per-mode rotation
plus a one-step quadrature of fbar and of the slow noise, consuming the
slow noise stream with exactly the same layout.  Feeding it a replay of a
coupled run's slow stream therefore realizes both solutions on one
Brownian path, which is what pathwise error comparisons require.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .coupled import SystemConfig, _CHUNK
from .errors import BlowupError, ConfigurationError, EstimationQualityError
from .frozen import closed_form_avg_drift, estimate_avg_drift
from .model import CoefficientSet
from .noise import NoiseSpec, NoiseStream
from .schemes import WaveStepRule
from .spectral import SpectralField, WaveState, eigenvalues

__all__ = [
    "AveragedRun",
    "ClosedFormDrift",
    "MonteCarloDrift",
    "integrate_averaged",
]


class ClosedFormDrift:
    """Exact averaged drift of the linear fixture, vectorized over batches."""

    label = "closed_form"

    def __init__(self, coeffs: CoefficientSet, n_modes: int, domain_length: float):
        if coeffs.name != "linear_ou":
            raise ConfigurationError(
                "closed-form averaged drift exists only for the linear_ou fixture")
        gamma = coeffs.params["gamma"]
        self._denom = eigenvalues(n_modes, domain_length) + gamma

    def __call__(self, x_batch: np.ndarray) -> np.ndarray:
        return x_batch / self._denom


class MonteCarloDrift:
    """Averaged drift estimated on demand by ergodic time averaging.

    Estimates are memoized on the input quantized to 1e-6 per mode, and the
    stream driving each estimate is derived from that quantized input, so a
    given point always produces the same value no matter how many workers
    ask for it or in which order.  Estimation noise is independent of the
    driving slow/fast noises by construction (dedicated stream tag).
    """

    label = "monte_carlo"
    _QUANTUM = 1e-6

    def __init__(self, coeffs: CoefficientSet, noise: NoiseSpec,
                 domain_length: float, seed: int, *,
                 burn_in: float | None = None, horizon: float | None = None,
                 dt: float = 5e-3,
                 stderr_rel: float = 0.05, stderr_abs: float = 1e-4):
        self._coeffs = coeffs
        self._noise = noise
        self._length = domain_length
        self._seed = seed
        self._burn_in = burn_in
        self._horizon = horizon
        self._dt = dt
        self._stderr_rel = stderr_rel
        self._stderr_abs = stderr_abs
        self._memo: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()

    def _estimate(self, coeffs_1d: np.ndarray, key: bytes) -> np.ndarray:
        digest = hashlib.blake2b(key, digest_size=6).digest()
        stream = NoiseStream(self._seed, (3, int.from_bytes(digest, "big")))
        x = SpectralField(coeffs_1d, self._length)
        est = estimate_avg_drift(x, self._coeffs, self._noise, stream,
                                 "time_average", burn_in=self._burn_in,
                                 horizon=self._horizon, dt=self._dt)
        limit = self._stderr_rel * est.value.norm() + self._stderr_abs
        if est.stderr > limit:
            raise EstimationQualityError(
                f"averaged-drift stderr {est.stderr:.3g} exceeds {limit:.3g}; "
                "increase the averaging budget")
        return est.value.coeffs

    def __call__(self, x_batch: np.ndarray) -> np.ndarray:
        flat = np.atleast_2d(x_batch)
        out = np.empty_like(flat)
        for i, row in enumerate(flat):
            key = np.round(row / self._QUANTUM).astype(np.int64).tobytes()
            with self._lock:
                cached = self._memo.get(key)
            if cached is None:
                cached = self._estimate(row, key)
                with self._lock:
                    self._memo[key] = cached
            out[i] = cached
        return out.reshape(np.shape(x_batch))


@dataclass
class AveragedRun:
    """Trajectory of the averaged system plus its noise provenance."""

    trajectory: list[tuple[float, WaveState]]
    drift_source: str
    shared_noise_id: tuple

    def terminal(self) -> WaveState:
        return self.trajectory[-1][1]


@dataclass
class AveragedBatchResult:
    times: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    aborted: np.ndarray
    abort_step: np.ndarray


def run_averaged_batch(cfg: SystemConfig, drift, streams_w1,
                       record_steps=None) -> AveragedBatchResult:
    """Batched averaged-equation integration; mirrors the coupled slow half.

    ``streams_w1`` holds one slow-noise stream per replica; the draw layout
    per macro step matches the coupled integrator exactly, so replaying a
    coupled run's stream reproduces its slow noise path bit for bit.
    """
    n_steps = cfg.n_steps
    if record_steps is None:
        record_steps = list(range(0, n_steps + 1, cfg.stride))
        if record_steps[-1] != n_steps:
            record_steps.append(n_steps)
    record_steps = sorted(set(int(s) for s in record_steps))
    if record_steps[0] < 0 or record_steps[-1] > n_steps:
        raise ConfigurationError("record steps outside the time grid")
    rec_lookup = {s: i for i, s in enumerate(record_steps)}

    n = cfg.n_modes
    m = len(streams_w1)
    alphas = eigenvalues(n, cfg.domain_length)
    wave = WaveStepRule(alphas, cfg.noise.lambda1, cfg.dt)
    coeffs = cfg.coefficients
    exact_noise = cfg.wave_noise == "exact"
    dt = cfg.dt

    pos = np.tile(cfg.initial_position.coeffs, (m, 1))
    vel = np.tile(cfg.initial_velocity.coeffs, (m, 1))
    aborted = np.zeros(m, dtype=bool)
    abort_step = np.full(m, -1, dtype=int)
    n_rec = len(record_steps)
    out = AveragedBatchResult(
        times=np.array([s * dt for s in record_steps]),
        pos=np.empty((n_rec, m, n)), vel=np.empty((n_rec, m, n)),
        aborted=aborted, abort_step=abort_step,
    )

    def record(step):
        i = rec_lookup[step]
        out.pos[i], out.vel[i] = pos, vel

    def check_finite(step):
        ok = np.isfinite(pos).all(axis=1) & np.isfinite(vel).all(axis=1)
        fresh = ~ok & ~aborted
        if fresh.any():
            aborted[fresh] = True
            abort_step[fresh] = step
            pos[fresh] = 0.0
            vel[fresh] = 0.0

    if 0 in rec_lookup:
        record(0)
    xi_shape = (2, n) if exact_noise else (n,)
    step = 0
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        while step < n_steps:
            chunk = min(_CHUNK, n_steps - step)
            xi = np.stack([s.normals((chunk,) + xi_shape) for s in streams_w1])
            for j in range(chunk):
                fbar = drift(pos)
                sig = coeffs.sigma(pos)
                if exact_noise:
                    xa, xb = xi[:, j, 0], xi[:, j, 1]
                    noise_p = sig * (wave.chol_pos * xa)
                    noise_v = sig * (wave.chol_vel_a * xa + wave.chol_vel_b * xb)
                else:
                    raw = wave.sqrt_l1_dt * xi[:, j]
                    noise_p = wave.k_pos * sig * raw
                    noise_v = wave.k_vel * sig * raw
                det = fbar * dt
                pos, vel = (wave.cos * pos + wave.k_pos * vel + wave.k_pos * det + noise_p,
                            wave.rot_vx * pos + wave.cos * vel + wave.k_vel * det + noise_v)
                step += 1
                if step in rec_lookup:
                    check_finite(step)
                    record(step)
            check_finite(step)
    return out


def integrate_averaged(cfg: SystemConfig, drift,
                       stream_w1: NoiseStream) -> AveragedRun:
    """Integrate one replica of the averaged wave equation.

    ``drift`` is a provider with a ``label`` and batched call semantics
    (:class:`ClosedFormDrift` or :class:`MonteCarloDrift`); ``stream_w1``
    should replay the slow stream of the paired coupled run when the result
    feeds a pathwise error comparison.
    """
    if stream_w1.stream_id[-1] != 1:
        raise ConfigurationError(
            f"expected a slow-noise stream with id tag 1, got {stream_w1.stream_id}")
    res = run_averaged_batch(cfg, drift, [stream_w1])
    if res.aborted[0]:
        raise BlowupError(int(res.abort_step[0]))
    length = cfg.domain_length
    traj = [(float(t), WaveState(SpectralField(res.pos[i, 0], length),
                                 SpectralField(res.vel[i, 0], length)))
            for i, t in enumerate(res.times)]
    return AveragedRun(trajectory=traj,
                       drift_source=getattr(drift, "label", "custom"),
                       shared_noise_id=stream_w1.stream_id)
