"""Precomputed per-mode update coefficients for the exponential integrators.

Both integrators advance the linear flow exactly and freeze nonlinear
coefficients at (sub)step start:

  wave modes (frequency w_k = sqrt(alpha_k), step dt):
      x <- cos(w dt) x + sin(w dt)/w v + sin(w dt)/w * impulse
      v <- -w sin(w dt) x + cos(w dt) v + cos(w dt) * impulse
  where impulse = f dt + sigma dW1 (kernel weights frozen at step start;
  an opt-in mode samples the stochastic convolution with its exact
  per-step covariance instead),

  heat modes (rate alpha_k/eps, inner step h):
      y <- e1 y + (1-e1)/alpha * g + b * std0 * xi,
  with e1 = exp(-alpha h/eps) and std0^2 = lambda2 (1 - e1^2)/(2 alpha),
  the exact variance of the frozen-coefficient stochastic convolution.
"""

from __future__ import annotations

import numpy as np

__all__ = ["WaveStepRule", "FastStepRule"]


class WaveStepRule:
    """Rotation and impulse kernels for one macro step of the wave modes."""

    def __init__(self, alphas: np.ndarray, lambda1: np.ndarray, dt: float):
        omega = np.sqrt(alphas)
        theta = omega * dt
        self.dt = dt
        self.omega = omega
        self.cos = np.cos(theta)
        self.sin = np.sin(theta)
        self.k_pos = self.sin / omega          # S_dt kernel value
        self.k_vel = self.cos                  # S'_dt kernel value
        self.rot_vx = -omega * self.sin
        self.sqrt_l1_dt = np.sqrt(lambda1 * dt)
        self.lambda1 = lambda1

        # exact-covariance factors of the per-step stochastic convolution
        # (position integral, velocity integral) per mode
        var_pos = lambda1 * (dt / 2.0 - np.sin(2.0 * theta) / (4.0 * omega)) / omega**2
        var_vel = lambda1 * (dt / 2.0 + np.sin(2.0 * theta) / (4.0 * omega))
        cov = lambda1 * self.sin**2 / (2.0 * omega**2)
        sp = np.sqrt(np.maximum(var_pos, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            cva = np.where(sp > 0, cov / sp, 0.0)
        self.chol_pos = sp
        self.chol_vel_a = cva
        self.chol_vel_b = np.sqrt(np.maximum(var_vel - cva**2, 0.0))


class FastStepRule:
    """Exponential-step factors for the heat modes on the inner grid."""

    def __init__(self, alphas: np.ndarray, lambda2: np.ndarray,
                 dt: float, epsilon: float, n_sub: int):
        self.n_sub = n_sub
        self.h = dt / n_sub
        self.epsilon = epsilon
        r = self.h / epsilon
        self.decay = np.exp(-alphas * r)               # e1
        self.decay2 = self.decay**2                    # e1^2
        self.phi = (1.0 - self.decay) / alphas
        self.std0 = np.sqrt(lambda2 * (1.0 - self.decay2) / (2.0 * alphas))
        self.alphas = alphas
        self.lambda2 = lambda2
