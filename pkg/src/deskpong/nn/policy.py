"""Stochastic policies and latent sampling.

Policies are Gaussians with a state-dependent mean and a fixed diagonal
covariance (constant throughout training). Skill latents live on the unit
hypersphere.
"""

from __future__ import annotations

import math

import numpy as np

from . import tape
from .mlp import Mlp
from .tape import Tensor


class GaussianPolicy:
    """Fixed-covariance diagonal Gaussian over the mean net's output."""

    def __init__(self, mean_net: Mlp, sigma_sq: float):
        if sigma_sq <= 0.0:
            raise ValueError("sigma_sq must be positive")
        self.mean_net = mean_net
        self.sigma_sq = float(sigma_sq)

    @property
    def action_dim(self) -> int:
        return self.mean_net.layer_sizes[-1]

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.mean_net.forward_np(obs)

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean_net.forward_np(obs)
        return mu + math.sqrt(self.sigma_sq) * rng.standard_normal(mu.shape)

    def log_prob(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        mu = self.mean_net.forward_np(obs)
        return self.log_prob_from_mean(mu, action)

    def log_prob_from_mean(self, mu: np.ndarray, action: np.ndarray) -> np.ndarray:
        diff = np.asarray(action) - mu
        k = diff.shape[-1]
        quad = np.sum(diff * diff, axis=-1) / (2.0 * self.sigma_sq)
        return -quad - 0.5 * k * math.log(2.0 * math.pi * self.sigma_sq)

    def log_prob_taped(self, obs: Tensor, action: np.ndarray) -> Tensor:
        """Differentiable log-probability of fixed actions (PPO ratio path)."""
        mu = self.mean_net.forward(obs)
        diff = tape.sub(Tensor(np.asarray(action, dtype=np.float64)), mu)
        k = self.action_dim
        quad = tape.mul(
            tape.tsum(tape.mul(diff, diff), axis=1), Tensor(1.0 / (2.0 * self.sigma_sq))
        )
        const = 0.5 * k * math.log(2.0 * math.pi * self.sigma_sq)
        return tape.sub(tape.mul(quad, Tensor(-1.0)), Tensor(const))

    def kl_to(self, other_mu: np.ndarray, obs: np.ndarray) -> np.ndarray:
        """KL between equal-covariance Gaussians: ||mu1-mu2||^2 / (2 sigma^2)."""
        mu = self.mean_net.forward_np(obs)
        diff = mu - other_mu
        return np.sum(diff * diff, axis=-1) / (2.0 * self.sigma_sq)

    def params(self):
        return self.mean_net.params()

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.sigma_sq)


def sample_sphere(dim: int, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Uniform samples on the unit (dim-1)-sphere via normalized Gaussians."""
    if dim < 2:
        raise ValueError("sphere latent needs dim >= 2")
    shape = (dim,) if n is None else (n, dim)
    z = rng.standard_normal(shape)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    # a zero draw has probability 0; guard anyway
    norm = np.where(norm < 1e-12, 1.0, norm)
    return z / norm


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Project rows onto the unit sphere; zero rows are returned as-is
    (callers apply their own fallback rule)."""
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norm < 1e-12, 1.0, norm)
    return x / safe
