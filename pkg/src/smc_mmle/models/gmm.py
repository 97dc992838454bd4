"""Symmetric two-component Gaussian mixture with known weight alpha.

p_theta(y) = alpha N(y; theta, 1) + (1 - alpha) N(y; -theta, 1).  The latent
variable is one component allocation per observation: category 0 maps to
x = +1 (component mean +theta, prior mass alpha), category 1 to x = -1.
"""

from __future__ import annotations

import numpy as np

from ..core import LatentSpace, ModelContract, as_generator

__all__ = ["GmmModel", "gmm_marginal_loglik"]

LOG_2PI = np.log(2.0 * np.pi)
_SIGNS = np.array([1.0, -1.0])  # category -> x value


class GmmModel(ModelContract):
    def __init__(self, data: np.ndarray, alpha: float):
        data = np.asarray(data, dtype=float)
        if data.ndim != 1 or data.size < 1:
            raise ValueError("data must be a nonempty vector")
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.data = data
        self.alpha = float(alpha)
        self.m = data.size
        self.latent_space = LatentSpace.discrete_categorical(self.m, 2)
        self.d_theta = 1
        self._log_alpha = np.log([self.alpha, 1.0 - self.alpha])

    @classmethod
    def simulate(cls, theta: float, alpha: float, n: int, rng) -> "GmmModel":
        gen = as_generator(rng)
        signs = np.where(gen.random(n) < alpha, 1.0, -1.0)
        return cls(signs * theta + gen.standard_normal(n), alpha)

    def _x_values(self, cs):
        return _SIGNS[np.asarray(cs)]

    def log_joint(self, theta, cs):
        th = float(np.atleast_1d(theta)[0])
        x = self._x_values(cs)
        per_datum = self._log_alpha[np.asarray(cs)] - 0.5 * np.square(self.data - x * th)
        return per_datum.sum(axis=1) - 0.5 * self.m * LOG_2PI

    def grad_theta_U(self, theta, cs):
        th = float(np.atleast_1d(theta)[0])
        x = self._x_values(cs)
        # d/dth of 0.5 (y - x th)^2 summed; x^2 = 1
        return (self.m * th - (x * self.data).sum(axis=1))[:, None]

    def theta_curvature(self, theta, cs):
        return np.full((np.asarray(cs).shape[0], 1), float(self.m))

    def log_prior0(self, cs):
        # uniform over the 2^m allocations
        return np.full(np.asarray(cs).shape[0], -self.m * np.log(2.0))

    def sample_prior0(self, rng, n):
        return as_generator(rng).integers(0, 2, size=(n, self.m))

    # site interface ------------------------------------------------------

    def site_log_joint(self, theta, cs, site):
        th = float(np.atleast_1d(theta)[0])
        y = self.data[site]
        row = self._log_alpha - 0.5 * np.square(y - _SIGNS * th)
        return np.broadcast_to(row, (np.asarray(cs).shape[0], 2))

    def site_log_prior0(self, cs, site):
        return np.full((np.asarray(cs).shape[0], 2), -np.log(2.0))

    def prior_category_probs(self, site):
        return np.array([self.alpha, 1.0 - self.alpha])

    # the joint factorizes across allocations, and no factor depends on the
    # other coordinates, so the (1, m, 2) table covers every particle

    def factor_log_joint(self, theta, cs):
        th = float(np.atleast_1d(theta)[0])
        vals = self._log_alpha[None, :] - 0.5 * np.square(
            self.data[:, None] - _SIGNS[None, :] * th)
        return vals[None, :, :]

    def factor_log_prior0(self, cs):
        return np.full((1, self.m, 2), -np.log(2.0))


def gmm_marginal_loglik(theta: float, data: np.ndarray, alpha: float) -> float:
    """sum_i log[alpha N(y_i; theta, 1) + (1-alpha) N(y_i; -theta, 1)]."""
    data = np.asarray(data, dtype=float)
    a = np.log(alpha) - 0.5 * np.square(data - theta)
    b = np.log1p(-alpha) - 0.5 * np.square(data + theta)
    return float(np.logaddexp(a, b).sum() - 0.5 * data.size * LOG_2PI)
