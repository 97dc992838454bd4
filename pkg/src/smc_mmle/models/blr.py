"""Bayesian logistic regression with a Gaussian latent shared across data.

x ~ N(theta, I_{d_x}); y_j | x ~ Bernoulli(s(v_j^T x)) with s the logistic
function.  grad_theta U = theta - x, so the parameter leg is exactly
quadratic.
"""

from __future__ import annotations

import numpy as np

from ..core import LatentSpace, ModelContract, as_generator

__all__ = ["BlrModel"]

LOG_2PI = np.log(2.0 * np.pi)


def _log_sigmoid(u):
    # log s(u) = -log(1 + e^{-u}), stable on both tails
    return -np.logaddexp(0.0, -u)


class BlrModel(ModelContract):
    def __init__(self, covariates: np.ndarray, responses: np.ndarray):
        v = np.asarray(covariates, dtype=float)
        y = np.asarray(responses)
        if v.ndim != 2 or v.shape[0] != y.shape[0]:
            raise ValueError("covariates (n, d) must align with responses (n,)")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("responses must be 0/1")
        self.covariates = v
        self.responses = y.astype(float)
        self.d_x = v.shape[1]
        self.n_data = v.shape[0]
        self.latent_space = LatentSpace.continuous_real(self.d_x)
        self.d_theta = self.d_x

    @classmethod
    def simulate(cls, theta_true, n_data: int, rng) -> "BlrModel":
        """Draw covariates Unif(-1,1)^d, one latent x* ~ N(theta_true, I),
        then Bernoulli responses at s(v_j^T x*)."""
        gen = as_generator(rng)
        theta_true = np.asarray(theta_true, dtype=float)
        v = gen.uniform(-1.0, 1.0, size=(n_data, theta_true.size))
        x_star = theta_true + gen.standard_normal(theta_true.size)
        probs = 1.0 / (1.0 + np.exp(-v @ x_star))
        return cls(v, (gen.random(n_data) < probs).astype(int))

    def _logistic_loglik(self, xs):
        # sum_j y_j log s(v_j x) + (1 - y_j) log s(-v_j x), batched over xs;
        # folded through log s(u) - log s(-u) = u to one transcendental pass
        u = xs @ self.covariates.T  # (N, n_data)
        return (self.responses * u + _log_sigmoid(-u)).sum(axis=1)

    def log_joint(self, theta, xs):
        theta = np.asarray(theta, dtype=float)
        xs = np.asarray(xs, dtype=float)
        quad = 0.5 * np.square(xs - theta).sum(axis=1)
        return -0.5 * self.d_x * LOG_2PI - quad + self._logistic_loglik(xs)

    def grad_theta_U(self, theta, xs):
        theta = np.asarray(theta, dtype=float)
        xs = np.asarray(xs, dtype=float)
        return theta - xs

    def grad_x_U(self, theta, xs):
        theta = np.asarray(theta, dtype=float)
        xs = np.asarray(xs, dtype=float)
        u = xs @ self.covariates.T
        probs = 1.0 / (1.0 + np.exp(-u))
        return (xs - theta) + (probs - self.responses) @ self.covariates

    def log_prior0(self, xs):
        xs = np.asarray(xs, dtype=float)
        return -0.5 * self.d_x * LOG_2PI - 0.5 * np.square(xs).sum(axis=1)

    def sample_prior0(self, rng, n):
        return as_generator(rng).standard_normal((n, self.d_x))
