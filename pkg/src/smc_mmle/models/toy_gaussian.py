"""Conjugate Gaussian model: x ~ N(theta 1, I), y|x ~ N(x, I).

Everything is available in closed form, which makes this the main
verification vehicle: the marginal MLE is mean(y) and the posterior is
N((y + theta)/2, I/2).
"""

from __future__ import annotations

import numpy as np

from ..core import LatentSpace, ModelContract, as_generator

__all__ = ["ToyGaussianModel", "toy_exact_mle", "toy_exact_posterior"]

LOG_2PI = np.log(2.0 * np.pi)


class ToyGaussianModel(ModelContract):
    def __init__(self, y: np.ndarray):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("y must be a nonempty vector")
        self.y = y
        self.d_x = y.size
        self.latent_space = LatentSpace.continuous_real(self.d_x)
        self.d_theta = 1

    @classmethod
    def simulate(cls, theta: float, d_x: int, rng) -> "ToyGaussianModel":
        gen = as_generator(rng)
        x = theta + gen.standard_normal(d_x)
        return cls(x + gen.standard_normal(d_x))

    def log_joint(self, theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xs = np.asarray(xs, dtype=float)
        sq = np.square(xs - th).sum(axis=1) + np.square(self.y - xs).sum(axis=1)
        return -self.d_x * LOG_2PI - 0.5 * sq

    def grad_theta_U(self, theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xs = np.asarray(xs, dtype=float)
        return (self.d_x * th - xs.sum(axis=1))[:, None]

    def theta_curvature(self, theta, xs):
        return np.full((np.asarray(xs).shape[0], 1), float(self.d_x))

    def grad_x_U(self, theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xs = np.asarray(xs, dtype=float)
        return 2.0 * xs - th - self.y

    def log_prior0(self, xs):
        xs = np.asarray(xs, dtype=float)
        return -0.5 * self.d_x * LOG_2PI - 0.5 * np.square(xs).sum(axis=1)

    def sample_prior0(self, rng, n):
        return as_generator(rng).standard_normal((n, self.d_x))


def toy_exact_mle(y: np.ndarray) -> float:
    """Marginal maximum-likelihood estimate: the data mean."""
    return float(np.mean(y))


def toy_exact_posterior(theta: float, y: np.ndarray):
    """Posterior of x given y at theta: mean (y + theta)/2, variance 1/2 per
    coordinate.  Returns (mean vector, variance scalar)."""
    y = np.asarray(y, dtype=float)
    return (y + float(theta)) / 2.0, 0.5
