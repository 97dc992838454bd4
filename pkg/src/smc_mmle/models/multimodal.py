"""Gamma-precision Gaussian model with a multimodal marginal likelihood.

Per observation: x_j ~ Gamma(shape, rate), y_j | x_j ~ N(theta, 1/x_j), one
precision per observation.  With the default data {-20, 1, 2, 3} and
(shape, rate) = (0.525, 0.025) the marginal log-likelihood has several local
maxima and a global one near theta = 1.997.

The per-coordinate conditional posterior is Gamma(shape + 1/2,
rate + (y_j - theta)^2 / 2).  grad_x U is unbounded near 0, which is what
destabilizes Langevin-based baselines on this model.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, optimize, special

from ..core import LatentSpace, ModelContract, as_generator

__all__ = [
    "MultimodalModel",
    "multimodal_marginal_loglik",
    "multimodal_marginal_loglik_quadrature",
    "multimodal_mle_quadrature",
]

LOG_2PI = np.log(2.0 * np.pi)
DEFAULT_DATA = (-20.0, 1.0, 2.0, 3.0)
DEFAULT_SHAPE = 0.525
DEFAULT_RATE = 0.025


class MultimodalModel(ModelContract):
    def __init__(self, data=DEFAULT_DATA, shape=DEFAULT_SHAPE, rate=DEFAULT_RATE):
        data = np.asarray(data, dtype=float)
        if data.ndim != 1 or data.size < 1:
            raise ValueError("data must be a nonempty vector")
        if shape <= 0 or rate <= 0:
            raise ValueError("shape and rate must be > 0")
        self.data = data
        self.shape = float(shape)
        self.rate = float(rate)
        self.d_x = data.size
        self.latent_space = LatentSpace.continuous_real(self.d_x)
        self.d_theta = 1
        # per-coordinate constant of Gamma(shape, rate) x N(y; theta, 1/x)
        self._const = self.shape * np.log(self.rate) - special.gammaln(self.shape) \
            - 0.5 * LOG_2PI

    def _log_joint_terms(self, theta, xs):
        xs = np.asarray(xs, dtype=float)
        out = np.full(xs.shape, -np.inf)
        ok = xs > 0
        if ok.any():
            x = np.where(ok, xs, 1.0)
            resid = np.square(self.data - theta)
            terms = self._const + (self.shape - 0.5) * np.log(x) - self.rate * x \
                - 0.5 * x * resid
            out = np.where(ok, terms, -np.inf)
        return out

    def log_joint(self, theta, xs):
        th = float(np.atleast_1d(theta)[0])
        return self._log_joint_terms(th, xs).sum(axis=1)

    def log_joint_multi(self, thetas, xs):
        """One theta row per particle; used by the extended-target baseline."""
        th = np.asarray(thetas, dtype=float).reshape(-1, 1)
        xs = np.asarray(xs, dtype=float)
        out = np.full(xs.shape[0], -np.inf)
        ok = (xs > 0).all(axis=1)
        if ok.any():
            x = xs[ok]
            resid = np.square(self.data - th[ok])
            terms = self._const + (self.shape - 0.5) * np.log(x) - self.rate * x \
                - 0.5 * x * resid
            out[ok] = terms.sum(axis=1)
        return out

    def grad_theta_U(self, theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xs = np.asarray(xs, dtype=float)
        return (xs * (th - self.data)).sum(axis=1)[:, None]

    def theta_curvature(self, theta, xs):
        # U is quadratic in theta given x, with curvature = total precision
        return np.asarray(xs, dtype=float).sum(axis=1)[:, None]

    def grad_x_U(self, theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xs = np.asarray(xs, dtype=float)
        return -(self.shape - 0.5) / xs + self.rate + 0.5 * np.square(self.data - th)

    def log_prior0(self, xs):
        # Gamma(1, 1) per coordinate, i.e. unit exponential
        xs = np.asarray(xs, dtype=float)
        with np.errstate(invalid="ignore"):
            vals = np.where(xs > 0, -xs, -np.inf)
        return vals.sum(axis=1)

    def sample_prior0(self, rng, n):
        return as_generator(rng).standard_exponential((n, self.d_x))

    def conditional_posterior_params(self, theta):
        """Per-coordinate Gamma(shape', rate') of x_j | y, theta."""
        resid = np.square(self.data - float(theta))
        return self.shape + 0.5, self.rate + 0.5 * resid


def multimodal_marginal_loglik(theta, data=DEFAULT_DATA, shape=DEFAULT_SHAPE,
                               rate=DEFAULT_RATE) -> float:
    """Closed-form marginal log-likelihood (Gamma-Normal integral in each
    coordinate reduces to a Student-t kernel)."""
    data = np.asarray(data, dtype=float)
    half = np.square(data - float(theta)) / 2.0
    per = shape * np.log(rate) + special.gammaln(shape + 0.5) - special.gammaln(shape) \
        - 0.5 * LOG_2PI - (shape + 0.5) * np.log(rate + half)
    return float(per.sum())


def multimodal_marginal_loglik_quadrature(theta, data=DEFAULT_DATA, shape=DEFAULT_SHAPE,
                                          rate=DEFAULT_RATE) -> float:
    """Independent quadrature oracle for the marginal log-likelihood."""
    total = 0.0
    for y in np.asarray(data, dtype=float):
        resid = (y - float(theta)) ** 2

        def integrand(x, resid=resid):
            return x ** (shape - 0.5) * np.exp(-rate * x - 0.5 * x * resid)

        val, _ = integrate.quad(integrand, 0.0, np.inf)
        total += np.log(val) + shape * np.log(rate) - special.gammaln(shape) \
            - 0.5 * LOG_2PI
    return float(total)


def multimodal_mle_quadrature(data=DEFAULT_DATA, shape=DEFAULT_SHAPE, rate=DEFAULT_RATE,
                              lo=-30.0, hi=15.0, grid=2001):
    """Locate the global marginal-likelihood maximizer by grid + polish,
    using the quadrature oracle.  Returns (theta_star, loglik_star)."""
    thetas = np.linspace(lo, hi, grid)
    vals = [multimodal_marginal_loglik_quadrature(t, data, shape, rate) for t in thetas]
    i = int(np.argmax(vals))
    span = thetas[1] - thetas[0]
    res = optimize.minimize_scalar(
        lambda t: -multimodal_marginal_loglik_quadrature(t, data, shape, rate),
        bracket=(thetas[i] - span, thetas[i], thetas[i] + span),
    )
    return float(res.x), float(-res.fun)
