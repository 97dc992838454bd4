"""Metrics and verification oracles.

Cloud summaries (Gaussian fit, 1-D Wasserstein, majority-vote labels, ARI),
exhaustive enumeration of small discrete targets, and the deterministic
Gaussian recursion that the toy model's particle run must track.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import LatentSpace, ParticleCloud, StepSchedule
from .errors import DegenerateCloud, LengthMismatch, NotNormalized, SpaceTooLarge

__all__ = [
    "GaussianSummary",
    "EnumeratedDistribution",
    "gaussian_fit",
    "gaussian_kl",
    "wasserstein1_1d",
    "adjusted_rand_index",
    "posterior_mode_labels",
    "enumerate_target",
    "toy_exact_recursion",
    "toy_exact_free_energy",
    "free_energy_estimate",
]

LOG_2PI = np.log(2.0 * np.pi)

ENUMERATION_CAP = 2 ** 20


@dataclass(frozen=True)
class GaussianSummary:
    """Mean vector and diagonal covariance vector of a Gaussian fit."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if mean.shape != var.shape:
            raise ValueError("mean and var must have equal shapes")
        if not (np.isfinite(var).all() and (var > 0).all()):
            raise ValueError("variances must be positive and finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    def log_density(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        z = np.square(xs - self.mean) / self.var
        return -0.5 * ((LOG_2PI + np.log(self.var)) + z).sum(axis=-1)


def gaussian_fit(cloud: ParticleCloud) -> GaussianSummary:
    """Weighted mean and weighted per-coordinate variance of a cloud."""
    if not cloud.normalized:
        raise NotNormalized("gaussian_fit needs a normalized cloud")
    w = cloud.weights
    x = np.asarray(cloud.positions, dtype=float)
    mean = w @ x
    var = w @ np.square(x - mean)
    if not (np.isfinite(mean).all() and np.isfinite(var).all() and (var > 0).all()):
        raise DegenerateCloud("cloud has zero spread or non-finite moments")
    return GaussianSummary(mean, var)


def gaussian_kl(a: GaussianSummary, b: GaussianSummary) -> float:
    """KL(a | b) for diagonal Gaussians, in nats."""
    ratio = a.var / b.var
    quad = np.square(b.mean - a.mean) / b.var
    return float(0.5 * (ratio + quad - 1.0 - np.log(ratio)).sum())


def wasserstein1_1d(cloud_a: ParticleCloud, cloud_b: ParticleCloud,
                    coordinate: int = 0) -> float:
    """W1 between the weighted 1-D marginals of two clouds.

    Computed as the integral of |F_a - F_b| over the merged support.
    """
    if not (cloud_a.normalized and cloud_b.normalized):
        raise NotNormalized("wasserstein1_1d needs normalized clouds")
    va = np.asarray(cloud_a.positions[:, coordinate], dtype=float)
    vb = np.asarray(cloud_b.positions[:, coordinate], dtype=float)
    v = np.concatenate([va, vb])
    wa = np.concatenate([cloud_a.weights, np.zeros(vb.size)])
    wb = np.concatenate([np.zeros(va.size), cloud_b.weights])
    order = np.argsort(v, kind="stable")
    v = v[order]
    fa = np.cumsum(wa[order])
    fb = np.cumsum(wb[order])
    return float(np.sum(np.abs(fa[:-1] - fb[:-1]) * np.diff(v)))


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement of two partitions."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.size != b.size:
        raise LengthMismatch("label vectors differ in length: %d vs %d"
                             % (a.size, b.size))
    if a.size == 0:
        raise LengthMismatch("label vectors are empty")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)

    def comb2(x):
        return (x * (x - 1.0) / 2.0).sum()

    index = comb2(table)
    sum_a = comb2(table.sum(axis=1))
    sum_b = comb2(table.sum(axis=0))
    total = a.size * (a.size - 1.0) / 2.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def posterior_mode_labels(cloud: ParticleCloud) -> np.ndarray:
    """Per-coordinate category with the largest posterior weight mass.

    Ties break toward the smaller category index.
    """
    if not cloud.space.is_discrete:
        raise ValueError("posterior_mode_labels needs a discrete cloud")
    if not cloud.normalized:
        raise NotNormalized("posterior_mode_labels needs a normalized cloud")
    k = cloud.space.num_categories
    hot = (np.asarray(cloud.positions)[..., None] == np.arange(k)).astype(float)
    mass = np.einsum("n,ndk->dk", cloud.weights, hot)
    return np.argmax(mass, axis=1)


@dataclass(frozen=True)
class EnumeratedDistribution:
    """Exact probability table over every state of a small discrete space."""

    space: LatentSpace
    states: np.ndarray
    log_probs: np.ndarray
    log_normalizer: float

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def state_index(self, positions: np.ndarray) -> np.ndarray:
        """Row index into the table for each position (base-K digits)."""
        positions = np.asarray(positions)
        k = self.space.num_categories
        weights = k ** np.arange(self.space.dim - 1, -1, -1, dtype=np.int64)
        return positions @ weights

    def expectation(self, fn) -> np.ndarray:
        """Exact expectation of fn(states); fn returns (M,) or (M, k)."""
        return self.probs @ np.asarray(fn(self.states), dtype=float)

    def total_variation(self, cloud: ParticleCloud) -> float:
        """TV distance between the table and a cloud's empirical law."""
        if not cloud.normalized:
            raise NotNormalized("total_variation needs a normalized cloud")
        idx = self.state_index(cloud.positions)
        empirical = np.bincount(idx, weights=cloud.weights,
                                minlength=self.states.shape[0])
        return float(0.5 * np.abs(self.probs - empirical).sum())


def enumerate_target(log_target, space: LatentSpace,
                     cap: int = ENUMERATION_CAP) -> EnumeratedDistribution:
    """Exhaustively evaluate an unnormalized discrete log target.

    Raises SpaceTooLarge when num_categories ** dim exceeds the cap.
    """
    if not space.is_discrete:
        raise ValueError("enumeration needs a discrete space")
    k, dim = space.num_categories, space.dim
    num_states = k ** dim
    if num_states > cap:
        raise SpaceTooLarge("%d^%d states exceed the cap %d" % (k, dim, cap))
    idx = np.arange(num_states, dtype=np.int64)
    states = np.empty((num_states, dim), dtype=np.int64)
    for j in range(dim - 1, -1, -1):
        states[:, j] = idx % k
        idx //= k
    logs = np.empty(num_states)
    chunk = 65536
    for a in range(0, num_states, chunk):
        logs[a:a + chunk] = log_target(states[a:a + chunk])
    log_z = float(logsumexp(logs))
    return EnumeratedDistribution(space, states, logs - log_z, log_z)


def toy_exact_recursion(theta0: float, schedule: StepSchedule, model, T: int):
    """Deterministic infinite-particle limit of the run on the toy model.

    State per iteration: theta (scalar), per-coordinate posterior-iterate
    means m (d_x,) and shared precision tau, starting from the standard
    normal initial law.  Returns (thetas, summaries) with T+1 entries each.

    Updates read the previous (theta, m, tau) jointly:
        theta' = theta - gamma (d_x theta - sum m)
        tau'   = (1 - gamma) tau + 2 gamma
        m'     = [(1 - gamma) tau m + gamma (y + theta)] / tau'

    schedule may be a StepSchedule or a raw gamma sequence (the latter also
    admits zero steps, which freeze the recursion).
    """
    gammas = (schedule.gammas if isinstance(schedule, StepSchedule)
              else np.asarray(schedule, dtype=float))
    if gammas.size < T:
        raise ValueError("schedule shorter than T")
    y = np.asarray(model.y, dtype=float)
    d_x = y.size
    theta = float(theta0)
    m = np.zeros(d_x)
    tau = 1.0
    thetas = np.zeros(T + 1)
    thetas[0] = theta
    summaries = [GaussianSummary(m.copy(), np.full(d_x, 1.0 / tau))]
    for n in range(1, T + 1):
        g = float(gammas[n - 1])
        theta_next = theta - g * (d_x * theta - m.sum())
        tau_next = (1.0 - g) * tau + 2.0 * g
        m = ((1.0 - g) * tau * m + g * (y + theta)) / tau_next
        theta, tau = theta_next, tau_next
        thetas[n] = theta
        summaries.append(GaussianSummary(m.copy(), np.full(d_x, 1.0 / tau)))
    return thetas, summaries


def toy_exact_free_energy(theta: float, summary: GaussianSummary, y) -> float:
    """Closed-form free energy of a diagonal Gaussian law on the toy model.

    F = E[U] - entropy with U(theta, x) = d_x log(2 pi)
    + 0.5 sum (x_i - theta)^2 + (y_i - x_i)^2.
    """
    y = np.asarray(y, dtype=float)
    d_x = y.size
    m, v = summary.mean, summary.var
    e_u = d_x * LOG_2PI + 0.5 * float(
        (2.0 * v + np.square(m - theta) + np.square(y - m)).sum())
    entropy = 0.5 * float((LOG_2PI + 1.0 + np.log(v)).sum())
    return e_u - entropy


def free_energy_estimate(theta, cloud: ParticleCloud, model) -> float:
    """Particle estimate of the free energy sum_i W_i [U + log q_hat](X_i).

    q_hat is the cloud's Gaussian fit, so this is meaningful only where the
    tempered iterates are themselves Gaussian (the toy model).
    """
    fit = gaussian_fit(cloud)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    u = -np.asarray(model.log_joint(theta, cloud.positions), dtype=float)
    return float(cloud.weights @ (u + fit.log_density(cloud.positions)))
