"""Generic SMC machinery: resampling, mutation kernels, covariance adaptation.

The kernels are invariant for a supplied LogTarget and never touch weights;
resampling never moves positions.  Everything is batched over particles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    ParticleCloud,
    as_generator,
    sanitize_log_density,
)
from .errors import DegenerateCloud, NonSPDCovariance, NotNormalized

__all__ = [
    "LogTarget",
    "KernelConfig",
    "multinomial_resample",
    "resample_indices",
    "rwm_mutate",
    "discrete_mutate",
    "adapt_rwm_covariance",
]

COVARIANCE_FLOOR = 1e-6
DEFAULT_RWM_SCALE = 2.38  # classical optimal-scaling constant, divided by sqrt(d) at use


@dataclass(frozen=True)
class LogTarget:
    """An unnormalized log density over the latent space.

    fn maps a particle batch (N, dim) to per-particle log densities (N,),
    returning -inf off-support.  Discrete targets may also provide
    site_fn(xs, site) -> (N, K): the log density with coordinate ``site``
    replaced by each category, valid up to per-particle additive constants.

    Targets that factorize across coordinates may additionally provide
    factor_fn(xs) -> (N, dim, K) (or (1, dim, K) when the factors do not
    depend on the other coordinates): entry [i, j, k] is the log factor of
    coordinate j at category k, valid up to per-site additive constants.
    Kernels exploit this to update every site of a sweep at once.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    site_fn: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    factor_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        return sanitize_log_density(self.fn(xs))

    def site_logits(self, xs: np.ndarray, site: int) -> np.ndarray:
        if self.site_fn is None:
            raise ValueError("target provides no site conditionals")
        return sanitize_log_density(self.site_fn(xs, site))

    def factor_logits(self, xs: np.ndarray) -> np.ndarray:
        if self.factor_fn is None:
            raise ValueError("target does not factorize over sites")
        return sanitize_log_density(self.factor_fn(xs))

    @staticmethod
    def combine(terms) -> "LogTarget":
        """Linear combination sum_k coef_k * target_k.

        Site conditionals (and factor forms) combine too when every term
        has them.
        """
        terms = [(float(c), t) for c, t in terms]

        def fn(xs):
            out = None
            for c, t in terms:
                if c == 0.0:
                    continue
                v = c * t(xs)
                out = v if out is None else out + v
            return out if out is not None else np.zeros(xs.shape[0])

        if all(t.site_fn is not None for _, t in terms):
            def site_fn(xs, site):
                out = None
                for c, t in terms:
                    if c == 0.0:
                        continue
                    v = c * t.site_logits(xs, site)
                    out = v if out is None else out + v
                return out if out is not None else np.zeros((xs.shape[0], 1))
        else:
            site_fn = None

        if all(t.factor_fn is not None for _, t in terms):
            def factor_fn(xs):
                out = None
                for c, t in terms:
                    if c == 0.0:
                        continue
                    v = c * t.factor_logits(xs)
                    out = v if out is None else out + v
                return out if out is not None else np.zeros((1,) + xs.shape[1:] + (1,))
        else:
            factor_fn = None
        return LogTarget(fn, site_fn, factor_fn)


@dataclass(frozen=True)
class KernelConfig:
    """Mutation kernel settings.

    kind "rwm": Gaussian random-walk Metropolis with proposal covariance
    step_scale^2 * covariance.  covariance None means: adapt from the current
    cloud each call.  step_scale None means 2.38/sqrt(dim).

    kind "discrete": single-site Metropolis sweeps in random site order, with
    a uniform-over-categories or prior-category proposal.
    """

    kind: str
    step_scale: Optional[float] = None
    covariance: Optional[object] = None  # scalar, (d,) diagonal, or (d, d)
    proposal: str = "uniform"
    sweeps: int = 1
    mcmc_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("rwm", "discrete"):
            raise ValueError("kernel kind must be 'rwm' or 'discrete'")
        if self.step_scale is not None and self.step_scale <= 0:
            raise ValueError("step_scale must be > 0")
        if self.proposal not in ("uniform", "prior"):
            raise ValueError("proposal must be 'uniform' or 'prior'")
        if self.sweeps < 1 or self.mcmc_steps < 1:
            raise ValueError("sweeps and mcmc_steps must be >= 1")

    @classmethod
    def random_walk(cls, step_scale=None, covariance=None, mcmc_steps=1) -> "KernelConfig":
        return cls("rwm", step_scale=step_scale, covariance=covariance, mcmc_steps=mcmc_steps)

    @classmethod
    def single_site(cls, proposal="uniform", sweeps=1) -> "KernelConfig":
        return cls("discrete", proposal=proposal, sweeps=sweeps)


def resample_indices(cloud: ParticleCloud, rng) -> np.ndarray:
    """Ancestor indices for a multinomial resampling of the cloud."""
    if not cloud.normalized:
        raise NotNormalized("resampling needs a normalized cloud")
    gen = as_generator(rng)
    n = cloud.num_particles
    w = np.exp(cloud.log_weights)
    w = w / w.sum()  # remove the <=1e-12 normalization slack choice() rejects
    return gen.choice(n, size=n, p=w)


def multinomial_resample(cloud: ParticleCloud, rng) -> ParticleCloud:
    """Draw N particles i.i.d. from the weighted empirical law; equal weights out."""
    idx = resample_indices(cloud, rng)
    return ParticleCloud.equal_weights(cloud.space, cloud.positions[idx])


def _scale_tril(covariance, dim: int, step_scale: Optional[float]) -> np.ndarray:
    """Cholesky factor of step_scale^2 * covariance, accepting scalar/diag/full."""
    scale = DEFAULT_RWM_SCALE / np.sqrt(dim) if step_scale is None else float(step_scale)
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim == 0:
        if cov <= 0 or not np.isfinite(cov):
            raise NonSPDCovariance("scalar covariance must be finite and > 0")
        return scale * np.sqrt(float(cov)) * np.eye(dim)
    if cov.ndim == 1:
        if cov.shape != (dim,) or (cov <= 0).any() or not np.isfinite(cov).all():
            raise NonSPDCovariance("diagonal covariance must be positive, length dim")
        return scale * np.diag(np.sqrt(cov))
    if cov.shape != (dim, dim) or not np.isfinite(cov).all():
        raise NonSPDCovariance("covariance must be (dim, dim) and finite")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise NonSPDCovariance("covariance must be symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NonSPDCovariance("covariance is not positive definite") from exc
    return scale * chol


def rwm_chain(positions, log_density, target, scale_tril, steps, gen):
    """Advance every particle by ``steps`` Metropolis steps; returns
    (positions, log_density, accepted, proposed).

    log_density holds target values at the current positions and is kept in
    sync, so callers can reuse it instead of re-evaluating the target.
    """
    x = np.array(positions, dtype=float)
    lp = np.array(log_density, dtype=float)
    n = x.shape[0]
    accepted = 0
    for _ in range(steps):
        noise = gen.standard_normal(x.shape)
        proposal = x + noise @ scale_tril.T
        lp_prop = target(proposal)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = np.log(gen.random(n)) < lp_prop - lp
        x[accept] = proposal[accept]
        lp[accept] = lp_prop[accept]
        accepted += int(accept.sum())
    return x, lp, accepted, steps * n


def rwm_mutate(cloud: ParticleCloud, target: LogTarget, config: KernelConfig, rng):
    """Random-walk Metropolis pass over a continuous cloud.

    Weights pass through unchanged; returns (cloud, acceptance_rate).
    """
    if cloud.space.is_discrete:
        raise ValueError("rwm_mutate needs a continuous latent space")
    gen = as_generator(rng)
    cov = config.covariance
    if cov is None:
        cov = adapt_rwm_covariance(cloud)
    tril = _scale_tril(cov, cloud.space.dim, config.step_scale)
    lp0 = target(cloud.positions)
    x, _, acc, prop = rwm_chain(cloud.positions, lp0, target, tril, config.mcmc_steps, gen)
    out = ParticleCloud(cloud.space, x, cloud.log_weights, cloud.normalized)
    return out, acc / prop


def _factorized_sweeps(x, vals, target, config, gen, category_probs):
    """Whole-sweep Metropolis for targets that factorize across sites.

    Each site's acceptance ratio involves only its own factor, so one sweep
    updates every coordinate simultaneously; this is the same kernel as the
    sequential sweep, just without the irrelevant ordering.
    """
    n, dim = x.shape
    sites = np.arange(dim)[None, :]
    accepted = 0
    proposed = 0
    logq = None
    cdf = None
    if config.proposal == "prior":
        probs = np.stack([np.asarray(category_probs(j), dtype=float)
                          for j in range(dim)])
        with np.errstate(divide="ignore"):
            logq = np.log(probs)
        cdf = np.cumsum(probs, axis=1)
    for _ in range(config.sweeps):
        logits = target.factor_logits(x)
        num_cat = logits.shape[2]
        if num_cat == 1:
            continue
        pidx = np.arange(n)[:, None] if logits.shape[0] == n else np.zeros((1, 1), dtype=int)
        u_prop = gen.random((n, dim))
        u_acc = gen.random((n, dim))
        if config.proposal == "uniform":
            cand = np.minimum((u_prop * num_cat).astype(np.int64), num_cat - 1)
            correction = 0.0
        elif num_cat == 2:
            cand = (u_prop >= cdf[None, :, 0]).astype(np.int64)
            correction = logq[sites, x] - logq[sites, cand]
        else:
            cand = np.minimum((u_prop[:, :, None] >= cdf[None, :, :]).sum(axis=2),
                              num_cat - 1)
            correction = logq[sites, x] - logq[sites, cand]
        delta = logits[pidx, sites, cand] - logits[pidx, sites, x]
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = np.log(u_acc) < delta + correction
        x = np.where(accept, cand, x)
        if vals is not None:
            vals += np.where(accept, delta, 0.0).sum(axis=1)
        accepted += int(accept.sum())
        proposed += n * dim
    return x, vals, accepted, max(proposed, 1)


def discrete_sweeps(positions, values, target, config, gen, category_probs=None):
    """Single-site Metropolis sweeps over every coordinate in random order.

    positions: (N, dim) int categories.  values: per-particle target values to
    keep in sync, or None.  category_probs: callable site -> (K,) law for the
    "prior" proposal.  Returns (positions, values, accepted, proposed).
    """
    x = np.array(positions)
    vals = None if values is None else np.array(values, dtype=float)
    if target.factor_fn is not None:
        return _factorized_sweeps(x, vals, target, config, gen, category_probs)
    n, dim = x.shape
    rows = np.arange(n)
    accepted = 0
    proposed = 0
    for _ in range(config.sweeps):
        order = gen.permutation(dim)
        u_prop = gen.random((dim, n))
        u_acc = gen.random((dim, n))
        for k, site in enumerate(order):
            logits = target.site_logits(x, int(site))
            num_cat = logits.shape[1]
            if num_cat == 1:
                continue
            cur = x[:, site]
            if config.proposal == "uniform":
                cand = np.minimum((u_prop[k] * num_cat).astype(np.int64), num_cat - 1)
                correction = 0.0
            else:
                probs = np.asarray(category_probs(int(site)), dtype=float)
                cand = np.searchsorted(np.cumsum(probs), u_prop[k], side="right")
                cand = np.minimum(cand, num_cat - 1)
                with np.errstate(divide="ignore"):
                    logq = np.log(probs)
                correction = logq[cur] - logq[cand]
            delta = logits[rows, cand] - logits[rows, cur]
            with np.errstate(divide="ignore", invalid="ignore"):
                accept = np.log(u_acc[k]) < delta + correction
            # self-proposals have delta 0 and count as accepted no-ops
            x[accept, site] = cand[accept]
            if vals is not None:
                vals[accept] += delta[accept]
            accepted += int(accept.sum())
            proposed += n
    return x, vals, accepted, max(proposed, 1)


def discrete_mutate(cloud: ParticleCloud, target: LogTarget, config: KernelConfig, rng,
                    category_probs=None):
    """Single-site Metropolis sweeps over a discrete cloud.

    Weights pass through unchanged; returns (cloud, acceptance_rate).
    """
    if not cloud.space.is_discrete:
        raise ValueError("discrete_mutate needs a discrete latent space")
    if cloud.space.num_categories == 1:
        return cloud, 1.0
    gen = as_generator(rng)
    x, _, acc, prop = discrete_sweeps(cloud.positions, None, target, config, gen,
                                      category_probs)
    out = ParticleCloud(cloud.space, x, cloud.log_weights, cloud.normalized)
    return out, acc / prop


def adapt_rwm_covariance(cloud: ParticleCloud) -> np.ndarray:
    """Weighted empirical covariance with a trace-scaled SPD floor.

    Degenerate clouds (zero spread) fall back to the identity; non-finite
    moments raise DegenerateCloud.  The caller applies the 2.38/sqrt(d)
    proposal scaling.
    """
    if cloud.space.is_discrete:
        raise ValueError("covariance adaptation needs a continuous space")
    if not cloud.normalized:
        raise NotNormalized("covariance adaptation needs a normalized cloud")
    w = np.exp(cloud.log_weights)
    x = np.asarray(cloud.positions, dtype=float)
    with np.errstate(invalid="ignore"):
        mean = w @ x
        centered = x - mean
        cov = (w[:, None] * centered).T @ centered
    if not np.isfinite(cov).all():
        raise DegenerateCloud("empirical covariance has non-finite entries")
    trace = float(np.trace(cov))
    dim = cloud.space.dim
    # spread below float cancellation noise counts as zero
    tol = 16.0 * np.finfo(float).eps * max(float(np.square(x).mean()), 1.0)
    if trace <= tol:
        return np.eye(dim)
    return cov + (COVARIANCE_FLOOR * trace / dim) * np.eye(dim)
