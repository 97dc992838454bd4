"""Reference algorithms the particle mirror method is compared against.

* em_gmm: exact EM for the two-component symmetric Gaussian mixture.
* pgd_step / ipla_step: particle gradient descent and the interacting
  particle Langevin algorithm (unadjusted Langevin moves on the latents;
  IPLA adds N-scaled noise to the parameter step).
* saem_sbm: stochastic approximation EM for the block model with a single
  MCMC chain and Robbins-Monro averaging of sufficient statistics.
* smc_mml: an SMC sampler on the product target prod_{i<=beta} p_theta(x_i, y)
  whose beta-ladder concentrates the theta-marginal on the MLE.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np
from scipy.special import expit

from .core import (
    ParticleCloud,
    RngStream,
    RunTrace,
    as_generator,
    sanitize_log_density,
)
from .errors import EmptyBlock, MissingLatentGradient, WeightCollapse
from .mmle import joint_target, stop_rule
from .models.sbm import SbmModel, sbm_suff_stats
from .smc_engine import KernelConfig, discrete_sweeps

__all__ = [
    "em_gmm",
    "pgd_step",
    "ipla_step",
    "run_pgd",
    "run_ipla",
    "saem_sbm",
    "sbm_m_step",
    "smc_mml",
]


# ---------------------------------------------------------------------------
# EM for the symmetric two-component mixture


def em_gmm(data, alpha: float, theta0: float, T: int) -> RunTrace:
    """EM iterates for y_i ~ alpha N(theta, 1) + (1 - alpha) N(-theta, 1).

    E-step responsibilities r_i = expit(logit(alpha) + 2 y_i theta); M-step
    theta = mean((2 r - 1) y), the maximizer of the complete-data objective.
    """
    y = np.asarray(data, dtype=float)
    if y.size == 0:
        raise ValueError("data must be nonempty")
    logit = np.log(alpha) - np.log1p(-alpha)
    thetas = np.zeros((T + 1, 1))
    elapsed = np.zeros(T + 1, dtype=np.int64)
    theta = float(theta0)
    thetas[0, 0] = theta
    for n in range(1, T + 1):
        t0 = time.perf_counter_ns()
        r = expit(logit + 2.0 * y * theta)
        theta = float(np.mean((2.0 * r - 1.0) * y))
        thetas[n, 0] = theta
        elapsed[n] = time.perf_counter_ns() - t0
    nan = np.full(T + 1, np.nan)
    return RunTrace(thetas, nan.copy(), nan.copy(), elapsed,
                    metadata={"algorithm": "em"})


# ---------------------------------------------------------------------------
# Langevin-type particle algorithms


def _langevin_step(model, theta, particles, gamma, gen, theta_noise: bool):
    if not model.supports_latent_gradient:
        raise MissingLatentGradient("model provides no grad_x_U")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.asarray(particles, dtype=float)
    n = x.shape[0]
    # overflow here just means the run is diverging; the caller checks
    # isfinite and freezes, so keep numpy quiet about it
    with np.errstate(over="ignore", invalid="ignore"):
        grad_th = np.asarray(model.grad_theta_U(theta, x), dtype=float).mean(axis=0)
        grad_x = np.asarray(model.grad_x_U(theta, x), dtype=float)
        x_next = x - gamma * grad_x + np.sqrt(2.0 * gamma) * gen.standard_normal(x.shape)
        theta_next = theta - gamma * grad_th
        if theta_noise:
            theta_next = theta_next + np.sqrt(2.0 * gamma / n) * gen.standard_normal(theta.size)
    return theta_next, x_next


def pgd_step(model, theta, particles, gamma, rng):
    """One particle-gradient-descent step; returns (theta, particles)."""
    return _langevin_step(model, theta, particles, gamma, as_generator(rng), False)


def ipla_step(model, theta, particles, gamma, rng):
    """One interacting-particle Langevin step (theta gets sqrt(2 gamma/N) noise)."""
    return _langevin_step(model, theta, particles, gamma, as_generator(rng), True)


def _run_langevin(model, theta0, gamma, T, num_particles, rng, theta_noise):
    gen_init = rng.substream(0).generator()
    gen_step = rng.substream(2).generator()
    theta = np.atleast_1d(np.asarray(theta0, dtype=float))
    x = model.sample_prior0(gen_init, num_particles)
    thetas = np.zeros((T + 1, theta.size))
    elapsed = np.zeros(T + 1, dtype=np.int64)
    thetas[0] = theta
    divergence_iteration = None
    for n in range(1, T + 1):
        t0 = time.perf_counter_ns()
        theta_next, x_next = _langevin_step(model, theta, x, gamma, gen_step,
                                            theta_noise)
        if not (np.isfinite(theta_next).all() and np.isfinite(x_next).all()):
            # freeze at the last finite state and pad the remaining rows
            divergence_iteration = n
            thetas[n:] = theta
            break
        theta, x = theta_next, x_next
        thetas[n] = theta
        elapsed[n] = time.perf_counter_ns() - t0
    nan = np.full(T + 1, np.nan)
    cloud = ParticleCloud.equal_weights(model.latent_space, x)
    return RunTrace(thetas, nan.copy(), nan.copy(), elapsed, final_cloud=cloud,
                    metadata={"algorithm": "ipla" if theta_noise else "pgd",
                              "divergence_iteration": divergence_iteration})


def run_pgd(model, theta0, gamma, T, num_particles, rng: RngStream) -> RunTrace:
    """Particle gradient descent for T steps; diverged runs freeze theta and
    record the iteration under metadata["divergence_iteration"]."""
    return _run_langevin(model, theta0, gamma, T, num_particles, rng, False)


def run_ipla(model, theta0, gamma, T, num_particles, rng: RngStream) -> RunTrace:
    """Interacting particle Langevin algorithm, same conventions as run_pgd."""
    return _run_langevin(model, theta0, gamma, T, num_particles, rng, True)


# ---------------------------------------------------------------------------
# Stochastic approximation EM for the block model


def sbm_m_step(s_counts, s_edges, s_pairs, prev_nu=None):
    """Closed-form M-step from averaged sufficient statistics.

    p_q = s_q / sum(s); nu_ql = edge average / pair average.  Block pairs
    with zero pair mass have no information: their nu comes from prev_nu, or
    EmptyBlock is raised when no previous value exists.
    """
    s_counts = np.asarray(s_counts, dtype=float)
    s_edges = np.asarray(s_edges, dtype=float)
    s_pairs = np.asarray(s_pairs, dtype=float)
    p = s_counts / s_counts.sum()
    empty = s_pairs <= 0
    if empty.any() and prev_nu is None:
        raise EmptyBlock("block pair with zero pair count and no fallback value")
    nu = np.where(empty, 0.0 if prev_nu is None else np.asarray(prev_nu, dtype=float),
                  s_edges / np.where(empty, 1.0, s_pairs))
    return p, nu


def saem_sbm(adjacency, num_blocks: int, theta0, T: int, rng: RngStream,
             stop_threshold: Optional[float] = None) -> RunTrace:
    """Stochastic approximation EM on the block model.

    Per iteration n: one single-site Metropolis sweep of the (single) label
    chain targeting p_theta(x | y); statistics update
    s <- s + (1/n)(S(x) - s); closed-form M-step.  The n=1 step has weight 1,
    so no statistics initialization is needed.
    """
    model = SbmModel(adjacency, num_blocks)
    q = model.num_blocks
    theta = np.atleast_1d(np.asarray(theta0, dtype=float))
    gen_init = rng.substream(0).generator()
    gen_sweep = rng.substream(2).generator()
    x = gen_init.integers(0, q, size=(1, model.d_x))
    kernel = KernelConfig.single_site(proposal="uniform", sweeps=1)

    s_counts = np.zeros(q)
    s_edges = np.zeros((q, q))
    s_pairs = np.zeros((q, q))
    _, prev_nu = model.unpack_theta(theta)

    thetas = np.zeros((T + 1, model.d_theta))
    accept = np.full(T + 1, np.nan)
    elapsed = np.zeros(T + 1, dtype=np.int64)
    thetas[0] = theta
    stopped_at = None
    rows = T + 1
    for n in range(1, T + 1):
        t0 = time.perf_counter_ns()
        # M-step ratios can hit exactly 0 or 1; keep the MH log densities
        # finite without touching the recorded theta
        p_cur, nu_cur = model.unpack_theta(theta)
        nu_safe = np.clip(nu_cur, 1e-12, 1.0 - 1e-12)
        p_safe = np.clip(p_cur, 1e-12, None)
        target = joint_target(model, model.pack_theta(p_safe, nu_safe))
        x, _, acc, prop = discrete_sweeps(x, None, target, kernel, gen_sweep)

        gamma_n = 1.0 / n
        counts, edges, pairs = sbm_suff_stats(x[0], model.adjacency, q)
        s_counts += gamma_n * (counts - s_counts)
        s_edges += gamma_n * (edges - s_edges)
        s_pairs += gamma_n * (pairs - s_pairs)
        p, prev_nu = sbm_m_step(s_counts, s_edges, s_pairs, prev_nu)
        theta = model.pack_theta(p, prev_nu)

        thetas[n] = theta
        accept[n] = acc / prop
        elapsed[n] = time.perf_counter_ns() - t0
        if stop_threshold is not None and stop_rule(thetas[n - 1], theta, stop_threshold):
            stopped_at = n
            rows = n + 1
            break
    cloud = ParticleCloud.equal_weights(model.latent_space, x)
    return RunTrace(thetas[:rows], np.full(rows, np.nan), accept[:rows],
                    elapsed[:rows], final_cloud=cloud,
                    metadata={"algorithm": "saem", "stopped_at": stopped_at,
                              "iterations_run": rows - 1})


# ---------------------------------------------------------------------------
# SMC over the replicated-latent target


def _joint_multi(model, thetas, xs):
    """log p_theta_i(x_i, y) with one theta row per particle."""
    fn = getattr(model, "log_joint_multi", None)
    if callable(fn):
        return sanitize_log_density(fn(thetas, xs))
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = model.log_joint(thetas[i], xs[i:i + 1])[0]
    return sanitize_log_density(out)


def smc_mml(model, beta_ladder, num_particles: int, rng: RngStream,
            theta_box, theta_step_scale: float = 0.5) -> RunTrace:
    """SMC sampler whose rung-beta target is prod_{i<=beta} p_theta(x_i, y)
    on theta in a flat box.

    Per rung: extend every particle with a fresh latent from mu_0 and weight
    by the density ratio, record the weighted theta mean, resample, then one
    random-walk Metropolis move on theta and an independence refresh of every
    latent copy.  The theta move re-evaluates all beta joint factors, so rung
    cost grows linearly along the ladder.
    """
    beta_ladder = [int(b) for b in beta_ladder]
    if beta_ladder != list(range(1, len(beta_ladder) + 1)):
        raise ValueError("beta ladder must be 1, 2, ..., T")
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in theta_box)
    d_theta = lo.size
    n = num_particles
    gen_init = rng.substream(0).generator()
    gen_resample = rng.substream(1).generator()
    gen_move = rng.substream(2).generator()

    thetas_p = gen_init.uniform(lo, hi, size=(n, d_theta))
    log_w = np.full(n, -np.log(n))
    xs = []  # one (n, d_x) array per rung
    loglik = np.zeros(n)  # per particle, sum of joint factors at its theta

    t_total = len(beta_ladder)
    theta_trace = np.zeros((t_total + 1, d_theta))
    ess = np.zeros(t_total + 1)
    accept = np.full(t_total + 1, np.nan)
    elapsed = np.zeros(t_total + 1, dtype=np.int64)
    theta_trace[0] = thetas_p.mean(axis=0)
    ess[0] = n

    for t in beta_ladder:
        t0 = time.perf_counter_ns()
        # extend with x_t ~ mu_0; incremental weight p_theta(x_t, y) / mu_0(x_t)
        x_new = model.sample_prior0(gen_init, n)
        lj = _joint_multi(model, thetas_p, x_new)
        log_w = log_w + lj - sanitize_log_density(model.log_prior0(x_new))
        xs.append(x_new)
        loglik += lj

        shift = log_w.max()
        if not np.isfinite(shift):
            raise WeightCollapse("rung %d: every extension weight degenerated" % t)
        w = np.exp(log_w - shift)
        w /= w.sum()
        theta_trace[t] = w @ thetas_p
        ess[t] = 1.0 / np.square(w).sum()

        idx = gen_resample.choice(n, size=n, p=w)
        thetas_p = thetas_p[idx]
        loglik = loglik[idx]
        xs = [x[idx] for x in xs]
        log_w = np.full(n, -np.log(n))

        # random-walk move on theta against all beta joint factors
        prop = thetas_p + theta_step_scale * gen_move.standard_normal((n, d_theta))
        in_box = ((prop >= lo) & (prop <= hi)).all(axis=1)
        prop_loglik = np.zeros(n)
        for x in xs:
            prop_loglik += _joint_multi(model, prop, x)
        with np.errstate(invalid="ignore"):
            ok = np.log(gen_move.random(n)) < np.where(in_box, prop_loglik - loglik,
                                                       -np.inf)
        thetas_p[ok] = prop[ok]
        loglik[ok] = prop_loglik[ok]
        accept[t] = ok.mean()

        # independence refresh of every latent copy from mu_0
        for s in range(t):
            x_prop = model.sample_prior0(gen_move, n)
            new_term = _joint_multi(model, thetas_p, x_prop)
            old_term = _joint_multi(model, thetas_p, xs[s])
            dterm = new_term - old_term
            log_ratio = (dterm - sanitize_log_density(model.log_prior0(x_prop))
                         + sanitize_log_density(model.log_prior0(xs[s])))
            with np.errstate(invalid="ignore"):
                ok = np.log(gen_move.random(n)) < log_ratio
            xs[s][ok] = x_prop[ok]
            loglik[ok] += dterm[ok]
        elapsed[t] = time.perf_counter_ns() - t0

    return RunTrace(theta_trace, ess, accept, elapsed,
                    metadata={"algorithm": "smc_mml",
                              "theta_box": (lo.tolist(), hi.tolist()),
                              "theta_step_scale": theta_step_scale,
                              "num_particles": n})
