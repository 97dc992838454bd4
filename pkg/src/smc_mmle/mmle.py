"""Maximum marginal likelihood by mirror descent on (theta, posterior) jointly.

Each iteration performs a mirror step on theta using the current particle
approximation of the posterior, then moves the particles to the next
distribution in a tempered sequence via resample / mutate / reweight.

Two variants differ only in the particle-side target sequence:

* "exact": the target after n steps is mu_0^{c_n} * prod_j p_{theta_j}^{a_j},
  a product over the whole parameter history.  Evaluating it costs one joint
  density per past iteration, so per-iteration work grows linearly in n.
* "fast": the history product is collapsed to the two-term interpolation
  mu_0^{c_n} * p_{theta_{n-1}}^{1-c_n}, giving O(1) evaluations per
  iteration.

Here c_n = prod_{k<=n}(1 - gamma_k) is the residual mass on mu_0 and
a_j = gamma_{j+1} * prod_{k=j+2}^{n}(1 - gamma_k); the exponents satisfy
c_n + sum_j a_j = 1, so both targets temper from mu_0 toward a full joint.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    ModelContract,
    ParticleCloud,
    RngStream,
    RunTrace,
    StepSchedule,
    ThetaState,
    effective_sample_size,
    normalize_weights,
    sanitize_log_density,
)
from .errors import AllWeightsDegenerate, WeightCollapse
from .geometry import MirrorMap, mirror_inverse, theta_state
from .smc_engine import (
    KernelConfig,
    LogTarget,
    discrete_sweeps,
    resample_indices,
    rwm_chain,
    adapt_rwm_covariance,
    _scale_tril,
)

__all__ = [
    "ThetaHistory",
    "MmleConfig",
    "theta_update",
    "prior_target",
    "joint_target",
    "exact_log_target",
    "exact_log_weight",
    "smcs_log_target",
    "smcs_log_weight",
    "stop_rule",
    "run_mmle",
]


@dataclass
class ThetaHistory:
    """Append-only record of parameter states theta_0, theta_1, ..."""

    states: list = field(default_factory=list)

    def append(self, state: ThetaState) -> None:
        self.states.append(state)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i) -> ThetaState:
        return self.states[i]

    @property
    def last(self) -> ThetaState:
        return self.states[-1]

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([s.theta for s in self.states])


@dataclass(frozen=True)
class MmleConfig:
    """Settings for one estimation run.

    variant selects the particle-target sequence: "exact" (full history
    product) or "fast" (two-term interpolation).  theta_grad_scale multiplies
    the weighted gradient before the mirror step; models whose U sums many
    data terms use it to express a per-datum step.  A vector scale applies
    component-wise, for parameter blocks whose gradients aggregate different
    term counts.  The string "newton" divides the gradient by gamma times the
    weighted mean of model.theta_curvature, so the step lands on the
    minimizer of the quadratic theta-subproblem under the current cloud.
    theta_postprocess, if given, is applied to theta after every mirror step
    (and to theta_0).
    """

    schedule: StepSchedule
    mirror_map: MirrorMap
    kernel: KernelConfig
    num_particles: int
    horizon: Optional[int] = None
    variant: str = "fast"
    theta_grad_scale: object = 1.0
    theta_postprocess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    stop_threshold: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("exact", "fast"):
            raise ValueError("variant must be 'exact' or 'fast'")
        if self.num_particles < 2:
            raise ValueError("need at least 2 particles")
        if self.horizon is not None:
            if not 0 <= self.horizon <= self.schedule.horizon:
                raise ValueError("horizon exceeds the step schedule")
        if isinstance(self.theta_grad_scale, str):
            if self.theta_grad_scale != "newton":
                raise ValueError("the only named theta_grad_scale is 'newton'")
        else:
            scale = np.asarray(self.theta_grad_scale, dtype=float)
            if scale.ndim > 1 or scale.size == 0 or (scale <= 0).any():
                raise ValueError("theta_grad_scale must be > 0 (scalar or vector)")
        if self.stop_threshold is not None and self.stop_threshold <= 0:
            raise ValueError("stop_threshold must be > 0")

    @property
    def iterations(self) -> int:
        return self.schedule.horizon if self.horizon is None else self.horizon


def theta_update(mirror_map: MirrorMap, theta: ThetaState, cloud: ParticleCloud,
                 model: ModelContract, gamma: float, grad_scale=1.0) -> ThetaState:
    """One mirror step: dual -= gamma * weighted mean of grad_theta U.

    For the squared-norm map this is plain gradient descent on theta with the
    particle average gradient.  grad_scale "newton" uses the weighted mean of
    model.theta_curvature in place of 1/(gamma * grad_scale), which solves the
    quadratic theta-subproblem exactly when U is quadratic in theta.
    """
    grads = np.asarray(model.grad_theta_U(theta.theta, cloud.positions), dtype=float)
    if isinstance(grad_scale, str):
        curv_fn = getattr(model, "theta_curvature", None)
        if not callable(curv_fn):
            raise ValueError("grad_scale 'newton' needs model.theta_curvature")
        curv = cloud.weights @ np.asarray(curv_fn(theta.theta, cloud.positions),
                                          dtype=float)
        if not (curv > 0).all():
            raise ValueError("theta_curvature must average to > 0")
        g = (cloud.weights @ grads) / (gamma * curv)
    else:
        g = np.asarray(grad_scale, dtype=float) * (cloud.weights @ grads)
    dual_next = theta.dual - gamma * g
    theta_next = mirror_inverse(mirror_map, dual_next)
    mirror_map.check_domain(theta_next)
    return theta_state(mirror_map, theta_next)


def _history_thetas(history) -> list:
    if isinstance(history, ThetaHistory):
        return [s.theta for s in history.states]
    return [np.atleast_1d(np.asarray(t, dtype=float)) for t in history]


def prior_target(model: ModelContract) -> LogTarget:
    """log mu_0 as a LogTarget, with site conditionals when the model has them."""
    site = getattr(model, "site_log_prior0", None)
    factor = getattr(model, "factor_log_prior0", None)
    return LogTarget(model.log_prior0,
                     site if callable(site) else None,
                     factor if callable(factor) else None)


def joint_target(model: ModelContract, theta) -> LogTarget:
    """log p_theta(x, y) at fixed theta as a LogTarget."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))

    def fn(xs):
        return model.log_joint(theta, xs)

    if model.supports_site_conditionals:
        def site_fn(xs, site):
            return model.site_log_joint(theta, xs, site)
    else:
        site_fn = None

    factor = getattr(model, "factor_log_joint", None)
    if callable(factor):
        def factor_fn(xs):
            return factor(theta, xs)
    else:
        factor_fn = None
    return LogTarget(fn, site_fn, factor_fn)


def _tail_products(schedule: StepSchedule, n: int) -> np.ndarray:
    """tail[i] = prod_{k=i+1}^{n} (1 - gamma_k), for i = 0..n (tail[n] = 1)."""
    one_minus = 1.0 - schedule.gammas[:n]
    tail = np.ones(n + 1)
    if n > 0:
        tail[:-1] = np.cumprod(one_minus[::-1])[::-1]
    return tail


def exact_exponents(schedule: StepSchedule, n: int):
    """(c_n, a_0..a_{n-1}) with c_n + sum a_j = 1: the history-product exponents."""
    tail = _tail_products(schedule, n)
    c_n = tail[0]
    a = schedule.gammas[:n] * tail[1:]
    return float(c_n), a


def exact_log_target(n: int, history, schedule: StepSchedule,
                     model: ModelContract) -> LogTarget:
    """Target after n steps of the exact variant.

    x -> c_n log mu_0(x) + sum_{j<n} a_j log p_{theta_j}(x, y).  Needs
    theta_0..theta_{n-1} from the history; evaluation does one joint-density
    pass per history entry, hence cost linear in n.
    """
    if n == 0:
        return prior_target(model)
    thetas = _history_thetas(history)
    if len(thetas) < n:
        raise ValueError("history holds %d thetas, need %d" % (len(thetas), n))
    c_n, a = exact_exponents(schedule, n)
    terms = [(c_n, prior_target(model))]
    terms += [(a[j], joint_target(model, thetas[j])) for j in range(n)]
    return LogTarget.combine(terms)


def exact_log_weight(n: int, history, schedule: StepSchedule,
                     model: ModelContract) -> LogTarget:
    """Incremental log weight of the exact variant at step n >= 1.

    x -> gamma_n * [log p_{theta_{n-1}}(x, y) - (target at step n-1)(x)].
    """
    if n < 1:
        raise ValueError("weights are defined for n >= 1")
    thetas = _history_thetas(history)
    gamma_n = schedule.gamma(n)
    return LogTarget.combine([
        (gamma_n, joint_target(model, thetas[n - 1])),
        (-gamma_n, exact_log_target(n - 1, thetas, schedule, model)),
    ])


def smcs_log_target(n: int, theta_prev, schedule: StepSchedule,
                    model: ModelContract) -> LogTarget:
    """Two-term target of the fast variant after n >= 1 steps.

    x -> c_n log mu_0(x) + (1 - c_n) log p_{theta_{n-1}}(x, y).
    """
    if n < 1:
        raise ValueError("the collapsed target is defined for n >= 1")
    c_n = schedule.c(n)
    return LogTarget.combine([
        (c_n, prior_target(model)),
        (1.0 - c_n, joint_target(model, theta_prev)),
    ])


def smcs_log_weight(n: int, theta_prev2, theta_prev, schedule: StepSchedule,
                    model: ModelContract) -> LogTarget:
    """Incremental log weight of the fast variant at step n >= 2.

    The three exponents (1-c_n), -(1-c_{n-1}), -(c_{n-1}-c_n) sum to zero,
    so constants in the log densities cancel.  Step n=1 coincides with the
    exact variant's weight.
    """
    if n < 2:
        raise ValueError("the collapsed weight is defined for n >= 2; "
                         "n=1 coincides with exact_log_weight")
    c_prev, c_n = schedule.c(n - 1), schedule.c(n)
    return LogTarget.combine([
        (1.0 - c_n, joint_target(model, theta_prev)),
        (-(1.0 - c_prev), joint_target(model, theta_prev2)),
        (-(c_prev - c_n), prior_target(model)),
    ])


def stop_rule(theta_prev: np.ndarray, theta_next: np.ndarray, threshold: float) -> bool:
    """True when max_i (theta_next_i - theta_prev_i)^2 < threshold (strict)."""
    diff = np.asarray(theta_next, dtype=float) - np.asarray(theta_prev, dtype=float)
    return bool(np.max(np.square(diff)) < threshold)


def _mutate(cloud, values, target, config: MmleConfig, model, gen):
    """Kernel pass keeping per-particle target values in sync.

    Returns (cloud, values, acceptance_rate).  values must hold target(x)
    for the incoming positions; random-walk chains and single-site sweeps
    both update them from accepted-move deltas, saving a full target pass.
    """
    kernel = config.kernel
    if cloud.space.is_discrete:
        probs = getattr(model, "prior_category_probs", None)
        if kernel.proposal == "prior" and not callable(probs):
            raise ValueError("kernel proposal 'prior' needs model.prior_category_probs")
        x, values, acc, prop = discrete_sweeps(
            cloud.positions, values, target, kernel, gen,
            probs if callable(probs) else None)
    else:
        cov = kernel.covariance
        if cov is None:
            cov = adapt_rwm_covariance(cloud)
        tril = _scale_tril(cov, cloud.space.dim, kernel.step_scale)
        x, values, acc, prop = rwm_chain(
            cloud.positions, values, target, tril, kernel.mcmc_steps, gen)
    out = ParticleCloud(cloud.space, x, cloud.log_weights, cloud.normalized)
    return out, values, acc / prop


def run_mmle(model: ModelContract, config: MmleConfig, theta0, rng: RngStream,
             frozen_history=None, on_iteration=None) -> RunTrace:
    """Run the full estimation loop and return its trace.

    Iteration n: mirror step on theta from the current weighted cloud, then
    (for n > 1) multinomial resampling, then a kernel pass invariant for the
    step-(n-1) target, then reweighting to the step-n target.  Aborts with
    WeightCollapse if every importance weight degenerates.

    frozen_history, if given, supplies theta_n for every n instead of the
    mirror step (the particle side then tracks a fixed target sequence).
    on_iteration(n, theta_n, cloud_n) is called after each reweight.
    """
    schedule = config.schedule
    num_iters = config.iterations
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if config.theta_postprocess is not None:
        theta0 = config.theta_postprocess(theta0)
    if frozen_history is not None:
        frozen_history = np.atleast_2d(np.asarray(frozen_history, dtype=float))
        if frozen_history.shape[0] < num_iters + 1:
            raise ValueError("frozen_history needs %d rows" % (num_iters + 1))

    history = ThetaHistory()
    history.append(theta_state(config.mirror_map, theta0))

    gen_init = rng.substream(0).generator()
    gen_resample = rng.substream(1).generator()
    gen_mutate = rng.substream(2).generator()

    t0 = time.perf_counter_ns()
    positions = model.sample_prior0(gen_init, config.num_particles)
    cloud = ParticleCloud.equal_weights(model.latent_space, positions)
    values = sanitize_log_density(model.log_prior0(cloud.positions))

    d_theta = theta0.size
    thetas = np.zeros((num_iters + 1, d_theta))
    ess = np.zeros(num_iters + 1)
    accept = np.full(num_iters + 1, np.nan)
    elapsed = np.zeros(num_iters + 1, dtype=np.int64)
    thetas[0] = theta0
    ess[0] = cloud.num_particles
    elapsed[0] = time.perf_counter_ns() - t0

    stopped_at = None
    rows = num_iters + 1
    for n in range(1, num_iters + 1):
        t_iter = time.perf_counter_ns()
        gamma_n = schedule.gamma(n)

        # parameter leg, from the step-(n-1) cloud
        if frozen_history is not None:
            theta_n = frozen_history[n]
        else:
            state = theta_update(config.mirror_map, history.last, cloud, model,
                                 gamma_n, config.theta_grad_scale)
            theta_n = state.theta
            if config.theta_postprocess is not None:
                theta_n = config.theta_postprocess(theta_n)
        history.append(theta_state(config.mirror_map, theta_n))

        # particle leg: resample / mutate (invariant for step n-1) / reweight
        if n > 1:
            idx = resample_indices(cloud, gen_resample)
            cloud = ParticleCloud.equal_weights(model.latent_space,
                                                cloud.positions[idx])
            values = values[idx]

        if n == 1:
            target_prev = prior_target(model)
        elif config.variant == "exact":
            target_prev = exact_log_target(n - 1, history, schedule, model)
        else:
            target_prev = smcs_log_target(n - 1, history[n - 2].theta, schedule, model)
        cloud, values, acc_rate = _mutate(cloud, values, target_prev, config,
                                          model, gen_mutate)

        theta_prev = history[n - 1].theta
        log_p = sanitize_log_density(model.log_joint(theta_prev, cloud.positions))
        if config.variant == "exact":
            # target_n = (1 - gamma_n) target_{n-1} + gamma_n log p_{theta_{n-1}}
            values_next = (1.0 - gamma_n) * values + gamma_n * log_p
        else:
            c_n = schedule.c(n)
            log_prior = sanitize_log_density(model.log_prior0(cloud.positions))
            values_next = c_n * log_prior + (1.0 - c_n) * log_p
        with np.errstate(invalid="ignore"):
            log_w = values_next - values
        try:
            cloud = normalize_weights(ParticleCloud(
                model.latent_space, cloud.positions,
                cloud.log_weights + np.where(np.isnan(log_w), -np.inf, log_w)))
        except AllWeightsDegenerate as exc:
            raise WeightCollapse("iteration %d: every importance weight "
                                 "degenerated" % n) from exc
        values = values_next

        thetas[n] = theta_n
        ess[n] = effective_sample_size(cloud)
        accept[n] = acc_rate
        elapsed[n] = time.perf_counter_ns() - t_iter
        if on_iteration is not None:
            on_iteration(n, theta_n, cloud)
        if (config.stop_threshold is not None
                and stop_rule(thetas[n - 1], theta_n, config.stop_threshold)):
            stopped_at = n
            rows = n + 1
            break

    return RunTrace(
        thetas=thetas[:rows],
        ess=ess[:rows],
        accept=accept[:rows],
        elapsed_ns=elapsed[:rows],
        final_cloud=cloud,
        metadata={
            "variant": config.variant,
            "num_particles": config.num_particles,
            "iterations_requested": num_iters,
            "iterations_run": rows - 1,
            "stopped_at": stopped_at,
        },
    )
