"""Shared data types, the model contract, and seeded RNG plumbing.

Conventions used throughout the package:

* Particle positions are batched: an (N, d) array, float for continuous
  spaces and integer categories for discrete ones.  Model operations accept
  the whole batch and return per-particle vectors; single-point semantics are
  the N=1 case.
* Weights live in log domain and are only exponentiated after a log-sum-exp
  shift.
* All value records are treated as immutable after construction;
  transformations return new objects.
"""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import AllWeightsDegenerate, NotNormalized

__all__ = [
    "LatentSpace",
    "LatentPoint",
    "ParticleCloud",
    "ThetaState",
    "StepSchedule",
    "ModelContract",
    "RngStream",
    "RunTrace",
    "normalize_weights",
    "effective_sample_size",
    "as_generator",
    "sanitize_log_density",
    "nan_density_count",
]


# NaN densities are mapped to -inf (zero density) rather than poisoning the
# weight arithmetic; the counter lets runs report how often that happened.
_NAN_DENSITY_COUNT = [0]


def nan_density_count() -> int:
    """Total NaN log-density values observed so far in this process."""
    return _NAN_DENSITY_COUNT[0]


def sanitize_log_density(values: np.ndarray) -> np.ndarray:
    """Replace NaN log densities with -inf, counting occurrences."""
    values = np.asarray(values, dtype=float)
    bad = np.isnan(values)
    if bad.any():
        _NAN_DENSITY_COUNT[0] += int(bad.sum())
        warnings.warn(
            "NaN log density treated as -inf (%d values)" % int(bad.sum()),
            RuntimeWarning,
            stacklevel=2,
        )
        values = np.where(bad, -np.inf, values)
    return values


@dataclass(frozen=True)
class LatentSpace:
    """The latent state space: a real box R^dim or a categorical product.

    kind is "continuous" or "discrete"; discrete spaces carry the number of
    categories per coordinate.
    """

    kind: str
    dim: int
    num_categories: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise ValueError("kind must be 'continuous' or 'discrete'")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "discrete":
            if self.num_categories is None or self.num_categories < 2:
                raise ValueError("discrete spaces need num_categories >= 2")
        elif self.num_categories is not None:
            raise ValueError("continuous spaces take no num_categories")

    @classmethod
    def continuous_real(cls, dim: int) -> "LatentSpace":
        return cls("continuous", dim)

    @classmethod
    def discrete_categorical(cls, dim: int, num_categories: int) -> "LatentSpace":
        return cls("discrete", dim, num_categories)

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"


@dataclass(frozen=True)
class LatentPoint:
    """A single latent state: real vector or integer category vector."""

    values: np.ndarray

    def validate_in(self, space: LatentSpace) -> None:
        v = np.asarray(self.values)
        if v.shape != (space.dim,):
            raise ValueError("point has length %d, space dim is %d" % (v.size, space.dim))
        if space.is_discrete:
            if not np.issubdtype(v.dtype, np.integer):
                raise ValueError("discrete point must hold integers")
            if (v < 0).any() or (v >= space.num_categories).any():
                raise ValueError("category out of range")


@dataclass(frozen=True)
class ParticleCloud:
    """N weighted particles over a latent space.

    positions has shape (N, dim).  log_weights has shape (N,).  When
    ``normalized`` is set, exp(log_weights) sums to one.
    """

    space: LatentSpace
    positions: np.ndarray
    log_weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        pos = np.asarray(self.positions)
        lw = np.asarray(self.log_weights, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != self.space.dim:
            raise ValueError("positions must be (N, %d)" % self.space.dim)
        if pos.shape[0] < 1:
            raise ValueError("need at least one particle")
        if lw.shape != (pos.shape[0],):
            raise ValueError("log_weights must be (N,)")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def equal_weights(cls, space: LatentSpace, positions: np.ndarray) -> "ParticleCloud":
        n = np.asarray(positions).shape[0]
        return cls(space, positions, np.full(n, -np.log(n)), normalized=True)

    @property
    def num_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def weights(self) -> np.ndarray:
        if not self.normalized:
            raise NotNormalized("weights available only on normalized clouds")
        return np.exp(self.log_weights)

    @property
    def particles(self) -> list:
        return [LatentPoint(self.positions[i]) for i in range(self.num_particles)]


@dataclass(frozen=True)
class ThetaState:
    """A parameter vector together with its dual image under the mirror map."""

    theta: np.ndarray
    dual: np.ndarray

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        du = np.atleast_1d(np.asarray(self.dual, dtype=float))
        if th.shape != du.shape:
            raise ValueError("theta and dual must have equal shapes")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "dual", du)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes (gamma_1, ..., gamma_T) with cached tempering products.

    c(n) = prod_{k<=n} (1 - gamma_k) with c(0) = 1; lam(n) = 1 - c(n) is the
    tempering exponent reached after n steps.
    """

    gammas: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise ValueError("gammas must be a nonempty 1-d sequence")
        if (g <= 0).any() or (g > 1).any():
            raise ValueError("every gamma must lie in (0, 1]")
        c = np.concatenate([[1.0], np.cumprod(1.0 - g)])
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "_c", c)

    @classmethod
    def constant(cls, gamma: float, horizon: int) -> "StepSchedule":
        return cls(np.full(horizon, float(gamma)))

    @classmethod
    def harmonic(cls, horizon: int) -> "StepSchedule":
        return cls(1.0 / np.arange(1, horizon + 1))

    @property
    def horizon(self) -> int:
        return self.gammas.size

    def gamma(self, n: int) -> float:
        """gamma_n, 1-based."""
        if not 1 <= n <= self.horizon:
            raise IndexError("n out of schedule range")
        return float(self.gammas[n - 1])

    def c(self, n: int) -> float:
        """prod_{k<=n} (1 - gamma_k); c(0) = 1."""
        return float(self._c[n])

    def lam(self, n: int) -> float:
        """Tempering exponent 1 - c(n), nondecreasing in [0, 1]."""
        return 1.0 - self.c(n)


class ModelContract(abc.ABC):
    """Operations a latent variable model must provide.

    The observed data y is captured inside the instance at construction;
    callers only ever see theta and latent batches.  All methods are pure.

    Batch convention: ``xs`` has shape (N, dim); per-particle outputs have
    shape (N,) or (N, d_theta).
    """

    latent_space: LatentSpace
    d_theta: int

    @abc.abstractmethod
    def log_joint(self, theta: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """log p_theta(x, y) per particle, equal to -U(theta, x)."""

    @abc.abstractmethod
    def grad_theta_U(self, theta: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Gradient of U in theta per particle, shape (N, d_theta)."""

    @abc.abstractmethod
    def log_prior0(self, xs: np.ndarray) -> np.ndarray:
        """log mu_0(x) per particle for the initial distribution."""

    @abc.abstractmethod
    def sample_prior0(self, rng, n: int) -> np.ndarray:
        """Draw n points from mu_0, shape (n, dim)."""

    # Optional extensions -------------------------------------------------
    #
    # grad_x_U(theta, xs) -> (N, dim): latent gradient, continuous models
    #   that support Langevin-type baselines only.
    # site_log_joint(theta, xs, site) -> (N, K): log p_theta with coordinate
    #   ``site`` replaced by each category, up to per-particle constants.
    # site_log_prior0(xs, site) -> (N, K): same for mu_0.
    # prior_category_probs(site) -> (K,): per-site category law used by
    #   kernels with the "prior" proposal.
    # log_joint_multi(thetas, xs) -> (N,): one theta row per particle.

    @property
    def supports_latent_gradient(self) -> bool:
        return callable(getattr(self, "grad_x_U", None))

    @property
    def supports_site_conditionals(self) -> bool:
        return callable(getattr(self, "site_log_joint", None))


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Identical (seed, stream_id) pairs give identical draw sequences; distinct
    stream_ids are statistically independent.  A stream is single-consumer:
    create the Generator once and draw from it sequentially.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64 and 0 <= int(self.stream_id) < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.default_rng(ss)

    def substream(self, k: int) -> "RngStream":
        """Derived stream for algorithm phase k (init, resample, ...)."""
        return RngStream(self.seed, int(self.stream_id) * 8 + k)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a ready Generator and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError("expected RngStream or numpy Generator, got %r" % type(rng))


@dataclass
class RunTrace:
    """Per-iteration records of a run plus the final cloud and metadata.

    Row i corresponds to iteration i (row 0 is the initial state), so a run
    of T iterations has T+1 rows.  ``accept`` is NaN where no MCMC move
    happened (row 0, and algorithms without an accept step).
    """

    thetas: np.ndarray
    ess: np.ndarray
    accept: np.ndarray
    elapsed_ns: np.ndarray
    final_cloud: Optional[ParticleCloud] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        n = self.thetas.shape[0]
        for name in ("ess", "accept"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise ValueError("%s must have one entry per trace row" % name)
            setattr(self, name, v)
        self.elapsed_ns = np.asarray(self.elapsed_ns, dtype=np.int64)
        if self.elapsed_ns.shape != (n,):
            raise ValueError("elapsed_ns must have one entry per trace row")

    @property
    def iterations(self) -> np.ndarray:
        return np.arange(self.thetas.shape[0])

    @property
    def theta_final(self) -> np.ndarray:
        return self.thetas[-1]


def normalize_weights(cloud: ParticleCloud) -> ParticleCloud:
    """Normalize a cloud's weights via a log-sum-exp shift.

    NaN log-weights are treated as -inf.  Idempotent, and invariant to adding
    a common constant to all log-weights.

    Raises AllWeightsDegenerate when no weight is finite.
    """
    lw = np.asarray(cloud.log_weights, dtype=float)
    lw = np.where(np.isnan(lw), -np.inf, lw)
    m = lw.max()
    if not np.isfinite(m):
        raise AllWeightsDegenerate("all log-weights are -inf or NaN")
    log_z = m + np.log(np.exp(lw - m).sum())
    return replace(cloud, log_weights=lw - log_z, normalized=True)


def effective_sample_size(cloud: ParticleCloud) -> float:
    """ESS = 1 / sum_i W_i^2, in [1, N]; requires a normalized cloud."""
    if not cloud.normalized:
        raise NotNormalized("effective_sample_size needs a normalized cloud")
    w = np.exp(cloud.log_weights)
    return float(1.0 / np.square(w).sum())
