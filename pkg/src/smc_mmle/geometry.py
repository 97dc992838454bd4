"""Mirror maps and Bregman machinery.

Three geometries: the squared Euclidean norm (plain gradient descent), a
component-wise logarithmic barrier on (0,1)^d, and negative entropy on a
designated simplex block (identity elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ThetaState
from .errors import DomainViolation, NonFiniteDual

__all__ = ["MirrorMap", "mirror_forward", "mirror_inverse", "bregman", "theta_state"]

SQUARED_NORM = "squared_norm"
COMPONENT_LOG_BARRIER = "component_log_barrier"
SIMPLEX_ENTROPY = "simplex_entropy"

_SIMPLEX_SUM_TOL = 1e-8


@dataclass(frozen=True)
class MirrorMap:
    """A mirror map h with forward gradient, inverse gradient, and Bregman
    divergence.

    kinds:
      squared_norm          h(t) = ||t||^2 / 2 on all of R^d
      component_log_barrier h(t) = sum_i -log(t_i - t_i^2) on (0,1)^d
      simplex_entropy       h(t) = sum_block t_i log t_i + off-block ||t||^2/2,
                            domain: the designated block on the open simplex
    """

    kind: str
    block: Optional[slice] = None

    def __post_init__(self):
        if self.kind not in (SQUARED_NORM, COMPONENT_LOG_BARRIER, SIMPLEX_ENTROPY):
            raise ValueError("unknown mirror map kind %r" % self.kind)
        if self.kind == SIMPLEX_ENTROPY and self.block is None:
            raise ValueError("simplex_entropy needs a block slice")

    @classmethod
    def squared_norm(cls) -> "MirrorMap":
        return cls(SQUARED_NORM)

    @classmethod
    def component_log_barrier(cls) -> "MirrorMap":
        return cls(COMPONENT_LOG_BARRIER)

    @classmethod
    def simplex_entropy(cls, block: slice) -> "MirrorMap":
        return cls(SIMPLEX_ENTROPY, block)

    def check_domain(self, theta: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        if not np.isfinite(t).all():
            raise DomainViolation("theta has non-finite components")
        if self.kind == COMPONENT_LOG_BARRIER:
            if (t <= 0).any() or (t >= 1).any():
                raise DomainViolation("log barrier needs every component in (0, 1)")
        elif self.kind == SIMPLEX_ENTROPY:
            b = t[self.block]
            if (b <= 0).any():
                raise DomainViolation("simplex block needs positive components")
            if abs(b.sum() - 1.0) > _SIMPLEX_SUM_TOL:
                raise DomainViolation("simplex block must sum to 1")
        return t

    def forward(self, theta: np.ndarray) -> np.ndarray:
        return mirror_forward(self, theta)

    def inverse(self, dual: np.ndarray) -> np.ndarray:
        return mirror_inverse(self, dual)


def mirror_forward(mirror_map: MirrorMap, theta: np.ndarray) -> np.ndarray:
    """grad h at theta.  Raises DomainViolation off the map's domain."""
    t = mirror_map.check_domain(theta)
    if mirror_map.kind == SQUARED_NORM:
        return t.copy()
    if mirror_map.kind == COMPONENT_LOG_BARRIER:
        return 1.0 / (1.0 - t) - 1.0 / t
    out = t.copy()
    out[mirror_map.block] = 1.0 + np.log(t[mirror_map.block])
    return out


def _barrier_inverse(dual: np.ndarray) -> np.ndarray:
    # (t - 2 + sqrt(t^2 + 4)) / (2t), with the 0/0 at t=0 resolved to 1/2 and
    # a rearranged branch for t<0 that avoids cancellation in t + sqrt(t^2+4).
    s = np.sqrt(dual * dual + 4.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = (dual - 2.0 + s) / (2.0 * dual)
        neg = (4.0 / (s - dual) - 2.0) / (2.0 * dual)
    out = np.where(dual > 0, pos, neg)
    return np.where(np.abs(dual) < 1e-12, 0.5, out)


def mirror_inverse(mirror_map: MirrorMap, dual: np.ndarray) -> np.ndarray:
    """(grad h)^{-1} at a dual vector.  Raises NonFiniteDual on NaN/inf."""
    d = np.atleast_1d(np.asarray(dual, dtype=float))
    if not np.isfinite(d).all():
        raise NonFiniteDual("dual vector has NaN or infinite components")
    if mirror_map.kind == SQUARED_NORM:
        return d.copy()
    if mirror_map.kind == COMPONENT_LOG_BARRIER:
        return _barrier_inverse(d)
    out = d.copy()
    w = np.exp(d[mirror_map.block] - 1.0)
    out[mirror_map.block] = w / w.sum()
    return out


def _potential(mirror_map: MirrorMap, t: np.ndarray) -> float:
    if mirror_map.kind == SQUARED_NORM:
        return 0.5 * float(np.dot(t, t))
    if mirror_map.kind == COMPONENT_LOG_BARRIER:
        return float(-np.log(t - t * t).sum())
    b = t[mirror_map.block]
    off = np.delete(t, np.arange(t.size)[mirror_map.block])
    return float((b * np.log(b)).sum() + 0.5 * np.dot(off, off))


def bregman(mirror_map: MirrorMap, a: np.ndarray, b: np.ndarray) -> float:
    """B_h(a | b) = h(a) - h(b) - <grad h(b), a - b>, nonnegative on the domain."""
    ta = mirror_map.check_domain(a)
    tb = mirror_map.check_domain(b)
    if ta.shape != tb.shape:
        raise DomainViolation("bregman arguments must share a shape")
    grad_b = mirror_forward(mirror_map, tb)
    return _potential(mirror_map, ta) - _potential(mirror_map, tb) - float(np.dot(grad_b, ta - tb))


def theta_state(mirror_map: MirrorMap, theta: np.ndarray) -> ThetaState:
    """Construct a ThetaState whose dual is consistent with the map."""
    t = mirror_map.check_domain(theta)
    return ThetaState(t, mirror_forward(mirror_map, t))
