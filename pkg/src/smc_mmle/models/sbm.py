"""Stochastic block model on an undirected simple graph.

Latent x assigns each of the d_x nodes to one of Q blocks.  The parameter
vector flattens the block probabilities and the upper triangle of the
symmetric connectivity matrix:

    theta = (p_1, ..., p_Q, nu_{11}, nu_{12}, ..., nu_{QQ})   (q <= l order)

All pair statistics run over ordered pairs (i, j != i), so each undirected
edge contributes twice.  The gradient of a flattened off-diagonal nu_{ql}
therefore collects both the (q,l) and (l,q) ordered blocks.
"""

from __future__ import annotations

import numpy as np
from scipy.special import xlog1py, xlogy

from ..core import LatentSpace, ModelContract, as_generator
from ..errors import DomainViolation

__all__ = ["SbmModel", "sbm_suff_stats", "sbm_theta_postprocess"]


def _onehot(xs: np.ndarray, num_blocks: int) -> np.ndarray:
    """(N, d) integer labels -> (N, d, Q) float indicator tensor."""
    return (np.asarray(xs)[..., None] == np.arange(num_blocks)).astype(float)


def sbm_suff_stats(labels, adjacency, num_blocks=None):
    """Ordered-pair sufficient statistics of one label configuration.

    Returns (counts, edges, pairs): counts[q] is the block-q occupancy,
    edges[q, l] the number of ordered pairs (i, j != i) with labels (q, l)
    joined by an edge, and pairs[q, l] the number of such ordered pairs
    overall, so pairs[q, q] = counts[q] * (counts[q] - 1).
    """
    labels = np.asarray(labels)
    a = np.asarray(adjacency, dtype=float)
    if num_blocks is None:
        num_blocks = int(labels.max()) + 1
    hot = _onehot(labels[None, :], num_blocks)[0]  # (d, Q)
    counts = hot.sum(axis=0)
    edges = hot.T @ a @ hot
    pairs = np.outer(counts, counts) - np.diag(counts)
    return counts, edges, pairs


def sbm_theta_postprocess(theta: np.ndarray, num_blocks: int = 2) -> np.ndarray:
    """Renormalize the leading block-probability entries to sum to one.

    The log-barrier map keeps every component in (0, 1) but does not tie the
    p-block to the simplex; this projects it back after each parameter step.
    The nu entries pass through untouched.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta[:num_blocks]
    if (p <= 0).any() or (p >= 1).any():
        raise DomainViolation("block probabilities must lie in (0, 1)")
    out = theta.copy()
    out[:num_blocks] = p / p.sum()
    return out


class SbmModel(ModelContract):
    def __init__(self, adjacency: np.ndarray, num_blocks: int = 2):
        a = np.asarray(adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric (undirected graph)")
        if np.diagonal(a).any():
            raise ValueError("adjacency must have an empty diagonal (simple graph)")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0/1")
        self.adjacency = a.astype(float)
        self.num_blocks = int(num_blocks)
        self.d_x = a.shape[0]
        self.latent_space = LatentSpace.discrete_categorical(self.d_x, self.num_blocks)
        self.d_theta = self.num_blocks + self.num_blocks * (self.num_blocks + 1) // 2
        self._triu = np.triu_indices(self.num_blocks)

    @classmethod
    def simulate(cls, p, nu, d_x: int, rng):
        """Draw labels from p and edges from the connectivity matrix nu.

        Returns (model, labels) so callers can score recovered block
        structure against the truth.
        """
        gen = as_generator(rng)
        p = np.asarray(p, dtype=float)
        nu = np.asarray(nu, dtype=float)
        labels = gen.choice(p.size, size=d_x, p=p / p.sum())
        probs = nu[np.ix_(labels, labels)]
        upper = np.triu(gen.random((d_x, d_x)) < probs, k=1)
        adjacency = (upper | upper.T).astype(int)
        return cls(adjacency, p.size), labels

    # -- theta layout ------------------------------------------------------

    def unpack_theta(self, theta):
        """Split flat theta into (p, nu) with nu a symmetric (Q, Q) matrix."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d_theta,):
            raise ValueError("theta must have length %d" % self.d_theta)
        q = self.num_blocks
        p = theta[:q]
        nu = np.zeros((q, q))
        nu[self._triu] = theta[q:]
        nu = nu + np.triu(nu, k=1).T
        return p, nu

    def pack_theta(self, p, nu):
        return np.concatenate([np.asarray(p, dtype=float),
                               np.asarray(nu, dtype=float)[self._triu]])

    # -- model contract ------------------------------------------------------

    def _batch_stats(self, xs):
        hot = _onehot(xs, self.num_blocks)  # (N, d, Q)
        counts = hot.sum(axis=1)  # (N, Q)
        edges = np.einsum("niq,ij,njl->nql", hot, self.adjacency, hot, optimize=True)
        pairs = counts[:, :, None] * counts[:, None, :]
        dd = np.arange(self.num_blocks)
        pairs[:, dd, dd] -= counts
        return counts, edges, pairs

    def log_joint(self, theta, xs):
        p, nu = self.unpack_theta(theta)
        counts, edges, pairs = self._batch_stats(np.asarray(xs))
        occ = xlogy(counts, p).sum(axis=1)
        conn = (xlogy(edges, nu) + xlog1py(pairs - edges, -nu)).sum(axis=(1, 2))
        return occ + conn

    def grad_theta_U(self, theta, xs):
        p, nu = self.unpack_theta(theta)
        counts, edges, pairs = self._batch_stats(np.asarray(xs))
        grad_p = -counts / p
        # ordered-block gradient, then fold (q,l) and (l,q) into the q<=l slot
        g = -(edges / nu - (pairs - edges) / (1.0 - nu))
        folded = g + np.swapaxes(g, 1, 2)
        dd = np.arange(self.num_blocks)
        folded[:, dd, dd] = g[:, dd, dd]
        return np.concatenate([grad_p, folded[:, self._triu[0], self._triu[1]]], axis=1)

    def log_prior0(self, xs):
        n = np.asarray(xs).shape[0]
        return np.full(n, -self.d_x * np.log(self.num_blocks))

    def sample_prior0(self, rng, n):
        return as_generator(rng).integers(0, self.num_blocks, size=(n, self.d_x))

    # -- single-site structure ------------------------------------------------

    def site_log_joint(self, theta, xs, site):
        """log joint as a function of node ``site``'s label, (N, Q).

        Only terms involving the site vary: its occupancy factor plus the
        ordered pairs it belongs to, which double every neighbor term.
        """
        p, nu = self.unpack_theta(theta)
        xs = np.asarray(xs)
        hot = _onehot(xs, self.num_blocks)  # (N, d, Q)
        nbr = np.einsum("j,njl->nl", self.adjacency[site], hot)  # (N, Q)
        others = hot.sum(axis=1) - hot[:, site, :]  # label counts over j != site
        logits = (xlogy(nbr[:, None, :], nu[None, :, :])
                  + xlog1py(others[:, None, :] - nbr[:, None, :], -nu[None, :, :])).sum(axis=2)
        return np.log(p)[None, :] + 2.0 * logits

    def site_log_prior0(self, xs, site):
        n = np.asarray(xs).shape[0]
        return np.full((n, self.num_blocks), -np.log(self.num_blocks))

    def prior_category_probs(self, site):
        return np.full(self.num_blocks, 1.0 / self.num_blocks)
