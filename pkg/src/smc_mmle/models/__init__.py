"""Benchmark latent variable models."""

from .blr import BlrModel
from .gmm import GmmModel, gmm_marginal_loglik
from .graph_io import load_edge_list, load_karate_club, parse_edge_list
from .multimodal import (
    MultimodalModel,
    multimodal_marginal_loglik,
    multimodal_marginal_loglik_quadrature,
    multimodal_mle_quadrature,
)
from .sbm import SbmModel, sbm_suff_stats, sbm_theta_postprocess
from .toy_gaussian import ToyGaussianModel, toy_exact_mle, toy_exact_posterior

__all__ = [
    "BlrModel",
    "GmmModel",
    "MultimodalModel",
    "SbmModel",
    "ToyGaussianModel",
    "gmm_marginal_loglik",
    "load_edge_list",
    "load_karate_club",
    "multimodal_marginal_loglik",
    "multimodal_marginal_loglik_quadrature",
    "multimodal_mle_quadrature",
    "parse_edge_list",
    "sbm_suff_stats",
    "sbm_theta_postprocess",
    "toy_exact_mle",
    "toy_exact_posterior",
]
