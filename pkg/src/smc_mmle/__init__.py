"""Maximum marginal likelihood for latent variable models.

The estimator alternates a mirror-descent step on the parameter with a
tempered sequential Monte Carlo move on the latent posterior; baselines
(EM, SAEM, particle Langevin, an extended-target SMC sampler) and exact
references for the benchmark models live alongside it.
"""

from .baselines import (
    em_gmm,
    ipla_step,
    pgd_step,
    run_ipla,
    run_pgd,
    saem_sbm,
    sbm_m_step,
    smc_mml,
)
from .core import (
    LatentPoint,
    LatentSpace,
    ModelContract,
    ParticleCloud,
    RngStream,
    RunTrace,
    StepSchedule,
    ThetaState,
    effective_sample_size,
    nan_density_count,
    normalize_weights,
    sanitize_log_density,
)
from .diagnostics import (
    EnumeratedDistribution,
    GaussianSummary,
    adjusted_rand_index,
    enumerate_target,
    free_energy_estimate,
    gaussian_fit,
    gaussian_kl,
    posterior_mode_labels,
    toy_exact_free_energy,
    toy_exact_recursion,
    wasserstein1_1d,
)
from .errors import (
    AllWeightsDegenerate,
    DegenerateCloud,
    DomainViolation,
    EmptyBlock,
    LengthMismatch,
    MissingLatentGradient,
    NonFiniteDual,
    NonSPDCovariance,
    NotNormalized,
    SmcMmleError,
    SpaceTooLarge,
    UnknownCheck,
    WeightCollapse,
)
from .geometry import MirrorMap, bregman, mirror_forward, mirror_inverse, theta_state
from .mmle import (
    MmleConfig,
    ThetaHistory,
    exact_exponents,
    exact_log_target,
    exact_log_weight,
    joint_target,
    prior_target,
    run_mmle,
    smcs_log_target,
    smcs_log_weight,
    stop_rule,
    theta_update,
)
from .models import (
    BlrModel,
    GmmModel,
    MultimodalModel,
    SbmModel,
    ToyGaussianModel,
    gmm_marginal_loglik,
    load_edge_list,
    load_karate_club,
    multimodal_marginal_loglik,
    multimodal_marginal_loglik_quadrature,
    multimodal_mle_quadrature,
    parse_edge_list,
    sbm_suff_stats,
    sbm_theta_postprocess,
    toy_exact_mle,
    toy_exact_posterior,
)
from .smc_engine import (
    KernelConfig,
    LogTarget,
    adapt_rwm_covariance,
    discrete_sweeps,
    multinomial_resample,
    resample_indices,
    rwm_chain,
)

__version__ = "0.1.0"
