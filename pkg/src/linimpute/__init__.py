"""Linear imputation of allele frequencies and genotypes from summary data.

The prior is a multivariate normal whose mean and banded covariance come
from a haplotype reference panel under the Li-Stephens copying view;
untyped quantities are imputed by conditional-Gaussian prediction, pooled
measurements are denoised through a fitted noise model, and a panel-free
ECM variant estimates the prior from incomplete genotypes directly.
"""

from . import errors
from .banded import (
    BandedCholesky,
    BandedSpdMatrix,
    banded_cholesky,
    banded_solve,
    conditional_gaussian,
)
from .ecm import EcmState, EcmSufficientStats, ecm_cmstep, ecm_estep, ecm_run
from .evaluate import (
    CvResult,
    EvalReport,
    MaskPlan,
    NoiseStudyRow,
    baseline_unregularized,
    call_rate_curve,
    genotype_error_rate,
    mask_cv,
    rmse,
    simulate_noise_study,
    z_calibration,
)
from .impute import (
    GenotypeFreqResult,
    GenotypeMomentModel,
    ImputationResult,
    fit_genotype_moment_model,
    genotype_freq_hwe,
    hard_calls,
    hwe_genotype_frequencies,
    impute_frequencies,
    impute_genotype_frequencies,
    impute_individual_genotypes,
)
from .noise import NoiseModel, denoise_typed, fit_noise, log_likelihood
from .shrinkage import (
    MomentModel,
    empirical_moments,
    estimate_theta,
    fit_moment_model,
    ls_pair_moments_oracle,
)
from .simulate import (
    SimulationConfig,
    haplotypes_to_genotypes,
    mask_missing_at_random,
    sample_haplotypes,
    simulate_panel,
    simulate_rho_map,
)
from .types import FrequencyVector, Panel, RhoMap, SnpMeta

__version__ = "0.1.0"

__all__ = [
    "errors",
    "BandedCholesky",
    "BandedSpdMatrix",
    "banded_cholesky",
    "banded_solve",
    "conditional_gaussian",
    "EcmState",
    "EcmSufficientStats",
    "ecm_cmstep",
    "ecm_estep",
    "ecm_run",
    "CvResult",
    "EvalReport",
    "MaskPlan",
    "NoiseStudyRow",
    "baseline_unregularized",
    "call_rate_curve",
    "genotype_error_rate",
    "mask_cv",
    "rmse",
    "simulate_noise_study",
    "z_calibration",
    "GenotypeFreqResult",
    "GenotypeMomentModel",
    "ImputationResult",
    "fit_genotype_moment_model",
    "genotype_freq_hwe",
    "hard_calls",
    "hwe_genotype_frequencies",
    "impute_frequencies",
    "impute_genotype_frequencies",
    "impute_individual_genotypes",
    "NoiseModel",
    "denoise_typed",
    "fit_noise",
    "log_likelihood",
    "MomentModel",
    "empirical_moments",
    "estimate_theta",
    "fit_moment_model",
    "ls_pair_moments_oracle",
    "SimulationConfig",
    "haplotypes_to_genotypes",
    "mask_missing_at_random",
    "sample_haplotypes",
    "simulate_panel",
    "simulate_rho_map",
    "FrequencyVector",
    "Panel",
    "RhoMap",
    "SnpMeta",
]
