"""Finite-sample PCA under non-isotropic and data-dependent noise.

Subspace estimation via top-r eigendecomposition of the sample covariance,
closed-form finite-sample error bounds with their feasibility conditions,
automatic rank estimation, and a seeded Monte Carlo experiment harness.
"""

from .bounds import (
    BoundInputs,
    BoundReport,
    concentration_bounds,
    eigengap_condition,
    eps_bnd,
    eps_den,
    expected_perturbation,
    general_bound,
    missing_q,
    rank_delta,
    sddn_bound,
    sddn_required_alpha,
    spiked_bound,
)
from .errors import (
    ConfigError,
    CorollaryInapplicable,
    DimensionMismatch,
    EmptyBatch,
    InfeasibleModel,
    InvalidExample,
    InvalidRank,
    InvalidSupport,
    NoComplement,
    NoisyPcaError,
    NotIsotropic,
    NotSymmetric,
    RankDeficient,
    SupportDegenerate,
    ValidationError,
)
from .estimator import (
    DataBatch,
    estimate_rank_eigengap,
    estimate_rank_threshold,
    pca_estimate,
    sample_covariance,
)
from .experiments import (
    ExperimentConfig,
    GridResult,
    ModelRealization,
    TrialResult,
    adversarial_experiment,
    adversarial_sigma,
    bound_tightness,
    concentration_check,
    missing_data_experiment,
    phase_transition,
    rank_estimation,
    realize_model,
    refinement_loop,
    run_trial,
)
from .linalg import (
    BasisMatrix,
    SymmetricEig,
    davis_kahan_bound,
    incoherence,
    orthogonal_complement,
    orthonormalize,
    subspace_error,
    symmetric_eig,
    top_r_eigvecs,
)
from .model import (
    DerivedSpectra,
    SddnModel,
    SignalModel,
    UncorrNoiseModel,
    apply_missing,
    derived_spectra,
    make_random_basis,
    profile_scales,
    row_occupancy,
    sample_sddn,
    sample_signal,
    sample_uncorr_noise,
    signal_noise_eigenvalues,
    substream,
    support_sequence,
)

__version__ = "0.1.0"
