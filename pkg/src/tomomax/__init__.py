"""Minimax quantum state tomography for two-level systems.

Modules:
    qstate       Bloch-vector states and relative entropy
    experiment   measurement designs, datasets and likelihoods
    estimators   linear inversion, MLE, hedged MLE, Bayesian mean, tables
    risk         exact pointwise/Bayes risk and max-risk search
    lfp          least favorable priors (Kempthorne and Monte Carlo)
    noisycoin    noisy-coin model, bimodal priors, analytic lower bounds
    figures      SVG drawings of estimator grids and risk profiles
    cli          the ``tomomax`` command
"""

from .errors import (
    CapExceeded,
    DesignMismatch,
    InnerSolverFailure,
    IterationLimit,
    KindMismatch,
    NonConvergenceWarning,
    TomomaxError,
    UnphysicalArgument,
    ZeroEvidence,
)
from .estimators import (
    TabulatedEstimator,
    bayes_mean,
    bayes_table,
    hml,
    hml_table,
    linear_inversion,
    linear_inversion_table,
    mle,
    mle_table,
)
from .experiment import ExperimentDesign, enumerate_datasets, likelihood
from .lfp import DiscretePrior, LfpResult, kempthorne_lfp, maximize_weights, mc_lfp, minimax_certificate
from .noisycoin import (
    BimodalPrior,
    NoisyCoinModel,
    bound_haar,
    bound_noisy_coin,
    bound_pauli,
    classical_coin_reference,
)
from .qstate import BlochState, StateKind, UnphysicalPoint, relative_entropy, sample_hs_uniform
from .risk import RiskEvaluator, SearchConfig, bayes_risk, max_risk, pointwise_risk, risk_profile

__version__ = "0.1.0"
