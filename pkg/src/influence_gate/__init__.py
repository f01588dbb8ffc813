"""Moment gates and CLT diagnostics for case-deletion importance sampling.

The package decides analytically how many moments the case-deletion
importance-sampling weight has for Bayesian linear, Michaelis-Menten, and
logistic regression models, gates influence-measure estimators by CLT
validity, computes the gated estimates from posterior draws, and verifies
the analytic verdicts empirically with tail-index and variance-scaling
diagnostics.
"""

from .core_model import (
    DeletionSet,
    LinearSchema,
    LogitData,
    LogitSchema,
    MMData,
    MMSchema,
    MomentIndexReport,
    MomentVerdict,
    RegressionData,
    VerdictTag,
    deletion_set,
    load_csv,
)
from .linear_gate import (
    LeverageReport,
    LinearPrior,
    bounded_support_M,
    corollary3_dispatch,
    leverage_minor,
    moment_index_linear,
    rss_star,
    theorem31_verdict,
)
from .prior_tails import (
    Sigma2PriorSpec,
    TailClass,
    ThetaPriorSpec,
    classify_sigma2,
    classify_theta,
    transfer_finiteness,
)

__all__ = [
    "DeletionSet",
    "LeverageReport",
    "LinearPrior",
    "LinearSchema",
    "LogitData",
    "LogitSchema",
    "MMData",
    "MMSchema",
    "MomentIndexReport",
    "MomentVerdict",
    "RegressionData",
    "Sigma2PriorSpec",
    "TailClass",
    "ThetaPriorSpec",
    "VerdictTag",
    "bounded_support_M",
    "classify_sigma2",
    "classify_theta",
    "corollary3_dispatch",
    "deletion_set",
    "leverage_minor",
    "load_csv",
    "moment_index_linear",
    "rss_star",
    "theorem31_verdict",
    "transfer_finiteness",
]

__version__ = "0.1.0"
