"""Recursive Bayesian identification of multivariate autoregressive models
with exogenous inputs, using matrix-normal-Wishart message passing."""

from .distributions import (
    MnwBelief,
    MnwNaturalMessage,
    NotPositiveDefiniteError,
    PredictiveT,
    ln_multigamma,
    mn_log_pdf,
    mnw_log_pdf,
    mnw_product,
    mnw_sample,
    mvt_log_pdf,
    wishart_log_pdf,
)
from .estimator import (
    MARXRegressor,
    likelihood_message,
    log_evidence,
    posterior_from_messages,
    predict,
    update,
)
from .regressor import LagFeatures, RegressorBuffer, build_regressors
from .rls import RLSRegressor, RlsState, rls_predict, rls_update

__version__ = "0.1.0"

__all__ = [
    "MnwBelief",
    "MnwNaturalMessage",
    "NotPositiveDefiniteError",
    "PredictiveT",
    "ln_multigamma",
    "mn_log_pdf",
    "mnw_log_pdf",
    "mnw_product",
    "mnw_sample",
    "mvt_log_pdf",
    "wishart_log_pdf",
    "MARXRegressor",
    "likelihood_message",
    "log_evidence",
    "posterior_from_messages",
    "predict",
    "update",
    "LagFeatures",
    "RegressorBuffer",
    "build_regressors",
    "RLSRegressor",
    "RlsState",
    "rls_predict",
    "rls_update",
]
