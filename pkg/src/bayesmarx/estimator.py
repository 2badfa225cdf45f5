"""Recursive Bayesian estimation for MARX models.

The posterior over coefficients ``A`` (``D_x x D_y``) and noise precision
``W`` stays matrix-normal-Wishart after every observation. Two routes to the
same posterior are provided: the direct conjugate update (``update``) and the
message-passing route (``likelihood_message`` multiplied into the prior by
``posterior_from_messages``).
"""
from __future__ import annotations

import json

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .distributions import (
    MnwBelief,
    MnwNaturalMessage,
    NotPositiveDefiniteError,
    PredictiveT,
    cholesky,
    mnw_product,
    mvt_log_pdf,
    symmetrize,
)

__all__ = [
    "update",
    "likelihood_message",
    "posterior_from_messages",
    "predict",
    "log_evidence",
    "MARXRegressor",
    "belief_to_dict",
    "belief_from_dict",
]


def _vectors(belief, x, y=None):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != belief.d_x:
        raise ValueError(f"x must have length {belief.d_x}, got {x.size}")
    if y is None:
        return x
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != belief.d_y:
        raise ValueError(f"y must have length {belief.d_y}, got {y.size}")
    return x, y


def update(belief, x, y):
    """Posterior after observing ``y`` with regressor ``x``.

    ``Lambda' = Lambda + x x'``, ``M' = Lambda'^-1 (Lambda M + x y')``,
    ``nu' = nu + 1``. ``Omega`` is advanced with the innovation form
    ``Omega + lam e e'`` where ``e = y - M'x`` uses the prior mean and
    ``lam = 1 / (1 + x' Lambda^-1 x)``; it equals the four-term expression and
    keeps the increment PSD by construction.
    """
    x, y = _vectors(belief, x, y)
    Lam = belief.Lambda
    L = cholesky(Lam, "Lambda")
    v = solve_triangular(L, x, lower=True)
    lam = 1.0 / (1.0 + v @ v)
    e = y - belief.M.T @ x

    Lam_new = symmetrize(Lam + np.outer(x, x))
    rhs = Lam @ belief.M + np.outer(x, y)
    M_new = cho_solve(cho_factor(Lam_new, lower=True), rhs)
    Omega_new = symmetrize(belief.Omega + lam * np.outer(e, e))
    try:
        return MnwBelief(M_new, Lam_new, Omega_new, belief.nu + 1.0)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"posterior update failed ({exc}); min eig Omega="
            f"{np.linalg.eigvalsh(Omega_new).min():.3e}"
        ) from exc


def likelihood_message(x, y):
    """Message from one likelihood factor towards ``(A, W)`` in natural form."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    return MnwNaturalMessage(np.outer(x, x), np.outer(x, y), np.outer(y, y), 2 - x.size + y.size)


def posterior_from_messages(prior, msg):
    """Equality-node combination of the prior belief and a likelihood message."""
    if isinstance(msg, MnwBelief):
        msg = msg.to_natural()
    return mnw_product(prior.to_natural(), msg).to_belief()


def predict(belief, x):
    """One-step posterior predictive of ``y`` for regressor ``x``.

    Location ``M'x``, ``eta = nu - D_y + 1`` and precision-scale
    ``Psi = eta * lam * Omega^-1`` with ``lam = 1 / (1 + x' Lambda^-1 x)``.
    """
    x = _vectors(belief, x)
    eta = belief.nu - belief.d_y + 1.0
    if eta <= 0:
        raise ValueError(f"predictive degrees of freedom eta={eta} <= 0; prior nu too small")
    L = cholesky(belief.Lambda, "Lambda")
    v = solve_triangular(L, x, lower=True)
    lam = 1.0 / (1.0 + v @ v)
    Omega_inv = cho_solve(cho_factor(belief.Omega, lower=True), np.eye(belief.d_y))
    return PredictiveT(belief.M.T @ x, eta * lam * Omega_inv, eta)


def log_evidence(belief, x, y):
    """Log one-step-ahead marginal likelihood ``log p(y | x, data so far)``."""
    x, y = _vectors(belief, x, y)
    return float(mvt_log_pdf(y, predict(belief, x)))


def belief_to_dict(belief, step_count=None):
    out = {
        "M": belief.M.tolist(),
        "Lambda": belief.Lambda.tolist(),
        "Omega": belief.Omega.tolist(),
        "nu": belief.nu,
    }
    if step_count is not None:
        out["step_count"] = int(step_count)
    return out


def belief_from_dict(d):
    try:
        return MnwBelief(
            np.asarray(d["M"], dtype=float),
            np.asarray(d["Lambda"], dtype=float),
            np.asarray(d["Omega"], dtype=float),
            float(d["nu"]),
        )
    except KeyError as exc:
        raise ValueError(f"checkpoint is missing field {exc}") from None


def _as_prior_matrix(value, d, name):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return float(value) * np.eye(d)
    if value.shape != (d, d):
        raise ValueError(f"{name} must be a scalar or a {d}x{d} matrix, got {value.shape}")
    return value


class MARXRegressor(RegressorMixin, BaseEstimator):
    """Exact recursive Bayesian multivariate linear regression on MARX regressors.

    Parameters
    ----------
    row_precision : float or array of shape (n_features, n_features), default=1.0
        Prior row precision ``Lambda_0``; a scalar means ``row_precision * I``.
    scale : float or array of shape (n_targets, n_targets), default=1.0
        Prior Wishart inverse-scale ``Omega_0``; a scalar means ``scale * I``.
    dof : float, optional
        Prior degrees of freedom ``nu_0``. Defaults to ``n_targets + 2``.
    prior_mean : array of shape (n_features, n_targets), optional
        Prior coefficient mean ``M_0``; zeros by default.

    Attributes
    ----------
    belief_ : MnwBelief
        Current posterior.
    prior_ : MnwBelief
        The prior the posterior was started from.
    n_steps_ : int
        Number of observations absorbed.
    log_evidence_ : float
        Sum of one-step-ahead log evidences over all absorbed observations.
    log_evidence_trace_ : list of float
        Per-step log evidences.
    """

    def __init__(self, row_precision=1.0, scale=1.0, dof=None, prior_mean=None):
        self.row_precision = row_precision
        self.scale = scale
        self.dof = dof
        self.prior_mean = prior_mean

    def _make_prior(self, d_x, d_y):
        M0 = np.zeros((d_x, d_y)) if self.prior_mean is None else np.asarray(self.prior_mean, float)
        if M0.shape != (d_x, d_y):
            raise ValueError(f"prior_mean must have shape {(d_x, d_y)}, got {M0.shape}")
        nu0 = d_y + 2.0 if self.dof is None else float(self.dof)
        return MnwBelief(
            M0,
            _as_prior_matrix(self.row_precision, d_x, "row_precision"),
            _as_prior_matrix(self.scale, d_y, "scale"),
            nu0,
        )

    def _reset(self, d_x, d_y, single_output):
        self.prior_ = self._make_prior(d_x, d_y)
        self.belief_ = self.prior_
        self.n_features_in_ = d_x
        self.n_steps_ = 0
        self.log_evidence_ = 0.0
        self.log_evidence_trace_ = []
        self._single_output = single_output

    def _validate_xy(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        single = y.ndim == 1
        return X, (y[:, None] if single else y), single

    def fit(self, X, y):
        """Start from the prior and absorb every row of ``(X, y)`` in order."""
        X, Y, single = self._validate_xy(X, y)
        self._reset(X.shape[1], Y.shape[1], single)
        return self._absorb(X, Y)

    def partial_fit(self, X, y):
        """Absorb more observations, continuing from the current posterior."""
        X, Y, single = self._validate_xy(X, y)
        if not hasattr(self, "belief_"):
            self._reset(X.shape[1], Y.shape[1], single)
        elif X.shape[1] != self.n_features_in_ or Y.shape[1] != self.belief_.d_y:
            raise ValueError("dimensions do not match the fitted posterior")
        return self._absorb(X, Y)

    def _absorb(self, X, Y):
        belief = self.belief_
        for x, y in zip(X, Y):
            ev = log_evidence(belief, x, y)
            belief = update(belief, x, y)
            self.log_evidence_trace_.append(ev)
            self.log_evidence_ += ev
            self.n_steps_ += 1
        self.belief_ = belief
        return self

    def predict(self, X):
        """Posterior predictive mean ``M' x`` for every row of ``X``."""
        check_is_fitted(self, "belief_")
        X = check_array(X)
        out = X @ self.belief_.M
        return out[:, 0] if self._single_output else out

    def predict_distribution(self, X):
        """Posterior predictive T distribution for every row of ``X``."""
        check_is_fitted(self, "belief_")
        X = check_array(X)
        return [predict(self.belief_, x) for x in X]

    def score_samples(self, X, y):
        """Per-row predictive log-density under the current posterior (no update)."""
        check_is_fitted(self, "belief_")
        X, Y, _ = self._validate_xy(X, y)
        return np.array([log_evidence(self.belief_, x, yy) for x, yy in zip(X, Y)])

    @property
    def coef_(self):
        check_is_fitted(self, "belief_")
        return self.belief_.M.T

    def save_checkpoint(self, path):
        check_is_fitted(self, "belief_")
        with open(path, "w") as fh:
            json.dump(belief_to_dict(self.belief_, self.n_steps_), fh, indent=2)

    @classmethod
    def load_checkpoint(cls, path, **params):
        """Estimator whose prior and posterior are the checkpointed belief."""
        with open(path) as fh:
            d = json.load(fh)
        est = cls(**params)
        belief = belief_from_dict(d)
        est._reset(belief.d_x, belief.d_y, single_output=False)
        est.prior_ = est.belief_ = belief
        est.n_steps_ = int(d.get("step_count", 0))
        return est
