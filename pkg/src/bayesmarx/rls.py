"""Recursive least squares with unit forgetting factor."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

__all__ = ["RlsState", "rls_update", "rls_predict", "RLSRegressor"]


@dataclass(frozen=True, eq=False)
class RlsState:
    """Coefficient estimate ``A_hat`` (``D_x x D_y``) and inverse sample covariance ``P``."""

    A_hat: np.ndarray
    P: np.ndarray

    @classmethod
    def initial(cls, d_x, d_y, p0=1.0):
        return cls(np.zeros((d_x, d_y)), p0 * np.eye(d_x))

    def to_dict(self):
        return {"A_hat": self.A_hat.tolist(), "P": self.P.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["A_hat"], dtype=float), np.asarray(d["P"], dtype=float))


def rls_update(state, x, y):
    # gain uses the pre-update P
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    Px = state.P @ x
    denom = 1.0 + x @ Px
    P = state.P - np.outer(Px, Px) / denom
    A_hat = state.A_hat + np.outer(Px / denom, y - state.A_hat.T @ x)
    return RlsState(A_hat, 0.5 * (P + P.T))


def rls_predict(state, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != state.A_hat.shape[0]:
        raise ValueError(f"x must have length {state.A_hat.shape[0]}, got {x.shape[-1]}")
    return x @ state.A_hat


class RLSRegressor(RegressorMixin, BaseEstimator):
    """Recursive least-squares baseline with ``P_0 = p0 * I`` and ``A_hat_0 = 0``."""

    def __init__(self, p0=1.0):
        self.p0 = p0

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single_output = y.ndim == 1
        Y = y[:, None] if self._single_output else y
        self.n_features_in_ = X.shape[1]
        self.state_ = RlsState.initial(X.shape[1], Y.shape[1], self.p0)
        return self._absorb(X, Y)

    def partial_fit(self, X, y):
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        return self._absorb(X, y[:, None] if y.ndim == 1 else y)

    def _absorb(self, X, Y):
        state = self.state_
        for x, y in zip(X, Y):
            state = rls_update(state, x, y)
        self.state_ = state
        return self

    def predict(self, X):
        check_is_fitted(self, "state_")
        out = rls_predict(self.state_, check_array(X))
        return out[:, 0] if self._single_output else out

    @property
    def coef_(self):
        check_is_fitted(self, "state_")
        return self.state_.A_hat.T

    def save_checkpoint(self, path):
        check_is_fitted(self, "state_")
        with open(path, "w") as fh:
            json.dump(self.state_.to_dict(), fh, indent=2)
