"""Lagged regressor construction for MARX models.

The regressor at time ``t`` is laid out newest lag first::

    x_t = [y_{t-1}; ...; y_{t-N_y}; u_t; u_{t-1}; ...; u_{t-N_u+1}]

which is the column-major vectorization of the output-history matrix followed
by that of the input-history matrix. Missing history is zero-padded.
"""
from __future__ import annotations

from collections import deque

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = ["RegressorBuffer", "build_regressors", "LagFeatures"]


class RegressorBuffer:
    """Ring buffers of past outputs and inputs.

    ``regressor(u_t)`` returns ``x_t`` without touching the buffers;
    ``push(y_t, u_t)`` advances time by one step.
    """

    def __init__(self, n_y, n_u, d_y, d_u):
        if min(n_y, d_y, d_u) < 1 or n_u < 1:
            raise ValueError("orders and dimensions must be positive integers")
        self.n_y, self.n_u, self.d_y, self.d_u = int(n_y), int(n_u), int(d_y), int(d_u)
        self.y_history = deque([np.zeros(self.d_y) for _ in range(self.n_y)], maxlen=self.n_y)
        # past inputs only; the current u_t is supplied to regressor()
        self.u_history = deque(
            [np.zeros(self.d_u) for _ in range(self.n_u - 1)], maxlen=max(self.n_u - 1, 1)
        )

    @property
    def d_x(self):
        return self.n_y * self.d_y + self.n_u * self.d_u

    def _check(self, v, d, name):
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != d:
            raise ValueError(f"{name} must have length {d}, got {v.size}")
        return v

    def regressor(self, u_t):
        u_t = self._check(u_t, self.d_u, "u_t")
        parts = list(self.y_history) + [u_t] + list(self.u_history)[: self.n_u - 1]
        return np.concatenate(parts)

    def push(self, y_t, u_t):
        y_t = self._check(y_t, self.d_y, "y_t")
        u_t = self._check(u_t, self.d_u, "u_t")
        self.y_history.appendleft(y_t.copy())
        if self.n_u > 1:
            self.u_history.appendleft(u_t.copy())

    def copy(self):
        new = RegressorBuffer(self.n_y, self.n_u, self.d_y, self.d_u)
        new.y_history = deque((v.copy() for v in self.y_history), maxlen=self.y_history.maxlen)
        new.u_history = deque((v.copy() for v in self.u_history), maxlen=self.u_history.maxlen)
        return new


def build_regressors(Y, U, n_y, n_u):
    """Stack ``x_t`` for every row of an output/input trajectory.

    Row ``t`` of the result pairs with ``Y[t]``; history before the first row
    is zero.
    """
    Y = np.asarray(Y, dtype=float)
    U = np.asarray(U, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if U.ndim == 1:
        U = U[:, None]
    if Y.shape[0] != U.shape[0]:
        raise ValueError(f"Y and U lengths differ: {Y.shape[0]} vs {U.shape[0]}")
    T = Y.shape[0]
    Yp = np.vstack([np.zeros((n_y, Y.shape[1])), Y])
    Up = np.vstack([np.zeros((n_u - 1, U.shape[1])), U])
    blocks = [Yp[n_y - k : n_y - k + T] for k in range(1, n_y + 1)]
    blocks += [Up[n_u - 1 - k : n_u - 1 - k + T] for k in range(n_u)]
    return np.hstack(blocks)


class LagFeatures(TransformerMixin, BaseEstimator):
    """Turn a trajectory ``hstack([Y, U])`` into MARX regressors.

    Parameters
    ----------
    n_outputs : int
        Number of leading columns that are outputs ``y``; the rest are inputs.
    n_y, n_u : int
        Output and input memory sizes.
    """

    def __init__(self, n_outputs=1, n_y=2, n_u=1):
        self.n_outputs = n_outputs
        self.n_y = n_y
        self.n_u = n_u

    def fit(self, X, y=None):
        X = check_array(X)
        if not 0 < self.n_outputs < X.shape[1]:
            raise ValueError("n_outputs must leave at least one input column")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        d_y = self.n_outputs
        return build_regressors(X[:, :d_y], X[:, d_y:], self.n_y, self.n_u)
