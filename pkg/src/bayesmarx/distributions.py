"""Matrix-normal-Wishart kernels.

All densities are exposed as log-densities. The Wishart is parameterized the
way the estimator uses it: ``W ~ Wishart(Omega^-1, nu)``, i.e. the exponent is
``-0.5 * tr(W @ Omega)``.

Log-density functions broadcast over leading batch dimensions of the random
arguments (``A`` of shape ``(..., D_x, D_y)``, ``W`` of shape
``(..., D_y, D_y)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "NotPositiveDefiniteError",
    "MnwBelief",
    "MnwNaturalMessage",
    "PredictiveT",
    "ln_multigamma",
    "mn_log_pdf",
    "wishart_log_pdf",
    "mnw_log_pdf",
    "mnw_unnormalized_log_pdf",
    "mnw_product",
    "mnw_sample",
    "mvt_log_pdf",
]

LOG_2PI = np.log(2.0 * np.pi)


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix that must be positive definite is not."""


def symmetrize(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def cholesky(X, name="matrix"):
    """Lower Cholesky factor; raises NotPositiveDefiniteError on failure."""
    X = np.asarray(X, dtype=float)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {X.shape}")
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc
    if not np.all(np.isfinite(L)):
        raise NotPositiveDefiniteError(f"{name} is not positive definite")
    return L


def _logdet_from_chol(L):
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def _check_symmetric(X, name, rtol=1e-10):
    scale = np.max(np.abs(X), axis=(-2, -1), initial=0.0)
    asym = np.max(np.abs(X - np.swapaxes(X, -1, -2)), axis=(-2, -1), initial=0.0)
    if np.any(asym > rtol * np.maximum(scale, 1e-300)):
        raise ValueError(f"{name} is not symmetric")


def _as_matrix(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {X.shape}")
    return X


@dataclass(frozen=True, eq=False)
class MnwBelief:
    """Proper matrix-normal-Wishart belief over ``(A, W)``.

    ``A | W ~ MN(M, Lambda^-1, W^-1)`` and ``W ~ Wishart(Omega^-1, nu)``.
    The constructor validates shapes, symmetry (after re-symmetrizing) and
    positive definiteness of ``Lambda`` and ``Omega``.
    """

    M: np.ndarray
    Lambda: np.ndarray
    Omega: np.ndarray
    nu: float

    def __post_init__(self):
        M = _as_matrix(self.M, "M")
        Lam = symmetrize(_as_matrix(self.Lambda, "Lambda"))
        Om = symmetrize(_as_matrix(self.Omega, "Omega"))
        d_x, d_y = M.shape
        if Lam.shape != (d_x, d_x):
            raise ValueError(f"Lambda must be {d_x}x{d_x}, got {Lam.shape}")
        if Om.shape != (d_y, d_y):
            raise ValueError(f"Omega must be {d_y}x{d_y}, got {Om.shape}")
        nu = float(self.nu)
        if not nu > d_y - 1:
            raise ValueError(f"nu must exceed D_y - 1 = {d_y - 1}, got {nu}")
        cholesky(Lam, "Lambda")
        cholesky(Om, "Omega")
        for name, val in (("M", M), ("Lambda", Lam), ("Omega", Om)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "nu", nu)

    @property
    def d_x(self):
        return self.M.shape[0]

    @property
    def d_y(self):
        return self.M.shape[1]

    @classmethod
    def isotropic(cls, d_x, d_y, row_precision=1.0, scale=1.0, nu=None, M=None):
        """Belief with ``Lambda = row_precision * I`` and ``Omega = scale * I``."""
        M = np.zeros((d_x, d_y)) if M is None else M
        nu = d_y + 2 if nu is None else nu
        return cls(M, row_precision * np.eye(d_x), scale * np.eye(d_y), nu)

    def to_natural(self):
        xi = self.Lambda @ self.M
        return MnwNaturalMessage(self.Lambda, xi, self.Omega + self.M.T @ xi, self.nu)

    def mean_W(self):
        """Wishart mean ``nu * Omega^-1``."""
        return self.nu * np.linalg.solve(self.Omega, np.eye(self.d_y))

    def std_A(self):
        """Elementwise standard deviation of the matrix-T marginal of ``A``.

        Requires ``nu > D_y + 1`` for the second moment to exist.
        """
        denom = self.nu - self.d_y - 1
        if denom <= 0:
            raise ValueError("marginal variance of A needs nu > D_y + 1")
        row_var = np.diag(np.linalg.solve(self.Lambda, np.eye(self.d_x)))
        return np.sqrt(np.outer(row_var, np.diag(self.Omega)) / denom)

    def std_W(self):
        """Elementwise standard deviation of ``W`` under the Wishart factor."""
        S = np.linalg.solve(self.Omega, np.eye(self.d_y))
        d = np.diag(S)
        return np.sqrt(self.nu * (S**2 + np.outer(d, d)))

    def __repr__(self):
        return f"MnwBelief(d_x={self.d_x}, d_y={self.d_y}, nu={self.nu})"


@dataclass(frozen=True, eq=False)
class MnwNaturalMessage:
    """Natural-parameter form ``(Lambda, xi = Lambda M, Phi = Omega + M' Lambda M, nu)``.

    May be improper: ``Lambda`` can be singular (a single observation gives a
    rank-1 ``x x'``), in which case no mean ``M`` exists.
    """

    Lambda: np.ndarray
    xi: np.ndarray
    Phi: np.ndarray
    nu: float

    def __post_init__(self):
        Lam = symmetrize(_as_matrix(self.Lambda, "Lambda"))
        xi = _as_matrix(self.xi, "xi")
        Phi = symmetrize(_as_matrix(self.Phi, "Phi"))
        d_x, d_y = xi.shape
        if Lam.shape != (d_x, d_x) or Phi.shape != (d_y, d_y):
            raise ValueError(
                f"inconsistent shapes: Lambda {Lam.shape}, xi {xi.shape}, Phi {Phi.shape}"
            )
        for name, val in (("Lambda", Lam), ("xi", xi), ("Phi", Phi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def d_x(self):
        return self.xi.shape[0]

    @property
    def d_y(self):
        return self.xi.shape[1]

    def to_belief(self):
        """Moment form; raises if ``Lambda`` or the recovered ``Omega`` is not PD."""
        L = cholesky(self.Lambda, "Lambda")
        Z = np.linalg.solve(L, self.xi)
        M = np.linalg.solve(L.T, Z)
        Omega = symmetrize(self.Phi - Z.T @ Z)
        return MnwBelief(M, self.Lambda, Omega, self.nu)

    def __repr__(self):
        return f"MnwNaturalMessage(d_x={self.d_x}, d_y={self.d_y}, nu={self.nu})"


@dataclass(frozen=True, eq=False)
class PredictiveT:
    """Multivariate location-scale T with location ``mu``, precision-scale ``Psi``
    and ``eta`` degrees of freedom (scale matrix is ``Psi^-1``)."""

    mu: np.ndarray
    Psi: np.ndarray
    eta: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Psi = symmetrize(np.atleast_2d(np.asarray(self.Psi, dtype=float)))
        if mu.ndim != 1 or Psi.shape != (mu.size, mu.size):
            raise ValueError(f"shape mismatch: mu {mu.shape}, Psi {Psi.shape}")
        if not float(self.eta) > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        cholesky(Psi, "Psi")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def mean(self):
        return self.mu

    @property
    def cov(self):
        if self.eta <= 2:
            raise ValueError("covariance is undefined for eta <= 2")
        return self.eta / (self.eta - 2.0) * np.linalg.solve(self.Psi, np.eye(self.mu.size))

    def log_pdf(self, y):
        return mvt_log_pdf(y, self)


def ln_multigamma(d, a):
    """``ln Gamma_d(a)``, defined for ``a > (d - 1) / 2``."""
    d = int(d)
    if d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    a = np.asarray(a, dtype=float)
    if np.any(a <= (d - 1) / 2.0):
        raise ValueError(f"ln_multigamma({d}, a) requires a > {(d - 1) / 2}")
    j = np.arange(1, d + 1)
    out = d * (d - 1) / 4.0 * np.log(np.pi) + np.sum(
        gammaln(a[..., None] + (1 - j) / 2.0), axis=-1
    )
    return out if out.ndim else float(out)


def mn_log_pdf(A, M, row_cov, col_cov):
    """Matrix normal ``MN(A | M, row_cov, col_cov)`` log-density.

    ``col_cov`` may carry batch dimensions matching those of ``A``.
    """
    A = np.asarray(A, dtype=float)
    M = _as_matrix(M, "M")
    d_x, d_y = M.shape
    if A.shape[-2:] != (d_x, d_y):
        raise ValueError(f"A must end in shape {(d_x, d_y)}, got {A.shape}")
    row_cov = np.asarray(row_cov, dtype=float)
    col_cov = np.asarray(col_cov, dtype=float)
    if row_cov.shape != (d_x, d_x) or col_cov.shape[-2:] != (d_y, d_y):
        raise ValueError("covariance shapes do not match M")
    _check_symmetric(row_cov, "row covariance")
    _check_symmetric(col_cov, "column covariance")
    Lu = cholesky(row_cov, "row covariance")
    Lv = cholesky(col_cov, "column covariance")
    Lu_b = np.broadcast_to(Lu, A.shape[:-2] + Lu.shape)
    B = np.linalg.solve(Lu_b, A - M)
    # B Lv^-T via a solve against Lv on the transposed problem
    Lv_b = np.broadcast_to(Lv, B.shape[:-2] + Lv.shape)
    C = np.linalg.solve(Lv_b, np.swapaxes(B, -1, -2))
    quad = np.sum(C**2, axis=(-2, -1))
    return (
        -0.5 * quad
        - 0.5 * d_x * d_y * LOG_2PI
        - 0.5 * d_y * _logdet_from_chol(Lu)
        - 0.5 * d_x * _logdet_from_chol(Lv)
    )


def wishart_log_pdf(W, scale, nu):
    """Wishart log-density with scale matrix ``scale`` (exponent ``-tr(scale^-1 W)/2``)."""
    W = np.asarray(W, dtype=float)
    scale = _as_matrix(scale, "scale")
    d = scale.shape[0]
    if W.shape[-2:] != (d, d):
        raise ValueError(f"W must end in shape {(d, d)}, got {W.shape}")
    if not nu > d - 1:
        raise ValueError(f"nu must exceed D - 1 = {d - 1}, got {nu}")
    _check_symmetric(W, "W")
    _check_symmetric(scale, "scale")
    Lw = cholesky(W, "W")
    Ls = cholesky(scale, "scale")
    Ls_b = np.broadcast_to(Ls, W.shape[:-2] + Ls.shape)
    # tr(S^-1 W) = ||Ls^-1 Lw||_F^2
    tr = np.sum(np.linalg.solve(Ls_b, Lw) ** 2, axis=(-2, -1))
    return (
        0.5 * (nu - d - 1) * _logdet_from_chol(Lw)
        - 0.5 * tr
        - 0.5 * nu * d * np.log(2.0)
        - 0.5 * nu * _logdet_from_chol(Ls)
        - ln_multigamma(d, nu / 2.0)
    )


def _mnw_quadratic(A, W, belief_or_msg):
    """``tr[W ((A - M)' Lambda (A - M) + Omega)]`` in natural form:
    ``tr[W (A' Lambda A - A' xi - xi' A + Phi)]``."""
    if isinstance(belief_or_msg, MnwBelief):
        msg = belief_or_msg.to_natural()
    else:
        msg = belief_or_msg
    inner = (
        np.swapaxes(A, -1, -2) @ msg.Lambda @ A
        - np.swapaxes(A, -1, -2) @ msg.xi
        - msg.xi.T @ A
        + msg.Phi
    )
    return np.sum(W * inner, axis=(-2, -1))


def mnw_log_pdf(A, W, belief):
    """Normalized matrix-normal-Wishart log-density at ``(A, W)``."""
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    d_x, d_y = belief.d_x, belief.d_y
    if A.shape[-2:] != (d_x, d_y) or W.shape[-2:] != (d_y, d_y):
        raise ValueError(
            f"expected A (..., {d_x}, {d_y}) and W (..., {d_y}, {d_y}), "
            f"got {A.shape} and {W.shape}"
        )
    _check_symmetric(W, "W")
    Lw = cholesky(W, "W")
    nu = belief.nu
    Am = A - belief.M
    quad = np.sum(W * (np.swapaxes(Am, -1, -2) @ belief.Lambda @ Am + belief.Omega), axis=(-2, -1))
    log_norm = 0.5 * (
        d_y * _logdet_from_chol(cholesky(belief.Lambda))
        + nu * _logdet_from_chol(cholesky(belief.Omega))
        - d_x * d_y * LOG_2PI
        - nu * d_y * np.log(2.0)
    ) - ln_multigamma(d_y, nu / 2.0)
    return log_norm + 0.5 * (nu + d_x - d_y - 1) * _logdet_from_chol(Lw) - 0.5 * quad


def mnw_unnormalized_log_pdf(A, W, msg):
    """Kernel ``0.5 (nu + D_x - D_y - 1) ln|W| - 0.5 tr[...]`` without constants.

    Accepts a proper belief or a (possibly improper) natural message.
    """
    W = np.asarray(W, dtype=float)
    A = np.asarray(A, dtype=float)
    Lw = cholesky(W, "W")
    d_x, d_y = msg.d_x, msg.d_y
    return 0.5 * (msg.nu + d_x - d_y - 1) * _logdet_from_chol(Lw) - 0.5 * _mnw_quadratic(A, W, msg)


def mnw_product(p1, p2):
    """Product of two MNW factors in natural form: parameters add, and
    ``nu3 = nu1 + nu2 + D_x - D_y - 1``."""
    if isinstance(p1, MnwBelief):
        p1 = p1.to_natural()
    if isinstance(p2, MnwBelief):
        p2 = p2.to_natural()
    if p1.xi.shape != p2.xi.shape:
        raise ValueError(f"dimension mismatch: {p1.xi.shape} vs {p2.xi.shape}")
    return MnwNaturalMessage(
        p1.Lambda + p2.Lambda,
        p1.xi + p2.xi,
        p1.Phi + p2.Phi,
        p1.nu + p2.nu + p1.d_x - p1.d_y - 1,
    )


def mnw_sample(belief, size=None, random_state=None):
    """Draw ``(A, W)`` from an MNW belief.

    ``W`` comes from the Bartlett decomposition of ``Wishart(Omega^-1, nu)``;
    ``A = M + L_Lambda^-T Z L_W^-1`` with ``Z`` standard normal.
    ``size=None`` returns single matrices, otherwise arrays with a leading
    axis of length ``size``.
    """
    rng = np.random.default_rng(random_state)
    n = 1 if size is None else int(size)
    d_x, d_y, nu = belief.d_x, belief.d_y, belief.nu

    # Factor of the scale Omega^-1 = (L_Om^-T)(L_Om^-1).
    L_om = cholesky(belief.Omega, "Omega")
    C = np.linalg.solve(L_om.T, np.eye(d_y))  # upper triangular, C C' = Omega^-1

    B = np.zeros((n, d_y, d_y))
    dof = nu - np.arange(d_y)
    B[:, np.arange(d_y), np.arange(d_y)] = np.sqrt(rng.chisquare(dof, size=(n, d_y)))
    rows, cols = np.tril_indices(d_y, k=-1)
    B[:, rows, cols] = rng.standard_normal((n, rows.size))
    CB = C @ B
    W = symmetrize(CB @ np.swapaxes(CB, -1, -2))

    L_lam = cholesky(belief.Lambda, "Lambda")
    Z = rng.standard_normal((n, d_x, d_y))
    L_w = np.linalg.cholesky(W)
    left = np.linalg.solve(np.broadcast_to(L_lam.T, (n, d_x, d_x)), Z)
    # right factor L_w^-1 so the column covariance is L_w^-T L_w^-1 = W^-1
    L_wT = np.swapaxes(L_w, -1, -2)
    A = belief.M + np.swapaxes(np.linalg.solve(L_wT, np.swapaxes(left, -1, -2)), -1, -2)
    if size is None:
        return A[0], W[0]
    return A, W


def mvt_log_pdf(y, t):
    """Log-density of the location-scale T ``T(y | mu, Psi^-1, eta)``.

    ``y`` may be a single vector or an array of shape ``(n, D_y)``.
    """
    y = np.asarray(y, dtype=float)
    d = t.mu.size
    if y.shape[-1] != d:
        raise ValueError(f"y must have trailing dimension {d}, got {y.shape}")
    L = cholesky(t.Psi, "Psi")
    r = y - t.mu
    maha = np.sum((r @ L) ** 2, axis=-1)
    eta = t.eta
    return (
        gammaln(0.5 * (eta + d))
        - gammaln(0.5 * eta)
        - 0.5 * d * np.log(eta * np.pi)
        + 0.5 * _logdet_from_chol(L)
        - 0.5 * (eta + d) * np.log1p(maha / eta)
    )
