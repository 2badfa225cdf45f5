"""Ground-truth data generators.

Two plants: a synthetic MARX system whose self-lag dynamics come from
Butterworth low-pass filters, and a double mass-spring-damper integrated with
forward Euler. Both are deterministic given a seed.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .distributions import cholesky
from .regressor import RegressorBuffer

__all__ = [
    "MarxSystemTruth",
    "gen_true_coefficients",
    "companion_spectral_radius",
    "marx_step",
    "MsdParams",
    "MsdState",
    "msd_step",
    "msd_observe",
    "InputSignal",
    "input_signal",
    "run_seed",
    "write_trajectory",
    "read_trajectory",
    "TrajectoryFormatError",
]

logger = logging.getLogger(__name__)


def run_seed(master_seed, run_index):
    """Per-run seed: ``master_seed XOR run_index``."""
    return int(master_seed) ^ int(run_index)


@dataclass(frozen=True, eq=False)
class MarxSystemTruth:
    A_true: np.ndarray
    W_true: np.ndarray
    n_y: int
    n_u: int
    d_y: int
    d_u: int

    def __post_init__(self):
        d_x = self.n_y * self.d_y + self.n_u * self.d_u
        if self.A_true.shape != (d_x, self.d_y):
            raise ValueError(f"A_true must be {d_x}x{self.d_y}, got {self.A_true.shape}")
        if self.W_true.shape != (self.d_y, self.d_y):
            raise ValueError("W_true has the wrong shape")
        cholesky(self.W_true, "W_true")

    @property
    def d_x(self):
        return self.n_y * self.d_y + self.n_u * self.d_u

    def make_buffer(self):
        return RegressorBuffer(self.n_y, self.n_u, self.d_y, self.d_u)


def butterworth_ar(order, cutoff_hz, sample_rate_hz):
    """AR regression coefficients ``[c_1, ..., c_order]`` of a digital
    Butterworth low-pass, so that ``y_t = sum_k c_k y_{t-k} + ...``."""
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie strictly inside (0, {sample_rate_hz / 2}) Hz"
        )
    _, a = signal.butter(order, cutoff_hz, btype="low", fs=sample_rate_hz)
    return -a[1:] / a[0]


def companion_spectral_radius(A, n_y, d_y):
    """Spectral radius of the autonomous output recursion encoded in ``A``."""
    blocks = [A[k * d_y : (k + 1) * d_y, :].T for k in range(n_y)]
    comp = np.zeros((n_y * d_y, n_y * d_y))
    comp[:d_y, :] = np.hstack(blocks)
    comp[d_y:, :-d_y] = np.eye((n_y - 1) * d_y)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def gen_true_coefficients(
    n_y,
    n_u,
    d_y,
    d_u,
    W_true,
    cutoff_hz=20.0,
    sample_rate_hz=100.0,
    cross_std=0.1,
    random_state=None,
    max_tries=100,
):
    """Draw a stable MARX system.

    Self-lag coefficients of every output channel are the AR coefficients of
    an order-``n_y`` Butterworth filter; all cross-channel and input
    coefficients are i.i.d. ``N(0, cross_std^2)``. Draws whose companion
    matrix has spectral radius >= 1 are rejected and redrawn.
    """
    ar = butterworth_ar(n_y, cutoff_hz, sample_rate_hz)
    rng = np.random.default_rng(random_state)
    d_x = n_y * d_y + n_u * d_u
    self_mask = np.zeros((d_x, d_y), dtype=bool)
    A_self = np.zeros((d_x, d_y))
    for k in range(n_y):
        for i in range(d_y):
            self_mask[k * d_y + i, i] = True
            A_self[k * d_y + i, i] = ar[k]
    W_true = np.asarray(W_true, dtype=float)
    for attempt in range(max_tries):
        A = np.where(self_mask, A_self, cross_std * rng.standard_normal((d_x, d_y)))
        rho = companion_spectral_radius(A, n_y, d_y)
        if rho < 1.0:
            return MarxSystemTruth(A, W_true, n_y, n_u, d_y, d_u)
        logger.info("rejected unstable coefficient draw %d (spectral radius %.4f)", attempt, rho)
    raise RuntimeError(f"no stable coefficient draw in {max_tries} attempts")


def marx_step(truth, buffer, u_t, rng):
    """Emit ``y_t = A' x_t + e_t`` with ``e_t ~ N(0, W^-1)`` and advance ``buffer``."""
    x = buffer.regressor(u_t)
    L = np.linalg.cholesky(truth.W_true)
    e = np.linalg.solve(L.T, rng.standard_normal(truth.d_y))
    y = truth.A_true.T @ x + e
    buffer.push(y, u_t)
    return y


@dataclass(frozen=True)
class MsdParams:
    m1: float = 1.0
    m2: float = 1.0
    k1: float = 1.0
    k2: float = 1.0
    c1: float = 0.1
    c2: float = 0.1
    dt: float = 0.05

    def __post_init__(self):
        for name in ("m1", "m2", "k1", "k2", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        # zero damping is allowed for conservation checks
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("damping coefficients must be non-negative")

    @property
    def K(self):
        return np.array([[-(self.k1 + self.k2), self.k2], [self.k2, -self.k2]])

    @property
    def C(self):
        return np.array([[-(self.c1 + self.c2), self.c2], [self.c2, -self.c2]])

    @property
    def inertia(self):
        return np.diag([self.m1, self.m2])


@dataclass(frozen=True, eq=False)
class MsdState:
    z: np.ndarray = field(default_factory=lambda: np.zeros(2))
    z_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))
    params: MsdParams = field(default_factory=MsdParams)

    def energy(self):
        """Kinetic plus spring energy."""
        p = self.params
        kin = 0.5 * (p.m1 * self.z_dot[0] ** 2 + p.m2 * self.z_dot[1] ** 2)
        pot = 0.5 * p.k1 * self.z[0] ** 2 + 0.5 * p.k2 * (self.z[1] - self.z[0]) ** 2
        return kin + pot


def msd_step(state, u):
    """One forward-Euler step; the position update uses the old velocity."""
    p = state.params
    u = np.asarray(u, dtype=float).reshape(2)
    force = p.K @ state.z + p.C @ state.z_dot + u
    z_ddot = force / np.array([p.m1, p.m2])
    return replace(state, z=state.z + p.dt * state.z_dot, z_dot=state.z_dot + p.dt * z_ddot)


def msd_observe(state, noise_precision, rng):
    """Positions plus zero-mean Gaussian noise with the given precision."""
    L = cholesky(np.asarray(noise_precision, dtype=float), "noise_precision")
    return state.z + np.linalg.solve(L.T, rng.standard_normal(state.z.size))


@dataclass(frozen=True)
class InputSignal:
    """Input generator settings.

    ``kind`` is ``"gaussian"`` (i.i.d. ``N(0, std^2)`` per channel) or
    ``"sine_sweep"`` (linear chirp from ``f_start`` to ``f_end`` Hz over
    ``sweep_steps`` samples of length ``dt``, channels shifted by quarter
    periods, plus optional Gaussian jitter of size ``std``).
    """

    kind: str = "gaussian"
    std: float = 1.0
    amplitude: float = 1.0
    f_start: float = 0.05
    f_end: float = 1.0
    sweep_steps: int = 200
    dt: float = 0.05

    def __post_init__(self):
        if self.kind not in ("gaussian", "sine_sweep"):
            raise ValueError(f"unknown input generator {self.kind!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def input_signal(t, config, rng, d_u=2):
    if isinstance(config, dict):
        config = InputSignal.from_dict(config)
    if config.kind == "gaussian":
        return config.std * rng.standard_normal(d_u)
    tau = (t % config.sweep_steps) * config.dt
    span = config.sweep_steps * config.dt
    phase = 2 * np.pi * (config.f_start * tau + 0.5 * (config.f_end - config.f_start) * tau**2 / span)
    u = config.amplitude * np.sin(phase + 0.5 * np.pi * np.arange(d_u))
    if config.std > 0:
        u = u + config.std * rng.standard_normal(d_u)
    return u


class TrajectoryFormatError(ValueError):
    pass


def write_trajectory(path, Y, U):
    """CSV with header ``t,y_1..y_Dy,u_1..u_Du`` and full-precision values.

    ``path`` may also be an open text stream.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    header = ["t"] + [f"y_{i + 1}" for i in range(Y.shape[1])] + [f"u_{i + 1}" for i in range(U.shape[1])]
    if hasattr(path, "write"):
        _write_rows(path, header, Y, U)
    else:
        with open(path, "w", newline="") as fh:
            _write_rows(fh, header, Y, U)


def _write_rows(fh, header, Y, U):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for t, (y, u) in enumerate(zip(Y, U)):
        w.writerow([t] + [f"{v:.17e}" for v in y] + [f"{v:.17e}" for v in u])


def read_trajectory(path):
    """Inverse of ``write_trajectory``; returns ``(Y, U)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TrajectoryFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise TrajectoryFormatError(f"{path}: line 1: header must start with 't'")
    y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
    u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
    if not y_cols or not u_cols or len(y_cols) + len(u_cols) + 1 != len(header):
        raise TrajectoryFormatError(f"{path}: line 1: expected columns t, y_*, u_*")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TrajectoryFormatError(
                f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise TrajectoryFormatError(f"{path}: line {lineno}: non-numeric value") from None
        if not np.all(np.isfinite(vals)):
            raise TrajectoryFormatError(f"{path}: line {lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise TrajectoryFormatError(f"{path}: no data rows")
    arr = np.asarray(data)
    return arr[:, y_cols], arr[:, u_cols]
