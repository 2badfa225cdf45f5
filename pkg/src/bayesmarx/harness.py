"""Monte Carlo experiments comparing MARX estimators against RLS."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from joblib import Parallel, delayed

from .estimator import MARXRegressor, belief_to_dict, log_evidence, predict, update
from .regressor import RegressorBuffer, build_regressors
from .rls import RLSRegressor
from .simulators import (
    InputSignal,
    MsdParams,
    MsdState,
    gen_true_coefficients,
    input_signal,
    marx_step,
    msd_observe,
    msd_step,
    read_trajectory,
    run_seed,
)

__all__ = [
    "PRIOR_PRESETS",
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "RunReport",
    "compute_metrics",
    "rmse",
    "run_verification",
    "run_validation",
    "run_stream",
    "simulate_marx",
    "simulate_msd",
    "REPORT_SCHEMA",
    "validate_report",
]

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PRIOR_PRESETS = {
    "MARX-UI": {"row_precision": 1e-4, "scale": 1e-5},
    "MARX-WI": {"row_precision": 1e-1, "scale": 1e-1},
}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _default_train_sizes():
    return list(range(2, 65, 2))


@dataclass
class ExperimentConfig:
    """Settings for one experiment.

    ``priors`` maps estimator names to a preset name (``"MARX-UI"``,
    ``"MARX-WI"``) or to a custom dict with any of ``M0``, ``Lambda0``,
    ``Omega0`` (scalars mean multiples of the identity) and ``nu0``.
    """

    experiment: str = "verification"
    train_sizes: list = field(default_factory=_default_train_sizes)
    T_test: int = 100
    n_mc: int = 600
    master_seed: int = 0
    priors: dict = field(default_factory=lambda: {"MARX-WI": "MARX-WI", "MARX-UI": "MARX-UI"})
    rls_p0: float = 1.0
    n_y: int = 2
    n_u: int = 3
    d_y: int = 2
    d_u: int = 2
    W_true: list = field(default_factory=lambda: [[300.0, 100.0], [100.0, 200.0]])
    cutoff_hz: float = 20.0
    sample_rate_hz: float = 100.0
    cross_std: float = 0.1
    msd: dict = field(default_factory=dict)
    msd_noise_precision: float | None = 1e4
    input: dict = field(default_factory=dict)
    tracked_A: list = field(default_factory=lambda: [[0, 0], [2, 1], [4, 0]])
    tracked_W: list = field(default_factory=lambda: [[0, 0], [0, 1], [1, 1]])
    n_jobs: int = 1
    out: str | None = None
    format: str = "json"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = str(path)
        try:
            if path.endswith(".toml"):
                import tomli

                with open(path, "rb") as fh:
                    d = tomli.load(fh)
            else:
                with open(path) as fh:
                    d = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def validate(self):
        if self.experiment not in ("verification", "validation", "stream"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        ts = list(self.train_sizes)
        if not ts or any(int(t) < 1 for t in ts) or ts != sorted(set(ts)):
            raise ConfigError("train_sizes must be a nonempty ascending list of positive integers")
        if self.n_mc < 1 or self.T_test < 1:
            raise ConfigError("n_mc and T_test must be >= 1")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown output format {self.format!r}")
        if self.experiment == "validation" and (self.d_y != 2 or self.d_u != 2):
            raise ConfigError("the mass-spring-damper plant has D_y = D_u = 2")
        for name in self.priors:
            self.estimator_for(name)
        try:
            MsdParams(**self.msd)
            self.input_signal()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        d_x = self.n_y * self.d_y + self.n_u * self.d_u
        for i, j in self.tracked_A:
            if not (0 <= i < d_x and 0 <= j < self.d_y):
                raise ConfigError(f"tracked_A element {(i, j)} out of range")
        for i, j in self.tracked_W:
            if not (0 <= i < self.d_y and 0 <= j < self.d_y):
                raise ConfigError(f"tracked_W element {(i, j)} out of range")

    def input_signal(self):
        defaults = {"dt": self.msd_params().dt} if self.experiment == "validation" else {}
        return InputSignal.from_dict({**defaults, **self.input})

    def msd_params(self):
        return MsdParams(**self.msd)

    def estimator_for(self, name):
        if name not in self.priors:
            raise ConfigError(f"no prior named {name!r}; available: {sorted(self.priors)}")
        spec = self.priors[name]
        if isinstance(spec, str):
            if spec not in PRIOR_PRESETS:
                raise ConfigError(f"unknown prior preset {spec!r}")
            return MARXRegressor(**PRIOR_PRESETS[spec])
        if not isinstance(spec, dict):
            raise ConfigError(f"prior {name!r} must be a preset name or a dict")
        unknown = set(spec) - {"M0", "Lambda0", "Omega0", "nu0"}
        if unknown:
            raise ConfigError(f"prior {name!r} has unknown keys {sorted(unknown)}")
        est = MARXRegressor(
            row_precision=spec.get("Lambda0", 1.0),
            scale=spec.get("Omega0", 1.0),
            dof=spec.get("nu0"),
            prior_mean=spec.get("M0"),
        )
        d_x = self.n_y * self.d_y + self.n_u * self.d_u
        try:
            est._make_prior(d_x, self.d_y)
        except ValueError as exc:
            raise ConfigError(f"prior {name!r} is invalid: {exc}") from exc
        return est

    def to_dict(self):
        return asdict(self)


def rmse(predictions, truths):
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {truths.shape}")
    return float(np.sqrt(np.mean((predictions - truths) ** 2)))


def compute_metrics(predictions, truths, A_est=None, A_true=None, W_est=None, W_true=None):
    """Pooled RMSE plus Frobenius errors of the coefficient and precision estimates."""
    out = {"rmse": rmse(predictions, truths)}
    if A_est is not None and A_true is not None:
        out["frobenius_A"] = float(np.linalg.norm(np.asarray(A_true) - np.asarray(A_est)))
    if W_est is not None and W_true is not None:
        out["frobenius_W"] = float(np.linalg.norm(np.asarray(W_true) - np.asarray(W_est)))
    return out


def simulate_marx(truth, T, signal, rng):
    buffer = truth.make_buffer()
    Y = np.empty((T, truth.d_y))
    U = np.empty((T, truth.d_u))
    for t in range(T):
        U[t] = input_signal(t, signal, rng, truth.d_u)
        Y[t] = marx_step(truth, buffer, U[t], rng)
    return Y, U


def simulate_msd(params, T, signal, noise_precision, rng, state=None):
    """Noisy position observations ``Y`` and applied forces ``U``.

    ``noise_precision=None`` gives noise-free positions.
    """
    state = MsdState(params=params) if state is None else state
    Y = np.empty((T, 2))
    U = np.empty((T, 2))
    prec = None if noise_precision is None else noise_precision * np.eye(2)
    for t in range(T):
        U[t] = input_signal(t, signal, rng, 2)
        state = msd_step(state, U[t])
        Y[t] = state.z if prec is None else msd_observe(state, prec, rng)
    return Y, U


def _single_run(cfg, run_index):
    """All estimators on one shared realization; returns per-train-size metrics."""
    rng = np.random.default_rng(run_seed(cfg.master_seed, run_index))
    T_max = max(cfg.train_sizes)
    W_true = np.asarray(cfg.W_true, dtype=float)
    if cfg.experiment == "verification":
        truth = gen_true_coefficients(
            cfg.n_y, cfg.n_u, cfg.d_y, cfg.d_u, W_true,
            cutoff_hz=cfg.cutoff_hz, sample_rate_hz=cfg.sample_rate_hz,
            cross_std=cfg.cross_std, random_state=rng,
        )
        Y, U = simulate_marx(truth, T_max + cfg.T_test, cfg.input_signal(), rng)
        A_true = truth.A_true
    else:
        Y, U = simulate_msd(
            cfg.msd_params(), T_max + cfg.T_test, cfg.input_signal(), cfg.msd_noise_precision, rng
        )
        A_true = W_true = None
    X = build_regressors(Y, U, cfg.n_y, cfg.n_u)
    X_train, Y_train = X[:T_max], Y[:T_max]
    X_test, Y_test = X[T_max:], Y[T_max:]
    sizes = set(cfg.train_sizes)

    result = {"metrics": {}, "tracked_A": {}, "tracked_W": {}, "log_evidence": {}}
    estimators = {name: cfg.estimator_for(name) for name in cfg.priors}
    estimators["RLS"] = RLSRegressor(p0=cfg.rls_p0)
    for name, est in estimators.items():
        rows, tA, tW = [], [], []
        prev = 0
        is_marx = isinstance(est, MARXRegressor)
        if is_marx:
            est._reset(X.shape[1], Y.shape[1], single_output=False)
        for T in sorted(sizes):
            est.partial_fit(X_train[prev:T], Y_train[prev:T])
            prev = T
            if is_marx:
                b = est.belief_
                W_hat = b.mean_W()
                m = compute_metrics(est.predict(X_test), Y_test, b.M, A_true, W_hat, W_true)
                sA, sW = b.std_A(), b.std_W()
                tA.append([[b.M[i, j], sA[i, j]] for i, j in cfg.tracked_A])
                tW.append([[W_hat[i, j], sW[i, j]] for i, j in cfg.tracked_W])
            else:
                m = compute_metrics(est.predict(X_test), Y_test, est.state_.A_hat, A_true)
            rows.append(m)
        result["metrics"][name] = rows
        if is_marx:
            result["tracked_A"][name] = tA
            result["tracked_W"][name] = tW
            result["log_evidence"][name] = list(est.log_evidence_trace_)
    return result


def _mean_stderr(values):
    arr = np.asarray(values, dtype=float)
    n = arr.shape[0]
    std = arr.std(axis=0, ddof=1) if n > 1 else np.zeros(arr.shape[1:])
    return arr.mean(axis=0).tolist(), (std / np.sqrt(n)).tolist()


@dataclass
class RunReport:
    """Aggregated experiment results.

    ``aggregates[estimator][metric]`` holds ``mean`` and ``stderr`` lists
    aligned with ``train_sizes``; ``runs`` has one record per
    (run, train size, estimator).
    """

    experiment: str
    config: dict
    train_sizes: list
    estimators: list
    aggregates: dict
    runs: list
    log_evidence: dict = field(default_factory=dict)
    tracked: dict = field(default_factory=dict)
    stream: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path=None):
        """Tidy CSV: one row per run x train size x estimator (per step for streams)."""
        buf = io.StringIO()
        if self.stream is not None:
            s = self.stream
            d_y = len(s["predictions"][0]) if s["predictions"] else 0
            w = csv.writer(buf)
            w.writerow(["t"] + [f"pred_{i + 1}" for i in range(d_y)] + ["log_evidence"])
            for t, (p, le) in enumerate(zip(s["predictions"], s["log_evidence"])):
                w.writerow([t] + [repr(v) for v in p] + [repr(le)])
        else:
            cols = ["run", "train_size", "estimator", "rmse", "frobenius_A", "frobenius_W"]
            w = csv.DictWriter(buf, fieldnames=cols, restval="")
            w.writeheader()
            for row in self.runs:
                w.writerow({k: row.get(k, "") for k in cols})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _run_monte_carlo(cfg):
    results = Parallel(n_jobs=cfg.n_jobs)(delayed(_single_run)(cfg, r) for r in range(cfg.n_mc))
    names = list(cfg.priors) + ["RLS"]
    sizes = list(cfg.train_sizes)
    runs = []
    for r, res in enumerate(results):
        for name in names:
            for T, m in zip(sizes, res["metrics"][name]):
                runs.append({"run": r, "train_size": T, "estimator": name, **m})

    aggregates = {}
    for name in names:
        metric_keys = results[0]["metrics"][name][0].keys()
        aggregates[name] = {}
        for key in metric_keys:
            vals = [[row[key] for row in res["metrics"][name]] for res in results]
            mean, se = _mean_stderr(vals)
            aggregates[name][key] = {"mean": mean, "stderr": se}

    tracked, evidence = {}, {}
    for name in cfg.priors:
        A = np.asarray([res["tracked_A"][name] for res in results])  # run, size, elem, (mean, std)
        W = np.asarray([res["tracked_W"][name] for res in results])
        tracked[name] = {
            "A_elements": [list(e) for e in cfg.tracked_A],
            "A_mean": A[..., 0].mean(axis=0).T.tolist(),
            "A_std": A[..., 1].mean(axis=0).T.tolist(),
            "A_std_per_run": np.transpose(A[..., 1], (2, 0, 1)).tolist(),
            "W_elements": [list(e) for e in cfg.tracked_W],
            "W_mean": W[..., 0].mean(axis=0).T.tolist(),
            "W_std": W[..., 1].mean(axis=0).T.tolist(),
        }
        ev = np.asarray([res["log_evidence"][name] for res in results])
        m, se = _mean_stderr(ev)
        evidence[name] = {"mean": m, "stderr": se}

    return RunReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        train_sizes=sizes,
        estimators=names,
        aggregates=aggregates,
        runs=runs,
        log_evidence=evidence,
        tracked=tracked,
    )


def run_verification(config):
    """Synthetic MARX plant: MARX priors and RLS fitted on identical data per run."""
    if config.experiment != "verification":
        raise ConfigError("run_verification needs experiment='verification'")
    config.validate()
    return _run_monte_carlo(config)


def run_validation(config):
    """Double mass-spring-damper plant observed through noisy positions."""
    if config.experiment != "validation":
        raise ConfigError("run_validation needs experiment='validation'")
    config.validate()
    report = _run_monte_carlo(config)
    report.config["dt"] = config.msd_params().dt
    return report


def run_stream(config, input_csv, prior=None):
    """Run one MARX estimator over an externally supplied trajectory CSV.

    Each row ``t`` is first predicted from the posterior after rows ``< t`` and
    then absorbed.
    """
    config.validate()
    try:
        Y, U = read_trajectory(input_csv)
    except OSError as exc:
        raise DataError(f"cannot read {input_csv}: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if Y.shape[1] != config.d_y or U.shape[1] != config.d_u:
        raise DataError(
            f"trajectory has D_y={Y.shape[1]}, D_u={U.shape[1]}; config expects "
            f"D_y={config.d_y}, D_u={config.d_u}"
        )
    name = prior or next(iter(config.priors))
    est = config.estimator_for(name)
    buffer = RegressorBuffer(config.n_y, config.n_u, config.d_y, config.d_u)
    belief = est._make_prior(buffer.d_x, config.d_y)
    preds, scores = [], []
    for y, u in zip(Y, U):
        x = buffer.regressor(u)
        preds.append(predict(belief, x).mu.tolist())
        scores.append(log_evidence(belief, x, y))
        belief = update(belief, x, y)
        buffer.push(y, u)
    stream = {
        "estimator": name,
        "n_steps": len(Y),
        "predictions": preds,
        "log_evidence": scores,
        "cumulative_log_evidence": float(np.sum(scores)),
        "checkpoint": belief_to_dict(belief, len(Y)),
    }
    return RunReport(
        experiment="stream",
        config=config.to_dict(),
        train_sizes=[],
        estimators=[name],
        aggregates={},
        runs=[],
        stream=stream,
    )


_AGG = {
    "type": "object",
    "required": ["mean", "stderr"],
    "properties": {
        "mean": {"type": "array", "items": {"type": "number"}},
        "stderr": {"type": "array", "items": {"type": "number"}},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bayesmarx run report",
    "type": "object",
    "required": [
        "schema_version", "experiment", "config", "train_sizes",
        "estimators", "aggregates", "runs",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": ["verification", "validation", "stream"]},
        "config": {"type": "object"},
        "train_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "estimators": {"type": "array", "items": {"type": "string"}},
        "aggregates": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": _AGG},
        },
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["run", "train_size", "estimator", "rmse"],
                "properties": {
                    "run": {"type": "integer"},
                    "train_size": {"type": "integer"},
                    "estimator": {"type": "string"},
                    "rmse": {"type": "number"},
                    "frobenius_A": {"type": "number"},
                    "frobenius_W": {"type": "number"},
                },
            },
        },
        "log_evidence": {"type": "object", "additionalProperties": _AGG},
        "tracked": {"type": "object"},
        "stream": {
            "type": ["object", "null"],
            "required": [
                "estimator", "n_steps", "predictions", "log_evidence",
                "cumulative_log_evidence", "checkpoint",
            ],
            "properties": {
                "checkpoint": {
                    "type": "object",
                    "required": ["M", "Lambda", "Omega", "nu", "step_count"],
                },
            },
        },
    },
}


def validate_report(report):
    """Validate a report (``RunReport`` or parsed JSON) against ``REPORT_SCHEMA``."""
    import jsonschema

    data = report.to_dict() if isinstance(report, RunReport) else report
    jsonschema.validate(data, REPORT_SCHEMA)
