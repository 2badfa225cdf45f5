import json

import numpy as np
import pytest

from bayesmarx import cli
from bayesmarx.estimator import update
from bayesmarx.harness import (
    ConfigError,
    DataError,
    ExperimentConfig,
    compute_metrics,
    rmse,
    run_stream,
    run_validation,
    run_verification,
    simulate_msd,
    validate_report,
)
from bayesmarx.regressor import build_regressors
from bayesmarx.simulators import MsdParams, write_trajectory


def small(experiment="verification", **kw):
    base = dict(experiment=experiment, train_sizes=[4, 8], T_test=10, n_mc=3)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_metric_examples():
    assert rmse([[0.0, 0.0]], [[1.0, 1.0]]) == 1.0
    m = compute_metrics([[0.0]], [[0.0]], np.eye(2), np.zeros((2, 2)), np.ones((1, 1)), 2 * np.ones((1, 1)))
    assert m == {"rmse": 0.0, "frobenius_A": pytest.approx(np.sqrt(2)), "frobenius_W": 1.0}
    with pytest.raises(ValueError):
        rmse(np.zeros(2), np.zeros(3))


def test_wi_preset_prior():
    est = small().estimator_for("MARX-WI")
    prior = est._make_prior(10, 2)
    np.testing.assert_array_equal(prior.Lambda, 0.1 * np.eye(10))
    np.testing.assert_array_equal(prior.Omega, 0.1 * np.eye(2))
    assert prior.nu == 4
    assert not prior.M.any()


def test_custom_prior_and_errors():
    cfg = small(priors={"mine": {"Lambda0": 2.0, "nu0": 9}})
    assert cfg.estimator_for("mine")._make_prior(10, 2).nu == 9
    with pytest.raises(ConfigError):
        small(priors={"bad": "MARX-XX"})
    with pytest.raises(ConfigError):
        small(priors={"bad": {"Lambda0": -1.0}})
    with pytest.raises(ConfigError):
        small(priors={"bad": {"sigma": 1.0}})
    with pytest.raises(ConfigError):
        small(train_sizes=[8, 4])
    with pytest.raises(ConfigError):
        small(bogus=1)
    with pytest.raises(ConfigError):
        small(tracked_A=[[10, 0]])
    with pytest.raises(ConfigError):
        cfg.estimator_for("missing")


def test_verification_is_deterministic():
    r1 = run_verification(small()).to_json()
    r2 = run_verification(small()).to_json()
    assert r1 == r2
    r3 = run_verification(small(master_seed=1)).to_json()
    assert r3 != r1


def test_parallel_matches_serial():
    par, ser = run_verification(small(n_jobs=2)).to_dict(), run_verification(small()).to_dict()
    par["config"].pop("n_jobs"), ser["config"].pop("n_jobs")
    assert par == ser


def test_report_structure():
    rep = run_verification(small())
    validate_report(rep)
    validate_report(json.loads(rep.to_json()))
    assert rep.estimators == ["MARX-WI", "MARX-UI", "RLS"]
    assert len(rep.runs) == 3 * 2 * 3
    agg = rep.aggregates["MARX-WI"]
    assert set(agg) == {"rmse", "frobenius_A", "frobenius_W"}
    assert len(agg["rmse"]["mean"]) == 2
    vals = [r["rmse"] for r in rep.runs if r["estimator"] == "RLS" and r["train_size"] == 8]
    assert agg is not None and rep.aggregates["RLS"]["rmse"]["mean"][1] == pytest.approx(np.mean(vals))
    se = np.std(vals, ddof=1) / np.sqrt(3)
    assert rep.aggregates["RLS"]["rmse"]["stderr"][1] == pytest.approx(se)
    tr = rep.tracked["MARX-UI"]
    assert np.asarray(tr["A_std_per_run"]).shape == (3, 3, 2)
    assert len(rep.log_evidence["MARX-UI"]["mean"]) == 8
    lines = rep.to_csv().splitlines()
    assert lines[0] == "run,train_size,estimator,rmse,frobenius_A,frobenius_W"
    assert len(lines) == 1 + len(rep.runs)


def test_report_schema_rejects_garbage():
    import jsonschema

    data = run_verification(small(n_mc=2)).to_dict()
    data["schema_version"] = 99
    with pytest.raises(jsonschema.ValidationError):
        validate_report(data)


def test_noiseless_msd_at_rest():
    cfg = small("validation", input={"std": 0.0}, msd_noise_precision=None)
    rep = run_validation(cfg)
    for name in rep.estimators:
        assert rep.aggregates[name]["rmse"]["mean"] == [0.0, 0.0]
    assert rep.config["dt"] == 0.05
    rep = run_validation(small("validation", msd={"dt": 0.01}))
    assert rep.config["dt"] == 0.01


def test_msd_is_exact_marx_without_noise():
    # noiseless Euler dynamics are exactly linear in two output lags and one input lag
    p = MsdParams()
    rng = np.random.default_rng(0)
    Y, U = simulate_msd(p, 60, {"std": 1.0}, None, rng)
    X = build_regressors(Y, U, n_y=2, n_u=2)[2:]
    A, *_ = np.linalg.lstsq(X, Y[2:], rcond=None)
    np.testing.assert_allclose(X @ A, Y[2:], atol=1e-10)


def test_stream_matches_in_process(tmp_path, rng):
    Y, U = rng.standard_normal((25, 2)), rng.standard_normal((25, 2))
    path = tmp_path / "traj.csv"
    write_trajectory(path, Y, U)
    cfg = ExperimentConfig.from_dict({"experiment": "stream"})
    rep = run_stream(cfg, path, prior="MARX-UI")
    validate_report(rep)
    s = rep.stream
    X = build_regressors(Y, U, cfg.n_y, cfg.n_u)
    belief = cfg.estimator_for("MARX-UI")._make_prior(X.shape[1], 2)
    for t in range(25):
        np.testing.assert_allclose(s["predictions"][t], X[t] @ belief.M)
        belief = update(belief, X[t], Y[t])
    np.testing.assert_allclose(s["checkpoint"]["M"], belief.M)
    assert s["checkpoint"]["step_count"] == 25
    assert s["cumulative_log_evidence"] == pytest.approx(sum(s["log_evidence"]))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "t,pred_1,pred_2,log_evidence" and len(lines) == 26


def test_stream_data_errors(tmp_path, rng):
    cfg = ExperimentConfig.from_dict({"experiment": "stream"})
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError, match="empty"):
        run_stream(cfg, empty)
    with pytest.raises(DataError):
        run_stream(cfg, tmp_path / "missing.csv")
    wrong = tmp_path / "wrong.csv"
    write_trajectory(wrong, rng.standard_normal((5, 3)), rng.standard_normal((5, 2)))
    with pytest.raises(DataError, match="D_y=3"):
        run_stream(cfg, wrong)


def test_config_files(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('experiment = "verification"\nn_mc = 5\ntrain_sizes = [2, 4]\n')
    assert ExperimentConfig.load(toml).n_mc == 5
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"n_mc": 7}))
    assert ExperimentConfig.load(js).n_mc == 7
    bad = tmp_path / "bad.toml"
    bad.write_text("n_mc = = 3")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


class TestCli:
    def test_verify_json(self, tmp_path):
        out = tmp_path / "r.json"
        code = cli.main(["verify", "--n-mc", "2", "--train-sizes", "4,8", "--out", str(out)])
        assert code == 0
        validate_report(json.loads(out.read_text()))

    def test_simulate_then_stream(self, tmp_path, capsys):
        traj = tmp_path / "t.csv"
        assert cli.main(["simulate", "msd", "--steps", "30", "--out", str(traj)]) == 0
        assert cli.main(["stream", str(traj), "--format", "csv"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 31

    def test_simulate_stdout(self, capsys):
        assert cli.main(["simulate", "marx", "--steps", "3"]) == 0
        assert capsys.readouterr().out.splitlines()[0] == "t,y_1,y_2,u_1,u_2"

    def test_config_error_codes(self, tmp_path):
        assert cli.main(["verify", "--train-sizes", "8,4"]) == 1
        with pytest.raises(SystemExit) as exc:
            cli.main(["verify", "--train-sizes", "a,b"])
        assert exc.value.code == 1
        assert cli.main(["verify", "--config", str(tmp_path / "nope.toml")]) == 1
        traj = tmp_path / "t.csv"
        cli.main(["simulate", "marx", "--steps", "5", "--out", str(traj)])
        assert cli.main(["stream", str(traj), "--prior", "nope"]) == 1

    def test_data_error_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,y_1,y_2,u_1,u_2\n0,1,2,3\n")
        assert cli.main(["stream", str(bad)]) == 2

    def test_nonfinite_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,y_1,y_2,u_1,u_2\n0,nan,2,3,4\n")
        assert cli.main(["stream", str(bad)]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerical_error_code(self, tmp_path):
        # finite but overflowing outputs break positive definiteness of Omega
        big = tmp_path / "big.csv"
        big.write_text("t,y_1,y_2,u_1,u_2\n0,1e200,1e200,0,0\n1,1,1,1,1\n")
        assert cli.main(["stream", str(big)]) == 3
