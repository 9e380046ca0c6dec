"""End-to-end command-line coverage: pipeline, sweep, and error paths."""

import json
import subprocess
import sys

import pytest

from safeopl.cli import main
from safeopl.environment import EnvironmentConfig
from safeopl.experiment import ExperimentConfig, save_config
from safeopl.learners import TrainConfig
from safeopl.reward_model import RewardModelConfig, save_reward_model, train_reward_model
from safeopl.data import load_dataset
from safeopl.environment import load_environment
from safeopl.rng import RngStream

GEN_ENV_TINY = [
    "gen-env", "--d-x", "3", "--d-a", "2", "--n-actions", "5",
    "--n-supported", "3", "--hidden-widths", "8", "4",
]


@pytest.fixture(autouse=True)
def clean_env_overrides(monkeypatch):
    monkeypatch.delenv("SAFEOPL_OUT", raising=False)
    monkeypatch.delenv("SAFEOPL_THREADS", raising=False)


@pytest.fixture
def tiny_env_file(tmp_path):
    path = str(tmp_path / "env.txt")
    assert main(GEN_ENV_TINY + ["--seed", "1", "--out", path]) == 0
    return path


def test_gen_env_writes_loadable_environment(tiny_env_file):
    env = load_environment(tiny_env_file)
    assert env.config.n_actions == 5
    assert env.config.ground_truth_seed == 1


def test_gen_data_is_seed_deterministic(tiny_env_file, tmp_path):
    a, b, c = (str(tmp_path / name) for name in ("a.csv", "b.csv", "c.csv"))
    base = ["gen-data", "--env", tiny_env_file, "--beta", "0", "--n", "200"]
    assert main(base + ["--seed", "5", "--out", a]) == 0
    assert main(base + ["--seed", "5", "--out", b]) == 0
    assert main(base + ["--seed", "6", "--out", c]) == 0
    blob = open(a, "rb").read()
    assert blob == open(b, "rb").read()
    assert blob != open(c, "rb").read()
    data = load_dataset(a)
    assert len(data) == 200
    assert len(data.s1()) == 100


def test_train_evaluate_pipeline(tiny_env_file, tmp_path, capsys):
    data = str(tmp_path / "data.csv")
    policy = str(tmp_path / "policy.csv")
    trace = str(tmp_path / "trace.csv")
    evaluation = str(tmp_path / "evaluation.csv")
    assert main([
        "gen-data", "--env", tiny_env_file, "--beta", "2", "--n", "300",
        "--seed", "3", "--out", data,
    ]) == 0
    assert main([
        "train", "--env", tiny_env_file, "--data", data, "--method", "safe_opg",
        "--steps", "2", "--seed", "3", "--out", policy, "--trace", trace,
    ]) == 0
    assert len(open(trace).read().splitlines()) == 3
    assert main([
        "evaluate", "--env", tiny_env_file, "--policy", policy, "--beta", "2",
        "--threshold", "0.1", "--n-contexts", "300", "--out", evaluation,
    ]) == 0
    lines = open(evaluation).read().splitlines()
    assert lines[0] == "true_value,value_stderr,relative_value,novelty,violated"
    true_value, stderr, relative, novelty, violated = lines[1].split(",")
    assert 0.0 <= float(true_value) <= 1.0
    assert violated in ("true", "false")
    assert "true value" in capsys.readouterr().out


def test_train_without_s2_fold_fails_cleanly(tiny_env_file, tmp_path, capsys):
    data = str(tmp_path / "data.csv")
    # fraction 0.9999 of 300 rounds up to all 300 samples in S1
    assert main([
        "gen-data", "--env", tiny_env_file, "--beta", "0", "--n", "300",
        "--split-fraction", "0.9999", "--out", data,
    ]) == 0
    status = main([
        "train", "--env", tiny_env_file, "--data", data,
        "--method", "safe_opg", "--steps", "1", "--out", str(tmp_path / "p.csv"),
    ])
    assert status == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "both folds" in err


def test_depsue_writes_report_and_stage_policies(tiny_env_file, tmp_path):
    out = tmp_path / "depsue"
    assert main([
        "depsue", "--env", tiny_env_file, "--beta", "0", "--k", "2",
        "--n-total", "400", "--steps", "1", "--n-eval-contexts", "200",
        "--seed", "2", "--out", str(out),
    ]) == 0
    report_lines = (out / "report.csv").read_text().splitlines()
    assert len(report_lines) == 3
    assert (out / "policy_stage1.csv").exists()
    assert (out / "policy_stage2.csv").exists()


def test_evaluate_reward_model_diagnostics(tiny_env_file, tmp_path):
    env = load_environment(tiny_env_file)
    data = str(tmp_path / "data.csv")
    main(["gen-data", "--env", tiny_env_file, "--beta", "0", "--n", "200",
          "--out", data])
    model = train_reward_model(
        load_dataset(data), env.action_features,
        RewardModelConfig(hidden_widths=(8, 4), n_members=2, epochs=2),
        "naive_mean", RngStream(0).child("model"),
    )
    model_path = str(tmp_path / "model.txt")
    save_reward_model(model, model_path)
    policy = str(tmp_path / "policy.csv")
    main(["train", "--env", tiny_env_file, "--data", data, "--method",
          "opg_naive", "--steps", "1", "--out", policy])
    diag = str(tmp_path / "diag.csv")
    assert main([
        "evaluate", "--env", tiny_env_file, "--policy", policy,
        "--n-contexts", "200", "--out", str(tmp_path / "eval.csv"),
        "--reward-model", model_path, "--diagnostics-out", diag,
    ]) == 0
    lines = open(diag).read().splitlines()
    assert lines[0] == "partition,series,bin_left,bin_right,value"
    assert len(lines) > 1


def tiny_sweep_config(output_dir):
    return ExperimentConfig(
        environment=EnvironmentConfig(
            d_x=3, d_a=2, n_actions=5, n_supported=3,
            ground_truth_seed=1, hidden_widths=(8, 4),
        ),
        output_dir=str(output_dir),
        beta_sweep=(0.0,),
        methods=("opg_naive", "naive_safe_exploration"),
        n_logged=300,
        n_seeds=1,
        train=TrainConfig(steps=1, batch_contexts=64, policy_hidden_width=8),
        reward_model=RewardModelConfig(hidden_widths=(8, 4), n_members=2, epochs=2),
        n_eval_contexts=200,
    )


def test_run_with_config_and_report(tmp_path, capsys):
    config_path = str(tmp_path / "config.json")
    out = tmp_path / "results"
    save_config(tiny_sweep_config(out), config_path)
    assert main(["run", "--config", config_path]) == 0
    assert (out / "metrics.csv").exists()
    assert "status 0" in capsys.readouterr().out

    assert main(["report", "--results", str(out)]) == 0
    printed = capsys.readouterr().out
    for name in ("violations", "relative_value", "novelty", "plot_data"):
        assert name in printed
        assert (out / f"{name}.csv").exists()


def test_run_out_flag_overrides_config_output_dir(tmp_path):
    config_path = str(tmp_path / "config.json")
    save_config(tiny_sweep_config(tmp_path / "ignored"), config_path)
    out = tmp_path / "actual"
    assert main(["run", "--config", config_path, "--out", str(out)]) == 0
    assert (out / "metrics.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_run_rejects_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 1
    assert capsys.readouterr().err.startswith("error:")

    unknown = tmp_path / "unknown.json"
    config_path = tmp_path / "config.json"
    save_config(tiny_sweep_config(tmp_path / "results"), str(config_path))
    doc = json.loads(config_path.read_text())
    doc["methods"] = ["gradient_banditry"]
    unknown.write_text(json.dumps(doc))
    assert main(["run", "--config", str(unknown)]) == 1
    assert "unknown method" in capsys.readouterr().err


def test_report_missing_results_dir_fails_cleanly(tmp_path, capsys):
    assert main(["report", "--results", str(tmp_path / "nope")]) == 1
    assert "missing metrics" in capsys.readouterr().err


def test_console_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-c", "import safeopl.cli, sys; sys.exit(safeopl.cli.main(['--help']))"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    for command in ("gen-env", "gen-data", "train", "depsue", "evaluate", "run", "report"):
        assert command in proc.stdout
