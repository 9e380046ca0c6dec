"""Experiment orchestration: seeds x beta x method sweeps with artifacts.

A sweep is a grid of independent cells (beta, method, seed).  Every cell
derives its own random streams from the master seed, writes its artifacts to
a private directory via an atomic rename, and is skipped on rerun when its
outputs already exist.  The assembled ``metrics.csv``, per-run traces, and a
manifest of content hashes land in the configured output directory.

Per cell: the logged dataset is generated once from the cell's data stream
and shared by whichever method the cell runs, so methods are compared on
identical logs; the safety threshold is ``c_factor`` times the logged
dataset's mean reward.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os
import shutil
from dataclasses import dataclass

import numpy as np

from . import __version__
from .data import BanditDataset
from .depsue import DeploymentPlan, run_depsue, write_deployment_report
from .environment import (
    DEFAULT_BETA_SWEEP,
    EnvironmentConfig,
    LoggingPolicy,
    LoggingPolicySpec,
    build_environment,
    generate_logged_data,
)
from .estimators import HcopeConfig, on_policy_value
from .evaluation import exact_policy_value, metric_report
from .learners import (
    LagrangianState,
    TrainConfig,
    naive_safe_exploration,
    save_trace,
    train_opg,
)
from .reward_model import RewardModelConfig, train_reward_model
from .rng import RngStream

METHODS = (
    "opg_naive",
    "opg_cql",
    "safe_opg",
    "depsue_k2",
    "depsue_k5",
    "naive_safe_exploration",
)

METRICS_HEADER = "run_id,beta,method,K,seed,true_value,relative_value,novelty,violated"

_METHOD_K = {"depsue_k2": 2, "depsue_k5": 5}

ENV_OUTPUT_DIR = "SAFEOPL_OUT"
ENV_THREADS = "SAFEOPL_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    """Full sweep specification; serializable to and from JSON."""

    environment: EnvironmentConfig
    output_dir: str
    beta_sweep: tuple[float, ...] = DEFAULT_BETA_SWEEP
    methods: tuple[str, ...] = METHODS
    n_logged: int = 20_000
    n_seeds: int = 10
    seed: int = 0
    c_factor: float = 0.95
    delta: float = 0.05
    eta_psi_baseline: float = 0.1
    eta_psi_safe: float = 0.001
    train: TrainConfig = TrainConfig(steps=4_000)
    hcope: HcopeConfig = HcopeConfig()
    reward_model: RewardModelConfig = RewardModelConfig()
    n_eval_contexts: int = 10_000
    exploration_mix: float = 0.05

    def validate(self) -> None:
        self.environment.validate()
        if not self.beta_sweep:
            raise ValueError("beta_sweep: must be non-empty")
        if not self.methods:
            raise ValueError("methods: must be non-empty")
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(
                    f"methods: unknown method {method!r}; choose from {METHODS}"
                )
        if self.n_logged < 1:
            raise ValueError("n_logged: must be at least 1")
        if self.n_seeds < 1:
            raise ValueError("n_seeds: must be at least 1")
        if not 0.0 < self.c_factor:
            raise ValueError("c_factor: must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta: must lie in (0, 1)")
        if self.eta_psi_baseline <= 0.0 or self.eta_psi_safe <= 0.0:
            raise ValueError("eta_psi_baseline/eta_psi_safe: must be positive")
        if self.n_eval_contexts < 1:
            raise ValueError("n_eval_contexts: must be at least 1")
        if not 0.0 <= self.exploration_mix < 1.0:
            raise ValueError("exploration_mix: must lie in [0, 1)")
        self.train.validate()
        self.reward_model.validate()


def desk_config(output_dir: str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults: small world, 20k logs, 4k steps, 10 seeds.

    4,000 steps is the calibrated point where the safe learner's true value
    has recovered past the safety threshold on the hardest sweep cell (the
    concentrated beta = 8 logger) for every seed: the constrained run starts
    at the uniform policy, well below the threshold, and needs that long at
    the safe learning rate to climb back above it.
    """
    base = ExperimentConfig(
        environment=EnvironmentConfig(
            d_x=10, d_a=5, n_actions=50, n_supported=40, ground_truth_seed=7
        ),
        output_dir=output_dir,
    )
    return dataclasses.replace(base, **overrides) if overrides else base


def paper_scale_config(output_dir: str, **overrides) -> ExperimentConfig:
    """Full-scale profile: 1,000 actions, 500k logs, 10k steps, 30 seeds."""
    base = ExperimentConfig(
        environment=EnvironmentConfig(
            d_x=30, d_a=20, n_actions=1_000, n_supported=800, ground_truth_seed=7
        ),
        output_dir=output_dir,
        n_logged=500_000,
        n_seeds=30,
        train=TrainConfig(steps=10_000),
        n_eval_contexts=500_000,
    )
    return dataclasses.replace(base, **overrides) if overrides else base


def config_to_dict(config: ExperimentConfig) -> dict:
    out = dataclasses.asdict(config)
    out["environment"]["hidden_widths"] = list(config.environment.hidden_widths)
    return out


def _build_section(section: str, cls, raw: dict):
    field_names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - field_names
    if unknown:
        raise ValueError(f"{section}: unknown field {sorted(unknown)[0]!r}")
    kwargs = dict(raw)
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    if "environment" not in raw:
        raise ValueError("environment: required section missing")
    if "output_dir" not in raw:
        raise ValueError("output_dir: required field missing")
    sections = {
        "environment": EnvironmentConfig,
        "train": TrainConfig,
        "hcope": HcopeConfig,
        "reward_model": RewardModelConfig,
    }
    kwargs = {}
    for key, value in raw.items():
        if key in sections:
            kwargs[key] = _build_section(key, sections[key], value)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    field_names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(kwargs) - field_names
    if unknown:
        raise ValueError(f"unknown config field {sorted(unknown)[0]!r}")
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_id_of(beta: float, method: str, seed_index: int) -> str:
    return f"beta={beta:g}-{method}-seed={seed_index}"


def cell_dir_of(output_dir: str, beta: float, method: str, seed_index: int) -> str:
    return os.path.join(
        output_dir, "cells", f"beta={beta:g}", method, f"seed={seed_index}"
    )


def method_k(method: str) -> int:
    return _METHOD_K.get(method, 1)


def _format_metrics_row(
    run_id: str, beta: float, method: str, k: int, seed_index: int, report
) -> str:
    return (
        f"{run_id},{beta:.17g},{method},{k},{seed_index},"
        f"{report.true_value:.17g},{report.relative_value:.17g},"
        f"{report.novelty:.17g},{str(report.violated).lower()}"
    )


def run_cell(
    config: ExperimentConfig, beta: float, method: str, seed_index: int, cell_dir: str
) -> str:
    """Execute one sweep cell and write its artifacts; returns the metrics row.

    Stream layout: the data stream depends only on (master seed, beta, seed
    index) so every method in a cell trains on the same logged dataset;
    training and evaluation streams are method-specific.
    """
    env = build_environment(config.environment)
    logging_spec = LoggingPolicySpec(beta)
    root = RngStream(config.seed)
    beta_node = root.child(f"beta={beta:g}")
    cell = beta_node.child(f"seed={seed_index}")
    data0 = generate_logged_data(env, logging_spec, config.n_logged, cell.child("data"))
    threshold = config.c_factor * on_policy_value(data0)
    baseline_value, _ = exact_policy_value(
        env,
        LoggingPolicy(env, logging_spec),
        config.n_eval_contexts,
        beta_node.child("baseline_eval"),
    )
    mrng = cell.child(f"method={method}")
    features = env.action_features

    state = LagrangianState()
    history = None
    if method in ("opg_naive", "opg_cql"):
        variant = "naive_mean" if method == "opg_naive" else "cql"
        model = train_reward_model(
            data0, features, config.reward_model, variant, mrng.child("model")
        )
        train_cfg = dataclasses.replace(
            config.train, eta_psi=config.eta_psi_baseline
        )
        policy = train_opg(data0, model, features, train_cfg, mrng.child("train"), state)
    elif method in ("safe_opg", "depsue_k2", "depsue_k5"):
        k = method_k(method)
        plan = DeploymentPlan(
            n_deployments=k,
            samples_per_stage=config.n_logged // k,
            base_threshold=threshold,
            delta=config.delta,
        )
        train_cfg = dataclasses.replace(config.train, eta_psi=config.eta_psi_safe)
        history = run_depsue(
            env,
            logging_spec,
            plan,
            config.reward_model,
            train_cfg,
            config.hcope,
            mrng,
            data0=data0,
        )
        policy = history.records[-1].policy
        state = history.records[-1].state
    elif method == "naive_safe_exploration":
        policy = naive_safe_exploration(logging_spec, env, config.exploration_mix)
    else:
        raise ValueError(f"methods: unknown method {method!r}")

    report = metric_report(
        env, policy, baseline_value, threshold,
        config.n_eval_contexts, mrng.child("eval"),
    )
    run_id = run_id_of(beta, method, seed_index)
    row = _format_metrics_row(
        run_id, beta, method, method_k(method), seed_index, report
    )

    os.makedirs(cell_dir, exist_ok=True)
    with open(os.path.join(cell_dir, "metrics.csv"), "w") as fh:
        fh.write(METRICS_HEADER + "\n" + row + "\n")
    save_trace(state, os.path.join(cell_dir, "trace.csv"))
    if history is not None:
        write_deployment_report(
            history,
            env,
            os.path.join(cell_dir, "deployment_report.csv"),
            config.n_eval_contexts,
            mrng.child("report_eval"),
        )
    return row


def _run_cell_atomic(args: tuple) -> tuple[str, str | None, str | None]:
    """Worker entry: run one cell into a temp dir, rename on success."""
    config, beta, method, seed_index = args
    run_id = run_id_of(beta, method, seed_index)
    final_dir = cell_dir_of(config.output_dir, beta, method, seed_index)
    tmp_dir = final_dir + f".tmp-{os.getpid()}"
    try:
        if os.path.exists(tmp_dir):
            shutil.rmtree(tmp_dir)
        row = run_cell(config, beta, method, seed_index, tmp_dir)
        os.replace(tmp_dir, final_dir)
        return run_id, row, None
    except Exception as exc:  # noqa: BLE001 - cell failures must not abort the sweep
        shutil.rmtree(tmp_dir, ignore_errors=True)
        return run_id, None, f"{type(exc).__name__}: {exc}"


def _cell_completed(cell_dir: str) -> bool:
    return os.path.isfile(os.path.join(cell_dir, "metrics.csv"))


def _read_cell_row(cell_dir: str) -> str:
    with open(os.path.join(cell_dir, "metrics.csv")) as fh:
        fh.readline()
        return fh.readline().rstrip("\n")


def _hash_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def run_experiment(
    config: ExperimentConfig, force: bool = False, threads: int = 1
) -> int:
    """Run the full sweep; returns 0 on success, 2 on partial cell failures.

    Completed cells are skipped unless ``force``.  ``threads`` sets the
    worker-pool width; 1 runs cells inline in this process.
    """
    config.validate()
    output_dir = os.environ.get(ENV_OUTPUT_DIR) or config.output_dir
    if output_dir != config.output_dir:
        config = dataclasses.replace(config, output_dir=output_dir)
    threads = int(os.environ.get(ENV_THREADS) or threads)
    os.makedirs(output_dir, exist_ok=True)

    cells = [
        (beta, method, seed_index)
        for beta in config.beta_sweep
        for method in config.methods
        for seed_index in range(config.n_seeds)
    ]
    pending = []
    for beta, method, seed_index in cells:
        cdir = cell_dir_of(output_dir, beta, method, seed_index)
        if force and os.path.exists(cdir):
            shutil.rmtree(cdir)
        if not _cell_completed(cdir):
            pending.append((config, beta, method, seed_index))

    failures: list[dict] = []
    if threads <= 1:
        results = map(_run_cell_atomic, pending)
        for run_id, _, error in results:
            if error is not None:
                failures.append({"cell": run_id, "error": error})
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            for run_id, _, error in pool.map(_run_cell_atomic, pending):
                if error is not None:
                    failures.append({"cell": run_id, "error": error})

    rows = []
    for beta, method, seed_index in cells:
        cdir = cell_dir_of(output_dir, beta, method, seed_index)
        if _cell_completed(cdir):
            rows.append(_read_cell_row(cdir))
    metrics_path = os.path.join(output_dir, "metrics.csv")
    with open(metrics_path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")

    artifacts = {}
    for dirpath, _, filenames in os.walk(output_dir):
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, output_dir)
            if rel == "manifest.json":
                continue
            artifacts[rel] = _hash_file(path)
    manifest = {
        "config_hash": config_hash(config),
        "version": __version__,
        "config": config_to_dict(config),
        "artifacts": dict(sorted(artifacts.items())),
        "failures": failures,
    }
    with open(os.path.join(output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 2 if failures else 0


def _read_metrics(results_dir: str) -> list[dict]:
    path = os.path.join(results_dir, "metrics.csv")
    if not os.path.isfile(path):
        raise ValueError(f"missing metrics CSV: {path}")
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != METRICS_HEADER:
            raise ValueError(f"unrecognized metrics header in {path}")
        names = header.split(",")
        rows = [
            dict(zip(names, line.rstrip("\n").split(",")))
            for line in fh
            if line.strip()
        ]
    if not rows:
        raise ValueError(f"empty metrics CSV: {path}")
    return rows


def report(results_dir: str) -> dict[str, str]:
    """Summarize a finished sweep into table- and plot-ready CSV files.

    Emits violation counts (``x/y``), mean relative value with the worst
    seed (``mean (>=worst)``), novelty mean with spread (``mean (+-std)``),
    and a long-format CSV for plotting; returns the paths written.
    """
    rows = _read_metrics(results_dir)
    groups: dict[tuple[str, str], list[dict]] = {}
    order: list[tuple[str, str]] = []
    for row in rows:
        key = (row["method"], row["beta"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)

    paths = {
        "violations": os.path.join(results_dir, "violations.csv"),
        "relative_value": os.path.join(results_dir, "relative_value.csv"),
        "novelty": os.path.join(results_dir, "novelty.csv"),
        "plot_data": os.path.join(results_dir, "plot_data.csv"),
    }
    with open(paths["violations"], "w") as fh:
        fh.write("method,beta,violations\n")
        for method, beta in order:
            cell = groups[(method, beta)]
            count = sum(row["violated"] == "true" for row in cell)
            fh.write(f"{method},{beta},{count}/{len(cell)}\n")
    with open(paths["relative_value"], "w") as fh:
        fh.write("method,beta,relative_value\n")
        for method, beta in order:
            values = [float(r["relative_value"]) for r in groups[(method, beta)]]
            fh.write(
                f"{method},{beta},{np.mean(values):.3f} (≥{np.min(values):.3f})\n"
            )
    with open(paths["novelty"], "w") as fh:
        fh.write("method,beta,novelty\n")
        for method, beta in order:
            values = [float(r["novelty"]) for r in groups[(method, beta)]]
            std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            fh.write(f"{method},{beta},{np.mean(values):.3f} (±{std:.3f})\n")
    with open(paths["plot_data"], "w") as fh:
        fh.write("beta,method,K,seed,metric,value\n")
        for row in rows:
            for metric in ("relative_value", "novelty"):
                fh.write(
                    f"{row['beta']},{row['method']},{row['K']},{row['seed']},"
                    f"{metric},{row[metric]}\n"
                )
    return paths
