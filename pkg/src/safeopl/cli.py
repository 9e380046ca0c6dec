"""Command-line interface.

Subcommands cover the whole pipeline piecemeal (``gen-env``, ``gen-data``,
``train``, ``depsue``, ``evaluate``) and as an orchestrated sweep (``run``,
``report``).  Exit codes: 0 success, 1 configuration error, 2 partial cell
failures during a sweep.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import experiment
from .data import load_dataset, save_dataset, split_dataset
from .depsue import DeploymentPlan, run_depsue, write_deployment_report
from .environment import (
    EnvironmentConfig,
    LoggingPolicy,
    LoggingPolicySpec,
    build_environment,
    generate_logged_data,
    load_environment,
    save_environment,
)
from .estimators import HcopeConfig, SafetySpec, on_policy_value
from .evaluation import (
    exact_policy_value,
    metric_report,
    reward_model_diagnostics,
    save_diagnostics,
)
from .learners import LagrangianState, TrainConfig, save_trace, train_opg, train_safe_opg
from .policy import load_policy, save_policy
from .reward_model import RewardModelConfig, load_reward_model, train_reward_model
from .rng import RngStream


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--out", type=str, default=None, help="output path")
    common.add_argument(
        "--force", action="store_true", help="overwrite completed outputs"
    )
    common.add_argument(
        "--threads", type=int, default=1, help="worker-pool width for sweeps"
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safeopl",
        description="Safe off-policy learning experiments for contextual bandits",
    )
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen-env", parents=[common], help="build and save a synthetic environment"
    )
    p.add_argument("--d-x", type=int, default=10)
    p.add_argument("--d-a", type=int, default=5)
    p.add_argument("--n-actions", type=int, default=50)
    p.add_argument("--n-supported", type=int, default=40)
    p.add_argument("--hidden-widths", type=int, nargs=2, default=(100, 50))
    p.add_argument("--context-pool-size", type=int, default=None)

    p = sub.add_parser(
        "gen-data", parents=[common], help="log data under the softmax logging policy"
    )
    p.add_argument("--env", required=True, help="environment file from gen-env")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument(
        "--split-fraction",
        type=float,
        default=0.5,
        help="fraction assigned to the S1 fold",
    )

    p = sub.add_parser("train", parents=[common], help="train a policy on logged data")
    p.add_argument("--env", required=True)
    p.add_argument("--data", required=True)
    p.add_argument(
        "--method",
        choices=("opg_naive", "opg_cql", "safe_opg"),
        default="safe_opg",
    )
    p.add_argument("--steps", type=int, default=4_000)
    p.add_argument("--eta-psi", type=float, default=None)
    p.add_argument("--c-factor", type=float, default=0.95)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--trace", type=str, default=None, help="trace CSV path")

    p = sub.add_parser(
        "depsue", parents=[common], help="run a staged deployment sequence"
    )
    p.add_argument("--env", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--n-total", type=int, default=20_000)
    p.add_argument("--steps", type=int, default=4_000)
    p.add_argument("--c-factor", type=float, default=0.95)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--n-eval-contexts", type=int, default=10_000)

    p = sub.add_parser(
        "evaluate", parents=[common], help="ground-truth metrics for a policy file"
    )
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--beta", type=float, default=None, help="for the relative value")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--n-contexts", type=int, default=10_000)
    p.add_argument("--reward-model", type=str, default=None)
    p.add_argument("--diagnostics-out", type=str, default=None)

    p = sub.add_parser("run", parents=[common], help="run a full experiment sweep")
    p.add_argument("--config", type=str, default=None, help="experiment JSON")
    p.add_argument(
        "--paper-scale",
        action="store_true",
        help="use the full-scale profile instead of desk defaults",
    )

    p = sub.add_parser("report", parents=[common], help="summarize sweep results")
    p.add_argument("--results", required=True)
    return parser


def _cmd_gen_env(args) -> int:
    config = EnvironmentConfig(
        d_x=args.d_x,
        d_a=args.d_a,
        n_actions=args.n_actions,
        n_supported=args.n_supported,
        ground_truth_seed=args.seed,
        hidden_widths=tuple(args.hidden_widths),
        context_pool_size=args.context_pool_size,
    )
    env = build_environment(config)
    out = args.out or "environment.txt"
    save_environment(env, out)
    print(f"wrote environment to {out}")
    return 0


def _cmd_gen_data(args) -> int:
    env = load_environment(args.env)
    spec = LoggingPolicySpec(args.beta)
    root = RngStream(args.seed)
    data = generate_logged_data(env, spec, args.n, root.child("data"))
    data = split_dataset(data, args.split_fraction, root.child("split"))
    out = args.out or "logged_data.csv"
    save_dataset(data, out)
    print(f"wrote {len(data)} logged samples to {out}")
    return 0


def _cmd_train(args) -> int:
    env = load_environment(args.env)
    data = load_dataset(args.data)
    root = RngStream(args.seed)
    is_safe = args.method == "safe_opg"
    eta_psi = args.eta_psi if args.eta_psi is not None else (0.001 if is_safe else 0.1)
    train_cfg = TrainConfig(eta_psi=eta_psi, steps=args.steps)
    variant = "cql" if args.method == "opg_cql" else "naive_mean"
    model = train_reward_model(
        data, env.action_features, RewardModelConfig(), variant, root.child("model")
    )
    state = LagrangianState()
    if is_safe:
        s1, s2 = data.s1(), data.s2()
        if len(s1) == 0 or len(s2) == 0:
            raise ValueError(
                "safe_opg needs both folds; regenerate data with a split fraction"
            )
        safety = SafetySpec(args.c_factor * on_policy_value(data), args.delta)
        policy, state = train_safe_opg(
            s1, s2, safety, HcopeConfig(delta=args.delta), model,
            env.action_features, train_cfg, root.child("train"),
        )
    else:
        policy = train_opg(
            data, model, env.action_features, train_cfg, root.child("train"), state
        )
    out = args.out or "policy.csv"
    save_policy(policy, out)
    print(f"wrote policy to {out}")
    if args.trace:
        save_trace(state, args.trace)
        print(f"wrote trace to {args.trace}")
    return 0


def _cmd_depsue(args) -> int:
    env = load_environment(args.env)
    spec = LoggingPolicySpec(args.beta)
    root = RngStream(args.seed)
    data0 = generate_logged_data(env, spec, args.n_total, root.child("data"))
    plan = DeploymentPlan(
        n_deployments=args.k,
        samples_per_stage=args.n_total // args.k,
        base_threshold=args.c_factor * on_policy_value(data0),
        delta=args.delta,
    )
    history = run_depsue(
        env,
        spec,
        plan,
        RewardModelConfig(),
        TrainConfig(eta_psi=0.001, steps=args.steps),
        HcopeConfig(delta=args.delta),
        root.child("depsue"),
        data0=data0,
    )
    out_dir = args.out or "depsue_out"
    os.makedirs(out_dir, exist_ok=True)
    write_deployment_report(
        history,
        env,
        os.path.join(out_dir, "report.csv"),
        args.n_eval_contexts,
        root.child("report_eval"),
    )
    for rec in history.records:
        save_policy(rec.policy, os.path.join(out_dir, f"policy_stage{rec.stage}.csv"))
    print(f"wrote {len(history.records)} stage records to {out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    env = load_environment(args.env)
    policy = load_policy(args.policy)
    root = RngStream(args.seed)
    baseline = float("nan")
    if args.beta is not None:
        baseline, _ = exact_policy_value(
            env,
            LoggingPolicy(env, LoggingPolicySpec(args.beta)),
            args.n_contexts,
            root.child("baseline_eval"),
        )
    threshold = args.threshold if args.threshold is not None else float("nan")
    report = metric_report(
        env, policy, baseline, threshold, args.n_contexts, root.child("eval")
    )
    out = args.out or "evaluation.csv"
    with open(out, "w") as fh:
        fh.write("true_value,value_stderr,relative_value,novelty,violated\n")
        fh.write(
            f"{report.true_value:.17g},{report.value_stderr:.17g},"
            f"{report.relative_value:.17g},{report.novelty:.17g},"
            f"{str(report.violated).lower()}\n"
        )
    print(
        f"true value {report.true_value:.4f} (stderr {report.value_stderr:.4f}), "
        f"novelty {report.novelty:.4f}; wrote {out}"
    )
    if args.reward_model:
        model = load_reward_model(args.reward_model)
        diag = reward_model_diagnostics(
            model, env, args.n_contexts, root.child("diagnostics")
        )
        diag_out = args.diagnostics_out or "diagnostics.csv"
        save_diagnostics(diag, diag_out)
        print(f"wrote reward-model diagnostics to {diag_out}")
    return 0


def _cmd_run(args) -> int:
    if args.config is not None:
        config = experiment.load_config(args.config)
    elif args.paper_scale:
        config = experiment.paper_scale_config(args.out or "results")
    else:
        config = experiment.desk_config(args.out or "results")
    if args.out is not None:
        config = dataclasses.replace(config, output_dir=args.out)
    status = experiment.run_experiment(config, force=args.force, threads=args.threads)
    print(f"sweep finished with status {status}; outputs in {config.output_dir}")
    return status


def _cmd_report(args) -> int:
    paths = experiment.report(args.results)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


_COMMANDS = {
    "gen-env": _cmd_gen_env,
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "depsue": _cmd_depsue,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
