"""Command-line front end.

Subcommands cover the full workflow: simulate one episode, evaluate a
policy, collect a dataset, mix datasets, train online or offline, and
render learning-curve reports.  Every run writes its resolved
configuration next to its outputs so results stay audit-able.

Config values come from an INI file (``--config``) and can be overridden
with dotted flags, e.g. ``--env.n_ues 16 --offline.algo cql``.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import dataset as ds_mod
from . import harness, offline, policies, sac
from .config import (ConfigError, ExperimentConfig, apply_overrides, load_config,
                     save_config)
from .env import SchedulingEnv
from .rng import named_rng


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrmlab",
        description="Multi-AP user scheduling lab: simulation, baselines, "
                    "online and offline RL.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", required=True, help="output directory for this run")
        p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")

    p = sub.add_parser("simulate", help="roll one episode and write its trace")
    common(p)
    p.add_argument("--policy", required=True,
                   help="random | greedy | tdm | itlinq | ckpt:PATH")
    p.add_argument("--episode-seed", type=int, default=None,
                   help="environment seed (default: first validation seed)")

    p = sub.add_parser("evaluate", help="score a policy on the validation envs")
    common(p)
    p.add_argument("--policy", required=True,
                   help="random | greedy | tdm | itlinq | ckpt:PATH")
    p.add_argument("--seeds", type=int, default=None,
                   help="number of validation environments "
                        "(default: metric.n_validation_envs)")

    p = sub.add_parser("collect", help="record a behavior-policy dataset")
    common(p)
    p.add_argument("--policy", required=True,
                   help="random | greedy | tdm | itlinq | ckpt:PATH")
    p.add_argument("--transitions", type=int, default=None,
                   help="dataset size (default: dataset.n_transitions)")
    p.add_argument("--name", default=None,
                   help="dataset name (default: the policy name)")
    p.add_argument("--greedy-ckpt", action="store_true",
                   help="let checkpoint policies act greedily instead of "
                        "sampling their softmax (sampling gives richer "
                        "coverage for offline training)")

    p = sub.add_parser("mix", help="combine datasets by proportion")
    common(p)
    p.add_argument("--mix", required=True, metavar="SPEC",
                   help='e.g. "a.orld:0.5,b.orld:0.2,c.orld:0.2,d.orld:0.1"')
    p.add_argument("--total", type=int, default=None,
                   help="total transitions (default: dataset.n_transitions)")
    p.add_argument("--name", default="mixed", help="name of the mixed dataset")

    p = sub.add_parser("train-online", help="train soft actor-critic online")
    common(p)

    p = sub.add_parser("train-offline", help="train BCQ, CQL or IQL on a dataset")
    common(p)
    p.add_argument("--algo", choices=("bcq", "cql", "iql"), default=None,
                   help="algorithm (default: offline.algo)")
    p.add_argument("--dataset", help="path to a dataset file")
    p.add_argument("--mix", metavar="SPEC",
                   help="mix datasets on the fly instead of --dataset")

    p = sub.add_parser("report", help="plot learning curves against baselines")
    common(p)
    p.add_argument("--runs", required=True,
                   help="comma-separated NAME=DIR pairs of training runs")
    p.add_argument("--baseline", action="append", default=[], metavar="NAME=VALUE",
                   help="dashed horizontal reference line (repeatable)")
    p.add_argument("--title", default="", help="plot title")
    return parser


def _collect_overrides(parser, extras) -> dict:
    """Interpret leftover ``--section.key value`` flags as config overrides."""
    overrides = {}
    i = 0
    while i < len(extras):
        tok = extras[i]
        if not (tok.startswith("--") and "." in tok):
            parser.error(f"unrecognized argument: {tok}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extras):
                parser.error(f"override {tok} needs a value")
            value = extras[i + 1]
            i += 1
        overrides[key] = value
        i += 1
    return overrides


def _load_cfg(args, parser, overrides) -> ExperimentConfig:
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        apply_overrides(cfg, overrides)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    return cfg


def _prepare_run_dir(args, cfg) -> str:
    os.makedirs(args.out, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "config.ini"))
    return args.out


def _policy(spec: str, parser, greedy_ckpt: bool = True):
    try:
        return policies.make_policy(spec, greedy_ckpt=greedy_ckpt)
    except (ConfigError, OSError, ValueError) as exc:
        parser.error(str(exc))


def _load_mix(spec: str, total: int, seed: int, name: str, parser) -> ds_mod.Dataset:
    try:
        pairs = ds_mod.parse_mix_spec(spec)
        sources = [ds_mod.load_dataset(path) for path, _ in pairs]
        props = [p for _, p in pairs]
        return ds_mod.mix(sources, props, total, named_rng(seed, "mix"), name=name)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))


def run_cli(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    overrides = _collect_overrides(parser, extras)
    cfg = _load_cfg(args, parser, overrides)
    out = _prepare_run_dir(args, cfg)

    if args.command == "simulate":
        policy = _policy(args.policy, parser)
        ep_seed = args.episode_seed
        if ep_seed is None:
            ep_seed = cfg.metric.validation_seed_start
        env = SchedulingEnv(cfg.env, cfg.radio, ep_seed)
        trace = harness.run_episode(env, policy, named_rng(ep_seed, "eval", policy.name))
        path = os.path.join(out, "trace.csv")
        harness.write_trace_csv(trace, path)
        per_ue = trace.per_ue_throughput
        p5 = harness.five_percentile_rate(per_ue, cfg.metric.quantile_level)
        print(f"episode seed {ep_seed}: sum_rate={per_ue.sum():.4f} "
              f"p5={p5:.5f} trace -> {path}")

    elif args.command == "evaluate":
        policy = _policy(args.policy, parser)
        seeds = None
        if args.seeds is not None:
            start = cfg.metric.validation_seed_start
            seeds = list(range(start, start + args.seeds))
        report = harness.evaluate_policy(policy, cfg.env, cfg.radio, cfg.metric,
                                         seeds=seeds)
        path = os.path.join(out, "metrics.csv")
        harness.write_metrics_csv(report, path)
        print(report.summary())
        print(f"metrics -> {path}")

    elif args.command == "collect":
        policy = _policy(args.policy, parser, greedy_ckpt=args.greedy_ckpt)
        n = args.transitions or cfg.dataset.n_transitions
        ds = ds_mod.collect(policy, cfg.env, cfg.radio, n, seed=args.seed,
                            dataset_cfg=cfg.dataset)
        if args.name:
            ds.bp_name = args.name
        path = os.path.join(out, f"{ds.bp_name}.orld")
        ds_mod.save_dataset(ds, path)
        print(f"collected {ds.count} transitions from {policy.name} -> {path}")

    elif args.command == "mix":
        total = args.total or cfg.dataset.n_transitions
        mixed = _load_mix(args.mix, total, args.seed, args.name, parser)
        path = os.path.join(out, f"{mixed.bp_name}.orld")
        ds_mod.save_dataset(mixed, path)
        parts = ", ".join(f"{s['name']}:{s['count']}" for s in mixed.sources)
        print(f"mixed {mixed.count} transitions ({parts}) -> {path}")

    elif args.command == "train-online":
        _, curve = sac.train_online(cfg, out, args.seed, log=print)
        if curve:
            print(f"final R={curve[-1]['r_score_mean']:.4f}; artifacts -> {out}")

    elif args.command == "train-offline":
        if bool(args.dataset) == bool(args.mix):
            parser.error("exactly one of --dataset or --mix is required")
        if args.dataset:
            try:
                ds = ds_mod.load_dataset(args.dataset)
            except (OSError, ValueError) as exc:
                parser.error(str(exc))
        else:
            ds = _load_mix(args.mix, cfg.dataset.n_transitions, args.seed,
                           "mixed", parser)
        try:
            _, curve = offline.train_offline(ds, cfg, out, args.seed,
                                             algo=args.algo, log=print)
        except ConfigError as exc:
            parser.error(str(exc))
        if curve:
            print(f"final R={curve[-1]['r_score_mean']:.4f}; artifacts -> {out}")

    elif args.command == "report":
        series = {}
        for chunk in args.runs.split(","):
            name, sep, run_dir = chunk.partition("=")
            if not sep:
                parser.error(f"bad --runs entry {chunk!r}; expected NAME=DIR")
            curve_path = os.path.join(run_dir, "learning_curve.csv")
            try:
                rows = harness.read_learning_curve_csv(curve_path)
            except OSError as exc:
                parser.error(str(exc))
            series[name] = ([r["epoch"] for r in rows], [r["r_score_mean"] for r in rows])
        baselines = {}
        for spec in args.baseline:
            name, sep, value = spec.partition("=")
            if not sep:
                parser.error(f"bad --baseline entry {spec!r}; expected NAME=VALUE")
            try:
                baselines[name] = float(value)
            except ValueError:
                parser.error(f"bad baseline value {value!r}")
        path = os.path.join(out, "curves.svg")
        try:
            harness.render_curves_svg(series, path, baselines=baselines,
                                      title=args.title)
        except ValueError as exc:
            parser.error(str(exc))
        print(f"report -> {path}")

    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
