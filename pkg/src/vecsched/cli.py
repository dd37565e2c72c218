"""Command line entry point: ``vecsched {catalog,train,eval,sweep}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from .agent import TrainConfig, load_checkpoint, train, write_training_log
from .baselines import make_scheduler
from .domain import CatalogError, catalog_from_dict, default_paper_catalog, serialize_catalog
from .environment import EnvConfig
from .harness import SweepSpec, evaluate, sweep, write_records
from .scoring import ScoreWeights


class ConfigError(Exception):
    pass


def _load_doc(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return doc


def _catalog(doc: dict, args):
    seed = args.seed if args.seed is not None else 0
    if "workflows" in doc or "vnodes" in doc:
        cat = catalog_from_dict(doc)
        if args.n_vns is not None:
            if args.n_vns > len(cat.vnodes):
                raise ConfigError(f"--n-vns {args.n_vns} exceeds the {len(cat.vnodes)} configured nodes")
            cat = dataclasses.replace(cat, vnodes=cat.vnodes[: args.n_vns])
        return cat
    return default_paper_catalog(seed=seed, n_vns=args.n_vns or 12)


def _env_config(doc: dict, args, catalog) -> EnvConfig:
    env = dict(doc.get("env") or {})
    if "weights" in env:
        env["weights"] = ScoreWeights(**env["weights"])
    if "data_size_range" in env:
        env["data_size_range"] = tuple(env["data_size_range"])
    if args.arrival_rate is not None:
        env["arrival_rate"] = args.arrival_rate
    if args.seed is not None:
        env["seed"] = args.seed
    try:
        return EnvConfig(catalog, **env)
    except TypeError as exc:
        raise ConfigError(f"bad env section: {exc}") from exc


def _train_config(doc: dict, args) -> TrainConfig:
    tc = dict(doc.get("train") or {})
    if args.episodes is not None:
        tc["episodes"] = args.episodes
    if args.workers is not None:
        tc["workers"] = args.workers
    if args.seed is not None:
        tc["seed"] = args.seed
    try:
        return TrainConfig(**tc)
    except TypeError as exc:
        raise ConfigError(f"bad train section: {exc}") from exc


def cmd_catalog(args, doc) -> int:
    sys.stdout.write(serialize_catalog(_catalog(doc, args)))
    return 0


def cmd_train(args, doc) -> int:
    cat = _catalog(doc, args)
    ec = _env_config(doc, args, cat)
    tc = _train_config(doc, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "rl.npz"
    _, log = train(tc, ec, checkpoint_path=ckpt)
    write_training_log(out / "train_log.csv", log)
    (out / "catalog.yaml").write_text(serialize_catalog(cat))
    print(f"trained {len(log)} episodes -> {ckpt}")
    return 0


def cmd_eval(args, doc) -> int:
    cat = _catalog(doc, args)
    ec = _env_config(doc, args, cat)
    params = None
    if args.scheduler == "rl":
        if not args.checkpoint:
            raise ConfigError("--scheduler rl needs --checkpoint")
        params = load_checkpoint(args.checkpoint).params
        env_dims = (len(cat.workflows) + 1 + cat.n_users + 4 * len(cat.vnodes), len(cat.vnodes) + 1)
        if (params.state_dim, params.n_actions) != env_dims:
            raise ConfigError("checkpoint dimensions do not match the catalog")
    seed = args.seed if args.seed is not None else 0
    scheduler = make_scheduler(args.scheduler, seed=seed, params=params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = evaluate(scheduler, ec, args.steps, decision_log=out / "decisions.csv")
    write_records(out, [rec], prefix="metrics")
    print(json.dumps({k: v for k, v in rec.row().items()}, indent=1))
    return 0


def cmd_sweep(args, doc) -> int:
    kw = dict(doc.get("sweep") or {})
    if args.episodes is not None:
        kw["train_episodes"] = args.episodes
    if args.workers is not None:
        kw["train_workers"] = args.workers
    if args.seed is not None:
        kw["base_seed"] = args.seed
    if args.arrival_rate is not None:
        kw["lambdas"] = [args.arrival_rate]
    if args.n_vns is not None:
        kw["n_vns"] = [args.n_vns]
    if args.scheduler is not None:
        kw["schedulers"] = [args.scheduler]
    if args.reps is not None:
        kw["repetitions"] = args.reps
    if args.steps_given:
        kw["eval_steps"] = args.steps
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if doc.get("train"):
        kw["train"] = TrainConfig(**doc["train"])
    try:
        spec = SweepSpec(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad sweep section: {exc}") from exc
    _, aggregates = sweep(spec, args.out)
    for row in aggregates:
        print(f"{row['scheduler']:>6} lambda={row['arrival_rate']:<5} N={row['n_vns']:<3} "
              f"qspecs={float(row['pct_qspecs_satisfied_mean']):6.2f}% "
              f"rejected={float(row['pct_rejected_mean']):6.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML catalog/env/train/sweep config")
    common.add_argument("--lambda", dest="arrival_rate", type=float, metavar="F",
                        help="task arrival rate (tasks/s)")
    common.add_argument("--n-vns", type=int, metavar="K")
    common.add_argument("--scheduler", choices=("rl", "random", "gr", "gb", "pso"))
    common.add_argument("--episodes", type=int, metavar="Z")
    common.add_argument("--workers", type=int, metavar="K")
    common.add_argument("--seed", type=int, metavar="S")
    common.add_argument("--out", default="out", metavar="DIR")
    common.add_argument("--checkpoint", metavar="PATH")
    common.add_argument("--steps", type=int, default=200, help="arrivals per evaluation run")
    common.add_argument("--reps", type=int, help="sweep repetitions")
    common.add_argument("--jobs", type=int, help="parallel sweep processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vecsched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("catalog", parents=[common], help="print the default paper catalog")
    sub.add_parser("train", parents=[common], help="train the A3C scheduler")
    sub.add_parser("eval", parents=[common], help="evaluate one scheduler")
    sub.add_parser("sweep", parents=[common], help="compare schedulers over lambda and N")
    return parser


COMMANDS = {"catalog": cmd_catalog, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)  # exits 2 on unknown flags
    args.steps_given = "--steps" in argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "eval" and args.scheduler is None:
        parser.error("eval needs --scheduler")
    try:
        doc = _load_doc(args.config)
        return COMMANDS[args.command](args, doc)
    except (ConfigError, CatalogError, ValueError) as exc:
        print(f"vecsched: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
