"""Evaluation runs, parameter sweeps and the metrics reported for them.

Metrics are computed only from what the environment logged (decisions,
completion times, queue occupancy samples), so every scheduler is measured by
the same code.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import NetParams, TrainConfig, save_checkpoint, train
from .baselines import Scheduler, make_scheduler
from .domain import Catalog, default_paper_catalog
from .environment import EnvConfig, QueueLoadLevel, VECEnv

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LEVELS = tuple(level.name for level in QueueLoadLevel)
METRIC_FIELDS = (
    "mean_reward", "pct_qspecs_satisfied", "pct_qspecs_score", "pct_sspecs_above_half",
    "pct_preference_satisfied", "pct_rejected", "util_L", "util_M", "util_H", "util_F",
    "pct_util_ge_half",
)


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


@dataclass
class MetricsRecord:
    scheduler: str
    arrival_rate: float
    n_vns: int
    seed: int
    n_tasks: int
    mean_reward: float
    pct_qspecs_satisfied: float
    pct_qspecs_score: float  # estimate-based: accepted with non-negative latency slack
    pct_sspecs_above_half: float
    pct_preference_satisfied: float
    pct_rejected: float
    pct_util_ge_half: float  # sampled (node, arrival) pairs with queue at least half full
    utilization: dict[str, float]
    utilization_per_vn: list[dict[str, float]]
    qspecs_by_workflow: dict[str, float]
    rejected_by_workflow: dict[str, float]
    rep: int = 0

    def row(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "scheduler": self.scheduler,
            "arrival_rate": self.arrival_rate,
            "n_vns": self.n_vns,
            "rep": self.rep,
            "seed": self.seed,
            "n_tasks": self.n_tasks,
        }
        for name in METRIC_FIELDS:
            if name.startswith("util_"):
                out[name] = _fmt(self.utilization[name[5:]])
            else:
                out[name] = _fmt(getattr(self, name))
        for wf, v in self.qspecs_by_workflow.items():
            out[f"qspecs_{wf}"] = _fmt(v)
        for wf, v in self.rejected_by_workflow.items():
            out[f"rejected_{wf}"] = _fmt(v)
        return out

    def metric(self, name: str) -> float:
        if name.startswith("util_"):
            return self.utilization[name[5:]]
        return getattr(self, name)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def metrics_from_env(env: VECEnv, scheduler: str, seed: int = 0, rep: int = 0) -> MetricsRecord:
    decisions = env.decisions
    n = len(decisions)
    wf_ids = [w.id for w in env.workflows]
    per_wf = {w: [0, 0, 0] for w in wf_ids}  # tasks, qspecs met, rejected
    qsat = qscore = shalf = pref = rejected = 0
    for d in decisions:
        counts = per_wf[d.task.workflow.id]
        counts[0] += 1
        if not d.accepted:
            rejected += 1
            counts[2] += 1
            continue
        done_at = env.completions.get(d.task.task_id)
        if done_at is not None and done_at - d.task.submit_time <= d.task.qspecs:
            qsat += 1
            counts[1] += 1
        qscore += d.breakdown.delta >= 0
        shalf += d.breakdown.sspecs_s > 0.5
        pref += d.breakdown.vn_pref_s > 0

    hist = env.load_histogram()
    per_vn = []
    for j in range(env.n_vns):
        total = hist[j].sum()
        per_vn.append({lvl: _pct(int(hist[j, k]), int(total)) for k, lvl in enumerate(LEVELS)})
    pooled_total = int(hist.sum())
    pooled = {lvl: _pct(int(hist[:, k].sum()), pooled_total) for k, lvl in enumerate(LEVELS)}

    half = 0
    for j, vn in enumerate(env.vnodes):
        for q, count in enumerate(env.occupancy[j]):
            if q / vn.capacity >= 0.5:
                half += int(count)

    return MetricsRecord(
        scheduler=scheduler,
        arrival_rate=env.config.arrival_rate,
        n_vns=env.n_vns,
        seed=seed,
        n_tasks=n,
        mean_reward=float(np.mean([d.reward for d in decisions])) if n else 0.0,
        pct_qspecs_satisfied=_pct(qsat, n),
        pct_qspecs_score=_pct(qscore, n),
        pct_sspecs_above_half=_pct(shalf, n),
        pct_preference_satisfied=_pct(pref, n),
        pct_rejected=_pct(rejected, n),
        pct_util_ge_half=_pct(half, int(env.occupancy.sum())),
        utilization=pooled,
        utilization_per_vn=per_vn,
        qspecs_by_workflow={w: _pct(c[1], c[0]) for w, c in per_wf.items()},
        rejected_by_workflow={w: _pct(c[2], c[0]) for w, c in per_wf.items()},
        rep=rep,
    )


def run_episode(scheduler: Scheduler, env_config: EnvConfig, steps: int) -> VECEnv:
    """Drive ``scheduler`` (no learning) for ``steps`` arrivals, then drain the queues."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    env = VECEnv(dataclasses.replace(env_config, horizon_tasks=steps))
    scheduler.reset()
    env.reset()
    while not env.done:
        env.step(scheduler.decide(env))
    env.drain()
    return env


def evaluate(scheduler: Scheduler, env_config: EnvConfig, steps: int,
             decision_log: str | Path | None = None, rep: int = 0) -> MetricsRecord:
    env = run_episode(scheduler, env_config, steps)
    if decision_log is not None:
        env.write_decision_log(decision_log)
    return metrics_from_env(env, scheduler.name, env_config.seed, rep)


# ----------------------------------------------------------------------------- sweeps


@dataclass
class SweepSpec:
    lambdas: Sequence[float] = (0.02, 0.04, 0.06)
    n_vns: Sequence[int] = (6, 12)
    schedulers: Sequence[str] = ("rl", "random", "gr", "gb", "pso")
    eval_steps: int = 200  # matches the training episode length
    repetitions: int = 10
    base_seed: int = 0
    train_episodes: int = 1000
    train_workers: int = 4
    train_lambda: float = 0.04
    workflows: Sequence[str] | None = None  # subset of the paper catalog
    jobs: int = 1
    train: TrainConfig | None = None
    env: dict = field(default_factory=dict)  # extra EnvConfig fields

    def __post_init__(self):
        if not self.lambdas or not self.n_vns or not self.schedulers:
            raise ValueError("lambdas, n_vns and schedulers must be non-empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.eval_steps < 1:
            raise ValueError("eval_steps must be >= 1")


def sweep_catalog(spec: SweepSpec, n_vns: int) -> Catalog:
    cat = default_paper_catalog(seed=spec.base_seed, n_vns=n_vns)
    if spec.workflows:
        cat = cat.subset(spec.workflows)
    return cat


def train_for(spec: SweepSpec, n_vns: int, checkpoint: str | Path | None = None) -> NetParams:
    tc = spec.train or TrainConfig()
    tc = dataclasses.replace(tc, episodes=spec.train_episodes, workers=spec.train_workers,
                             seed=spec.base_seed)
    ec = EnvConfig(sweep_catalog(spec, n_vns), arrival_rate=spec.train_lambda,
                   seed=spec.base_seed, **spec.env)
    params, _ = train(tc, ec, checkpoint_path=checkpoint)
    return params


def _run_cell(args):
    name, lam, n, rep, sched_seed, env_seed, spec, params = args
    ec = EnvConfig(sweep_catalog(spec, n), arrival_rate=lam, seed=env_seed, **spec.env)
    scheduler = make_scheduler(name, seed=sched_seed, params=params)
    return evaluate(scheduler, ec, spec.eval_steps, rep=rep)


def sweep_cells(spec: SweepSpec, rl_params: dict[int, NetParams] | None = None):
    cells = []
    index = 0
    for name in spec.schedulers:
        for lam in spec.lambdas:
            for n in spec.n_vns:
                for rep in range(spec.repetitions):
                    params = rl_params.get(n) if (rl_params and name == "rl") else None
                    # every scheduler sees the same arrival stream for a given repetition
                    cells.append((name, lam, n, rep, spec.base_seed + index,
                                  spec.base_seed + rep, spec, params))
                    index += 1
    return cells


def aggregate(records: Sequence[MetricsRecord]) -> list[dict]:
    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        groups.setdefault((r.scheduler, r.arrival_rate, r.n_vns), []).append(r)
    rows = []
    for (name, lam, n), recs in groups.items():
        row = {"schema_version": SCHEMA_VERSION, "scheduler": name, "arrival_rate": lam,
               "n_vns": n, "reps": len(recs)}
        for m in METRIC_FIELDS:
            vals = [r.metric(m) for r in recs]
            row[f"{m}_mean"] = _fmt(statistics.fmean(vals))
            row[f"{m}_std"] = _fmt(statistics.stdev(vals) if len(vals) > 1 else 0.0)
        rows.append(row)
    return rows


def _write_csv(path: Path, rows: Sequence[dict]) -> None:
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)


def utilization_rows(records: Sequence[MetricsRecord]) -> list[dict]:
    rows = []
    for r in records:
        for j, hist in enumerate(r.utilization_per_vn):
            rows.append({"schema_version": SCHEMA_VERSION, "scheduler": r.scheduler,
                         "arrival_rate": r.arrival_rate, "n_vns": r.n_vns, "rep": r.rep,
                         "vn": j, **{lvl: _fmt(hist[lvl]) for lvl in LEVELS}})
    return rows


def write_records(out: str | Path, records: Sequence[MetricsRecord], prefix: str = "sweep") -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / f"{prefix}.csv", [r.row() for r in records])
    _write_csv(out / f"{prefix}_summary.csv", aggregate(records))
    _write_csv(out / f"{prefix}_utilization.csv", utilization_rows(records))


def sweep(spec: SweepSpec, out: str | Path | None = None,
          rl_params: dict[int, NetParams] | None = None):
    """Run every (scheduler, lambda, N, repetition) cell; returns ``(records, aggregates)``.

    An ``rl`` entry trains one policy per node count at ``spec.train_lambda``
    unless ``rl_params`` already maps that node count to parameters.
    """
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rl_params = dict(rl_params or {})
    if "rl" in spec.schedulers:
        for n in spec.n_vns:
            if n not in rl_params:
                log.info("training rl policy for N=%d", n)
                ckpt = out / f"rl_n{n}.npz" if out is not None else None
                rl_params[n] = train_for(spec, n, ckpt)

    cells = sweep_cells(spec, rl_params)
    if spec.jobs > 1:
        with ProcessPoolExecutor(spec.jobs) as pool:
            records = list(pool.map(_run_cell, cells))  # map keeps cell order
    else:
        records = [_run_cell(c) for c in cells]
    aggregates = aggregate(records)

    if out is not None:
        write_records(out, records)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "spec": _jsonable(dataclasses.asdict(spec)),
            "cells": [
                {"index": i, "scheduler": c[0], "arrival_rate": c[1], "n_vns": c[2],
                 "rep": c[3], "scheduler_seed": c[4], "env_seed": c[5]}
                for i, c in enumerate(cells)
            ],
            "utilization_note": "pct_util_ge_half = % of (node, arrival) samples with |Q|/capacity >= 0.5",
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return records, aggregates


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def monotone_with_slack(values: Sequence[float], increasing: bool, slack: float = 2.0) -> bool:
    """True if ``values`` trend one way, tolerating a single inversion of at most ``slack``."""
    inversions = []
    for a, b in zip(values, values[1:]):
        step = b - a if increasing else a - b
        if step < 0:
            inversions.append(-step)
    return not inversions or (len(inversions) == 1 and inversions[0] <= slack)
