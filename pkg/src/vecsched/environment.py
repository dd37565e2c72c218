"""Event-driven volunteer edge-cloud simulator exposed as an MDP.

One decision epoch per task arrival. Between arrivals the simulator retires
completed jobs in timestamp order. Infeasible placements (full queue or a
security shortfall) are turned into a rejection carrying the ``-b`` penalty,
so queue capacity and hard security can never be violated whatever the policy.
"""

from __future__ import annotations

import csv
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import Catalog, QueueEntry, Task, VNode
from .scoring import (
    ScoreBreakdown,
    ScoreWeights,
    estimate_exec_time,
    overall_satisfaction,
    sspecs_score,
)

DECISION_LOG_FIELDS = (
    "t", "task_id", "workflow", "user", "action", "forced_null", "reward",
    "qspecs_s", "sspecs_s", "vns", "trust", "queue_lens",
)


class QueueLoadLevel(IntEnum):
    L = 0
    M = 1
    H = 2
    F = 3


def load_level(n_queued: int, capacity: int) -> QueueLoadLevel:
    if capacity <= 0:
        raise ValueError("capacity must be > 0")
    u = n_queued / capacity
    if u <= 0.3:
        return QueueLoadLevel.L
    if u <= 0.6:
        return QueueLoadLevel.M
    if u <= 0.9:
        return QueueLoadLevel.H
    return QueueLoadLevel.F


def queue_load_level(vn: VNode) -> QueueLoadLevel:
    return load_level(len(vn.queue), vn.capacity)


class EventKind(Enum):
    TASK_ARRIVAL = 0
    TASK_COMPLETION = 1


@dataclass(order=True)
class SimEvent:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: object = field(compare=False)


class TrustMode(str, Enum):
    STATIC = "static"
    MISMATCH = "mismatch"


@dataclass
class EnvConfig:
    catalog: Catalog
    arrival_rate: float = 0.04  # tasks per second
    horizon_tasks: int = 200
    seed: int = 0
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    trust_mode: TrustMode = TrustMode.MISMATCH
    exec_noise_sigma: float = 0.1
    trust_window: int = 20
    data_size_range: tuple[float, float] = (0.1, 1.0)
    max_data_size: float = 1.0
    delta_scale: float | None = None  # None -> each task's own QSpecs latency
    workflow_weights: Sequence[float] | None = None  # None -> uniform mix

    def __post_init__(self):
        self.trust_mode = TrustMode(self.trust_mode)
        if not self.arrival_rate > 0:
            raise ValueError("arrival_rate must be > 0")
        if self.horizon_tasks < 1:
            raise ValueError("horizon_tasks must be >= 1")
        if self.exec_noise_sigma < 0:
            raise ValueError("exec_noise_sigma must be >= 0")
        lo, hi = self.data_size_range
        if not 0 <= lo <= hi:
            raise ValueError("bad data_size_range")
        if not self.max_data_size > 0:
            raise ValueError("max_data_size must be > 0")


@dataclass
class StepOutcome:
    reward: float
    next_state: np.ndarray | None
    done: bool
    accepted: bool
    forced_null: bool
    breakdown: ScoreBreakdown


@dataclass
class DecisionRecord:
    t: float
    task: Task
    action: int  # n_vns means rejection
    forced_null: bool
    reward: float
    breakdown: ScoreBreakdown
    trust: float
    queue_lens: tuple[int, ...]

    @property
    def accepted(self) -> bool:
        return self.action < len(self.queue_lens) and not self.forced_null


class VECEnv:
    """Single-threaded simulator instance; owns private copies of the nodes."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.catalog = config.catalog
        self.workflows = list(self.catalog.workflows)
        self.vnodes: list[VNode] = [vn.clone() for vn in self.catalog.vnodes]
        self.n_vns = len(self.vnodes)
        self.n_actions = self.n_vns + 1
        self.null_action = self.n_vns
        self.n_users = self.catalog.n_users
        self.state_dim = len(self.workflows) + 1 + self.n_users + 4 * self.n_vns
        self._wf_index = {w.id: i for i, w in enumerate(self.workflows)}
        self._seed_seq = np.random.SeedSequence(config.seed)
        self._episode = 0
        self._active = False

    # ------------------------------------------------------------------ episode

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Empty all queues and regenerate the arrival stream.

        Without ``seed`` successive resets walk a deterministic sequence of
        streams derived from ``config.seed``; with it, the stream is the one a
        fresh environment seeded with ``seed`` would produce first.
        """
        if seed is not None:
            self._seed_seq = np.random.SeedSequence(seed)
            self._episode = 0
        arrival_ss, exec_ss = np.random.SeedSequence(
            self._seed_seq.entropy, spawn_key=(self._episode,)
        ).spawn(2)
        self._episode += 1
        self._exec_rng = np.random.default_rng(exec_ss)

        cfg = self.config
        for vn in self.vnodes:
            vn.queue = deque()
        self._initial_trust = [vn.trust for vn in self.catalog.vnodes]
        self._mismatch = [deque(maxlen=cfg.trust_window) for _ in self.vnodes]
        self._events: list[SimEvent] = []
        self._seq = itertools.count()
        self.now = 0.0
        self._submitted = 0
        self.decisions: list[DecisionRecord] = []
        self.completions: dict[int, float] = {}
        # occupancy[j, n]: arrivals at which node j held n jobs
        self.occupancy = np.zeros((self.n_vns, max(vn.capacity for vn in self.vnodes) + 1),
                                  dtype=np.int64)

        self.tasks = self._generate_tasks(np.random.default_rng(arrival_ss))
        self._next_arrival = 0  # arrivals are already time-sorted; only completions go on the heap
        self._active = True
        self._task = self._advance_to_next_arrival()
        return self.observe(self._task)

    def _generate_tasks(self, rng: np.random.Generator) -> list[Task]:
        cfg = self.config
        n = cfg.horizon_tasks
        gaps = rng.exponential(1.0 / cfg.arrival_rate, size=n)
        times = np.cumsum(gaps)
        p = None
        if cfg.workflow_weights is not None:
            p = np.asarray(cfg.workflow_weights, dtype=float)
            p = p / p.sum()
        wf = rng.choice(len(self.workflows), size=n, p=p)
        lo, hi = cfg.data_size_range
        data = rng.uniform(lo, hi, size=n)
        users = rng.integers(0, self.n_users, size=n)
        return [
            Task.of(i, self.workflows[wf[i]], data[i], times[i], users[i]) for i in range(n)
        ]

    def _push(self, time: float, kind: EventKind, payload) -> None:
        heapq.heappush(self._events, SimEvent(time, next(self._seq), kind, payload))

    def _advance_to_next_arrival(self) -> Task | None:
        """Retire completions up to the next arrival (arrivals win ties), then return it."""
        if self._next_arrival >= len(self.tasks):
            return None
        task = self.tasks[self._next_arrival]
        self._next_arrival += 1
        while self._events and self._events[0].time < task.submit_time:
            ev = heapq.heappop(self._events)
            self.now = ev.time
            self._complete(ev.payload)
        self.now = task.submit_time
        self._sync_remaining()
        for j, vn in enumerate(self.vnodes):
            self.occupancy[j, len(vn.queue)] += 1
        return task

    def _sync_remaining(self) -> None:
        for vn in self.vnodes:
            if vn.queue:
                head = vn.queue[0]
                head.remaining = max(head.est_exec - (self.now - head.start_time), 0.0)

    def _complete(self, j: int) -> None:
        vn = self.vnodes[j]
        entry = vn.queue.popleft()
        self.completions[entry.task.task_id] = self.now
        if entry.est_exec > 0:
            self._mismatch[j].append(abs(entry.actual_exec - entry.est_exec) / entry.est_exec)
        else:
            self._mismatch[j].append(0.0)

    def drain(self) -> None:
        """Run every outstanding completion (after the last decision)."""
        while self._events:
            ev = heapq.heappop(self._events)
            self.now = ev.time
            self._complete(ev.payload)

    # ------------------------------------------------------------------ views

    @property
    def current_task(self) -> Task | None:
        return self._task if self._active else None

    @property
    def done(self) -> bool:
        return not self._active

    def load_histogram(self) -> np.ndarray:
        """Per-node counts of sampled load levels, shape ``(N, 4)``."""
        hist = np.zeros((self.n_vns, 4), dtype=np.int64)
        for j, vn in enumerate(self.vnodes):
            for n, count in enumerate(self.occupancy[j]):
                if count:
                    hist[j, load_level(n, vn.capacity)] += count
        return hist

    def trust_of(self, j: int, t: float | None = None) -> float:
        """Trust of node ``j`` at the current clock (``t`` is informational)."""
        if self.config.trust_mode is TrustMode.STATIC or not self._mismatch[j]:
            return self._initial_trust[j]
        mean = sum(self._mismatch[j]) / len(self._mismatch[j])
        return min(1.0, max(0.0, 1.0 - mean))

    def observe(self, task: Task | None = None) -> np.ndarray:
        task = self._task if task is None else task
        n_wf = len(self.workflows)
        s = np.zeros(self.state_dim)
        s[self._wf_index[task.workflow.id]] = 1.0
        s[n_wf] = min(task.data_size / self.config.max_data_size, 1.0)
        s[n_wf + 1 + task.user_id] = 1.0
        base = n_wf + 1 + self.n_users
        for j, vn in enumerate(self.vnodes):
            s[base + 4 * j + queue_load_level(vn)] = 1.0
        return s

    def feasible_actions(self, task: Task | None = None) -> np.ndarray:
        task = self._task if task is None else task
        mask = np.ones(self.n_actions, dtype=bool)
        for j, vn in enumerate(self.vnodes):
            mask[j] = not vn.is_full and sspecs_score(task, vn) > 0
        return mask

    def score(self, task: Task, j: int | None) -> ScoreBreakdown:
        """Score placing ``task`` on node ``j`` now, ignoring feasibility."""
        if j is None or j == self.null_action:
            return overall_satisfaction(task, None, self.config.weights)
        return overall_satisfaction(task, self.vnodes[j], self.config.weights,
                                    self.trust_of(j), self.config.delta_scale)

    # ------------------------------------------------------------------ step

    def step(self, action: int) -> StepOutcome:
        if not self._active:
            raise RuntimeError("step() called on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action <= self.n_vns:
            raise ValueError(f"action {action} out of range [0, {self.n_vns}]")
        task = self._task
        forced = False
        trust = 0.0
        if action == self.null_action:
            bd = overall_satisfaction(task, None, self.config.weights)
        else:
            vn = self.vnodes[action]
            if vn.is_full or sspecs_score(task, vn) == 0.0:
                forced = True
                bd = overall_satisfaction(task, None, self.config.weights)
            else:
                trust = self.trust_of(action)
                bd = overall_satisfaction(task, vn, self.config.weights, trust,
                                          self.config.delta_scale)
                self._enqueue(task, action)
        accepted = action != self.null_action and not forced
        self.decisions.append(DecisionRecord(
            self.now, task, action, forced, bd.overall, bd, trust,
            tuple(len(vn.queue) for vn in self.vnodes),
        ))
        self._submitted += 1
        if self._submitted >= self.config.horizon_tasks:
            self._active = False
            return StepOutcome(bd.overall, None, True, accepted, forced, bd)
        self._task = self._advance_to_next_arrival()
        return StepOutcome(bd.overall, self.observe(self._task), False, accepted, forced, bd)

    def _enqueue(self, task: Task, j: int) -> None:
        vn = self.vnodes[j]
        est = estimate_exec_time(task, vn)
        sigma = self.config.exec_noise_sigma
        actual = est * float(self._exec_rng.lognormal(0.0, sigma)) if sigma > 0 else est
        start = vn.queue[-1].completion_time if vn.queue else self.now
        done_at = start + actual
        vn.queue.append(QueueEntry(task, est, actual, start, done_at, est))
        self._push(done_at, EventKind.TASK_COMPLETION, j)

    # ------------------------------------------------------------------ logs

    def decision_rows(self):
        for d in self.decisions:
            yield {
                "t": f"{d.t:.6f}",
                "task_id": d.task.task_id,
                "workflow": d.task.workflow.id,
                "user": d.task.user_id,
                "action": "NULL" if d.action == self.null_action else d.action,
                "forced_null": int(d.forced_null),
                "reward": f"{d.reward:.9f}",
                "qspecs_s": f"{d.breakdown.qspecs_s:.9f}",
                "sspecs_s": f"{d.breakdown.sspecs_s:.9f}",
                "vns": f"{d.breakdown.vn_pref_s:.9f}",
                "trust": f"{d.trust:.9f}",
                "queue_lens": ";".join(str(n) for n in d.queue_lens),
            }

    def write_decision_log(self, path: str | Path, append: bool = False) -> None:
        path = Path(path)
        new = not (append and path.exists())
        with path.open("a" if append else "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=DECISION_LOG_FIELDS)
            if new:
                writer.writeheader()
            writer.writerows(self.decision_rows())
