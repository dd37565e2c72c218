"""Satisfaction scores for a task-to-node assignment.

Every function here is pure. The environment reward, the greedy baselines and
the reporting code all go through these, so there is exactly one definition of
each score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .domain import SecurityLevel, Task, VNode, user_rank

_MAX_LEVEL = int(SecurityLevel.HIGH)


@dataclass(frozen=True)
class ScoreWeights:
    c1: float = 0.5  # security share of task satisfaction
    c2: float = 0.5  # QoS share of task satisfaction
    a1: float = 0.5  # trust-scaled task satisfaction share
    a2: float = 0.5  # node preference share
    b: float = 1.0  # rejection penalty

    def __post_init__(self):
        if min(self.c1, self.c2, self.a1, self.a2, self.b) < 0:
            raise ValueError("score weights must be non-negative")
        if self.c1 + self.c2 <= 0 or self.a1 + self.a2 <= 0:
            raise ValueError("c1+c2 and a1+a2 must be positive")


@dataclass(frozen=True)
class ScoreBreakdown:
    qspecs_s: float = 0.0
    sspecs_s: float = 0.0
    task_s: float = 0.0
    vn_pref_s: float = 0.0
    overall: float = 0.0
    delta: float = 0.0


def estimate_exec_time(task: Task, vn: VNode) -> float:
    return task.workflow.base_exec_time * task.data_size / vn.hardware.speed_factor


def waiting_time(vn: VNode) -> float:
    """Estimated seconds of work already queued on ``vn``."""
    return sum(entry.remaining for entry in vn.queue)


def qspecs_delta(task: Task, vn: VNode) -> float:
    return task.qspecs - waiting_time(vn) - estimate_exec_time(task, vn)


def qspecs_score(delta: float, scale: float = 1.0) -> float:
    """Sigmoid for met deadlines, tanh for missed ones.

    The two branches meet with a jump at zero (0.5 vs 0-); that is intended.
    """
    if not scale > 0:
        raise ValueError("scale must be > 0")
    d = delta / scale
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    return math.tanh(d)


def security_distance(required: int, offered: int) -> float:
    if offered < required:
        return 0.0
    return math.sqrt((_MAX_LEVEL - (offered - required)) / _MAX_LEVEL)


def sspecs_score(task: Task, vn: VNode) -> float:
    return _sspecs_levels(task.sspecs.levels, vn.rspecs.levels)


@lru_cache(maxsize=None)  # at most 3^5 * 3^5 distinct pairs
def _sspecs_levels(required: tuple, offered: tuple) -> float:
    return min(security_distance(req, off) for req, off in zip(required, offered))


def task_satisfaction(task: Task, vn: VNode, weights: ScoreWeights, scale: float | None = None) -> float:
    s = sspecs_score(task, vn)
    if s == 0.0:
        return 0.0
    q = qspecs_score(qspecs_delta(task, vn), task.qspecs if scale is None else scale)
    return weights.c1 * s + weights.c2 * q


def vn_preference_score(task: Task, vn: VNode) -> float:
    rank = user_rank(vn.preference, task.user_id)
    if rank is None:
        return 0.0
    return max(0.0, 1.0 - math.log(rank) / 6.0)


def overall_satisfaction(task: Task, vn: VNode | None, weights: ScoreWeights,
                         trust: float = 1.0, scale: float | None = None) -> ScoreBreakdown:
    """Full score breakdown for placing ``task`` on ``vn`` (``None`` = reject).

    ``scale`` divides the latency slack before the QoS nonlinearity; it
    defaults to the task's own QSpecs latency. Pass ``scale=1`` for raw
    seconds.
    """
    if vn is None:
        return ScoreBreakdown(overall=-weights.b)
    if not 0.0 <= trust <= 1.0:
        raise ValueError("trust must lie in [0, 1]")
    delta = qspecs_delta(task, vn)
    q = qspecs_score(delta, task.qspecs if scale is None else scale)
    s = sspecs_score(task, vn)
    ts = 0.0 if s == 0.0 else weights.c1 * s + weights.c2 * q
    vns = vn_preference_score(task, vn)
    overall = weights.a1 * trust * ts + weights.a2 * vns
    return ScoreBreakdown(q, s, ts, vns, overall, delta)
