"""Reference schedulers: Random, Greedy-Random, Greedy-Best, simplified PSO and the RL policy.

Every scheduler answers with an action index in ``[0, N]`` where ``N`` (the
environment's ``null_action``) means rejection.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numba import njit

from .agent.network import NetParams, act_greedy
from .domain import Task
from .scoring import estimate_exec_time, qspecs_delta, sspecs_score, vn_preference_score, waiting_time


def random_decide(task: Task, env, rng: np.random.Generator) -> int:
    """Uniform over nodes with room in their queue; security is ignored."""
    open_ = [j for j, vn in enumerate(env.vnodes) if not vn.is_full]
    if not open_:
        return env.null_action
    return open_[int(rng.integers(len(open_)))]


def greedy_random_candidates(task: Task, env) -> list[int]:
    return [
        j for j, vn in enumerate(env.vnodes)
        if not vn.is_full and sspecs_score(task, vn) > 0 and qspecs_delta(task, vn) >= 0
    ]


def greedy_random_decide(task: Task, env, rng: np.random.Generator) -> int:
    cands = greedy_random_candidates(task, env)
    if not cands:
        return env.null_action
    return cands[int(rng.integers(len(cands)))]


def greedy_best_decide(task: Task, env) -> int:
    best, best_s = env.null_action, -math.inf
    for j, vn in enumerate(env.vnodes):
        if vn.is_full or sspecs_score(task, vn) == 0.0:
            continue
        s = env.score(task, j).overall
        if s > best_s:
            best, best_s = j, s
    return best


# ----------------------------------------------------------------------------- PSO


@dataclass(frozen=True)
class PSOConfig:
    particles: int = 30
    iterations: int = 100
    inertia: float = 0.7
    c_personal: float = 1.4
    c_social: float = 1.4
    window: int = 8
    seed: int = 0


@njit(cache=True)
def _batch_fitness(actions, feas, sspecs, vns, exe, trust, wt0, qlen0, cap, qspecs, scale,
                   c1, c2, a1, a2, b, fit, repaired):
    n_particles, n_tasks = actions.shape
    n = wt0.shape[0]
    wt = np.empty(n)
    ql = np.empty(n, dtype=np.int64)
    for p in range(n_particles):
        wt[:] = wt0
        ql[:] = qlen0
        f = 0.0
        for k in range(n_tasks):
            a = actions[p, k]
            if a < n and feas[k, a] and ql[a] < cap[a]:
                d = (qspecs[k] - wt[a] - exe[k, a]) / scale[k]
                if d >= 0:
                    q = 1.0 / (1.0 + math.exp(-d))
                else:
                    q = math.tanh(d)
                f += a1 * trust[a] * (c1 * sspecs[k, a] + c2 * q) + a2 * vns[k, a]
                wt[a] += exe[k, a]
                ql[a] += 1
                repaired[p, k] = a
            else:
                f -= b
                repaired[p, k] = n
        fit[p] = f


@njit(cache=True)
def _pso_search(x0, feas, sspecs, vns, exe, trust, wt0, qlen0, cap, qspecs, scale,
                c1, c2, a1, a2, b, inertia, c_p, c_s, r1, r2, ru):
    n_particles, n_tasks = x0.shape
    n = wt0.shape[0]
    vmax = max(1.0, n / 2.0)
    fit = np.empty(n_particles)
    rep = np.empty((n_particles, n_tasks), dtype=np.int64)
    _batch_fitness(x0, feas, sspecs, vns, exe, trust, wt0, qlen0, cap, qspecs, scale,
                   c1, c2, a1, a2, b, fit, rep)
    x = rep.astype(np.float64)
    v = np.zeros((n_particles, n_tasks))
    pbest = rep.copy()
    pbest_fit = fit.copy()
    g = 0
    for p in range(1, n_particles):
        if pbest_fit[p] > pbest_fit[g]:
            g = p
    gbest = pbest[g].copy()
    gbest_fit = pbest_fit[g]
    acts = np.empty((n_particles, n_tasks), dtype=np.int64)
    for it in range(r1.shape[0]):
        for p in range(n_particles):
            for k in range(n_tasks):
                vel = (inertia * v[p, k]
                       + c_p * r1[it, p, k] * (pbest[p, k] - x[p, k])
                       + c_s * r2[it, p, k] * (gbest[k] - x[p, k]))
                vel = min(max(vel, -vmax), vmax)
                v[p, k] = vel
                pos = min(max(x[p, k] + vel, 0.0), float(n))
                x[p, k] = pos
                base = math.floor(pos)
                a = int(base) + (1 if ru[it, p, k] < pos - base else 0)
                acts[p, k] = min(a, n)
        _batch_fitness(acts, feas, sspecs, vns, exe, trust, wt0, qlen0, cap, qspecs, scale,
                       c1, c2, a1, a2, b, fit, rep)
        for p in range(n_particles):
            if fit[p] > pbest_fit[p]:
                pbest_fit[p] = fit[p]
                pbest[p] = rep[p]
                if fit[p] > gbest_fit:
                    gbest_fit = fit[p]
                    gbest[:] = rep[p]
    return gbest, gbest_fit


def _batch_tables(tasks, env):
    n = env.n_vns
    B = len(tasks)
    feas = np.zeros((B, n), dtype=np.bool_)
    ss = np.zeros((B, n))
    vns = np.zeros((B, n))
    exe = np.zeros((B, n))
    for k, task in enumerate(tasks):
        for j, vn in enumerate(env.vnodes):
            ss[k, j] = sspecs_score(task, vn)
            feas[k, j] = ss[k, j] > 0
            vns[k, j] = vn_preference_score(task, vn)
            exe[k, j] = estimate_exec_time(task, vn)
    trust = np.array([env.trust_of(j) for j in range(n)])
    wt0 = np.array([waiting_time(vn) for vn in env.vnodes])
    qlen0 = np.array([len(vn.queue) for vn in env.vnodes], dtype=np.int64)
    cap = np.array([vn.capacity for vn in env.vnodes], dtype=np.int64)
    qspecs = np.array([t.qspecs for t in tasks])
    ds = env.config.delta_scale
    scale = qspecs.copy() if ds is None else np.full(B, float(ds))
    return feas, ss, vns, exe, trust, wt0, qlen0, cap, qspecs, scale


def pso_decide(task_batch, env, config: PSOConfig = PSOConfig(),
               rng: np.random.Generator | None = None) -> list[int]:
    """Jointly place a batch of tasks with a discrete particle swarm.

    Each particle is a vector of one action per task. Fitness is the summed
    overall satisfaction when the batch is placed in order on the current
    queues, with infeasible picks repaired to rejections. Continuous positions
    are rounded up with probability equal to their fractional part.
    """
    if not task_batch:
        raise ValueError("empty task batch")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    tables = _batch_tables(task_batch, env)
    feas, qlen0, cap = tables[0], tables[6], tables[7]
    n = env.n_vns
    P, B = config.particles, len(task_batch)

    x0 = np.full((P, B), n, dtype=np.int64)
    for k in range(B):
        options = np.append(np.flatnonzero(feas[k] & (qlen0 < cap)), n)
        x0[:, k] = options[rng.integers(len(options), size=P)]
    shape = (config.iterations, P, B)
    r1, r2, ru = rng.random(shape), rng.random(shape), rng.random(shape)
    w = env.config.weights
    best, _ = _pso_search(x0, *tables, w.c1, w.c2, w.a1, w.a2, w.b,
                          config.inertia, config.c_personal, config.c_social, r1, r2, ru)
    return [int(a) for a in best]


# ----------------------------------------------------------------------------- policies


class Scheduler:
    name = "base"

    def decide(self, env) -> int:
        raise NotImplementedError

    def reset(self) -> None:
        """Called before each evaluation episode."""


class RandomScheduler(Scheduler):
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def decide(self, env) -> int:
        return random_decide(env.current_task, env, self.rng)


class GreedyRandomScheduler(RandomScheduler):
    name = "gr"

    def decide(self, env) -> int:
        return greedy_random_decide(env.current_task, env, self.rng)


class GreedyBestScheduler(Scheduler):
    name = "gb"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def decide(self, env) -> int:
        return greedy_best_decide(env.current_task, env)


class PSOScheduler(Scheduler):
    """Places each arrival with a swarm over a short window.

    The window is the current task followed by the most recent earlier
    arrivals, which stand in for demand expected in the near future; only the
    current task's placement is committed.
    """

    name = "pso"

    def __init__(self, seed: int = 0, config: PSOConfig | None = None):
        self.seed = seed
        self.config = config or PSOConfig(seed=seed)
        self.rng = np.random.default_rng(seed)
        self.recent: deque = deque(maxlen=max(self.config.window - 1, 0))

    def reset(self) -> None:
        self.recent.clear()

    def decide(self, env) -> int:
        task = env.current_task
        batch = [task, *reversed(self.recent)]
        self.recent.append(task)
        return pso_decide(batch, env, self.config, self.rng)[0]


class RLScheduler(Scheduler):
    name = "rl"

    def __init__(self, params: NetParams, use_mask: bool = True, seed: int = 0):
        self.params = params
        self.use_mask = use_mask
        self.seed = seed

    def decide(self, env) -> int:
        mask = env.feasible_actions() if self.use_mask else None
        return act_greedy(env.observe(), self.params.actor, mask)


SCHEDULERS = {
    "random": RandomScheduler,
    "gr": GreedyRandomScheduler,
    "gb": GreedyBestScheduler,
    "pso": PSOScheduler,
}


def make_scheduler(name: str, seed: int = 0, params: NetParams | None = None, **kw) -> Scheduler:
    if name == "rl":
        if params is None:
            raise ValueError("the rl scheduler needs trained parameters")
        return RLScheduler(params, seed=seed, **kw)
    try:
        return SCHEDULERS[name](seed=seed, **kw)
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}") from None
