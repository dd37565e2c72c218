import numpy as np
import pytest
from scipy.stats import chisquare

from vecsched.baselines import (
    PSOConfig,
    greedy_best_decide,
    greedy_random_decide,
    make_scheduler,
    pso_decide,
    random_decide,
)
from vecsched.domain import Catalog, QueueEntry, default_paper_catalog
from vecsched.environment import EnvConfig, VECEnv
from vecsched.scoring import overall_satisfaction, sspecs_score

from .conftest import make_task, make_vnode, make_workflow

LEVELS = "LMH"


def env_of(vnodes, workflows=None, **kw):
    cat = Catalog(workflows or [make_workflow()], vnodes, n_users=10, rho=5, gamma=5)
    kw.setdefault("trust_mode", "static")
    env = VECEnv(EnvConfig(cat, **kw))
    env.reset()
    return env


def fill(vn, n, work=50.0):
    task = make_task()
    for _ in range(n):
        vn.queue.append(QueueEntry(task, work, work, 0.0, work, work))


def random_instance(rng, n=6):
    vnodes = [
        make_vnode("".join(rng.choice(list(LEVELS), 5)), hw=str(rng.choice(["config1", "config2"])),
                   preference=tuple(int(u) for u in rng.choice(10, 5, replace=False)),
                   trust=float(rng.uniform(0.5, 1.0)), device_id=j + 1)
        for j in range(n)
    ]
    wf = make_workflow("".join(rng.choice(list(LEVELS), 5)), qspecs=float(rng.uniform(100, 800)),
                       base=float(rng.uniform(50, 400)))
    env = env_of(vnodes, [wf])
    for vn in env.vnodes:
        fill(vn, int(rng.integers(0, 6)), float(rng.uniform(10, 200)))
    task = make_task(wf, data=float(rng.uniform(0.1, 1.0)), user=int(rng.integers(10)))
    return env, task


def test_random_uniform_over_open_nodes():
    env = env_of([make_vnode(device_id=j) for j in range(12)])
    rng = np.random.default_rng(0)
    picks = [random_decide(env.current_task, env, rng) for _ in range(12_000)]
    counts = np.bincount(picks, minlength=12)
    assert chisquare(counts).pvalue > 0.001


def test_random_ignores_security_but_not_full():
    env = env_of([make_vnode("LLLLL", device_id=1), make_vnode(device_id=2)])
    fill(env.vnodes[1], 5)
    rng = np.random.default_rng(0)
    assert {random_decide(env.current_task, env, rng) for _ in range(50)} == {0}
    fill(env.vnodes[0], 5)
    assert random_decide(env.current_task, env, rng) == env.null_action


def test_greedy_random_frequencies():
    good = {2, 5, 9}
    vnodes = [make_vnode("HHHHH" if j in good else "LLLLL", device_id=j) for j in range(12)]
    env = env_of(vnodes, [make_workflow("HHHLL", qspecs=1e6)])
    rng = np.random.default_rng(1)
    picks = np.array([greedy_random_decide(env.current_task, env, rng) for _ in range(10_000)])
    assert set(picks) == good
    for j in good:
        assert abs((picks == j).mean() - 1 / 3) <= 0.02


def test_greedy_random_requires_deadline():
    env = env_of([make_vnode()], [make_workflow(qspecs=10.0, base=1000.0)])
    assert greedy_random_decide(env.current_task, env, np.random.default_rng(0)) == env.null_action


def test_greedy_best_matches_exhaustive_oracle():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        env, task = random_instance(rng)
        scores = [
            overall_satisfaction(task, vn, env.config.weights, trust=vn.trust).overall
            if not vn.is_full and sspecs_score(task, vn) > 0 else -np.inf
            for vn in env.vnodes
        ]
        best = int(np.argmax(scores)) if max(scores) > -np.inf else env.null_action
        assert greedy_best_decide(task, env) == best


def test_greedy_best_tie_lowest_index():
    env = env_of([make_vnode(device_id=j) for j in range(3)])
    assert greedy_best_decide(env.current_task, env) == 0


def test_pso_single_task_agrees_with_greedy_best():
    rng = np.random.default_rng(3)
    agree = 0
    for i in range(200):
        env, task = random_instance(rng)
        agree += pso_decide([task], env, PSOConfig(seed=i))[0] == greedy_best_decide(task, env)
    assert agree >= 190


def test_pso_zero_iterations_is_valid():
    rng = np.random.default_rng(4)
    for i in range(50):
        env, task = random_instance(rng)
        a = pso_decide([task], env, PSOConfig(iterations=0, seed=i))[0]
        mask = env.feasible_actions(task)
        assert mask[a]


def test_pso_all_infeasible_rejects():
    env = env_of([make_vnode("LLLLL", device_id=j) for j in range(4)], [make_workflow("HHHHH")])
    tasks = [make_task(env.workflows[0], task_id=k) for k in range(5)]
    assert pso_decide(tasks, env) == [env.null_action] * 5


def test_pso_batch_respects_capacity():
    # two open slots in total, five tasks: at most two may be placed
    env = env_of([make_vnode(device_id=j, capacity=5) for j in range(2)],
                 [make_workflow(qspecs=1e6)])
    fill(env.vnodes[0], 4)
    fill(env.vnodes[1], 4)
    tasks = [make_task(env.workflows[0], task_id=k) for k in range(5)]
    picks = pso_decide(tasks, env, PSOConfig(seed=0))
    assert sum(a != env.null_action for a in picks) == 2
    assert picks.count(0) <= 1 and picks.count(1) <= 1


def test_pso_empty_batch():
    env = env_of([make_vnode()])
    with pytest.raises(ValueError):
        pso_decide([], env)


@pytest.mark.parametrize("name", ["random", "gr", "gb", "pso"])
def test_never_picks_full_queue(name):
    cat = default_paper_catalog(seed=0, n_vns=6)
    env = VECEnv(EnvConfig(cat, arrival_rate=0.2, horizon_tasks=400, seed=1))
    env.reset()
    sched = make_scheduler(name, seed=0)
    while not env.done:
        full = {j for j, vn in enumerate(env.vnodes) if vn.is_full}
        a = sched.decide(env)
        assert a not in full
        env.step(a)
    assert any(vn.is_full for vn in env.vnodes) or env.load_histogram()[:, -1].sum() > 0


def test_greedy_best_dominates_random_and_gr():
    cat = default_paper_catalog(seed=0)
    means = {}
    for name in ("random", "gr", "gb"):
        env = VECEnv(EnvConfig(cat, arrival_rate=0.04, horizon_tasks=500, seed=7))
        env.reset()
        sched = make_scheduler(name, seed=0)
        total = 0.0
        while not env.done:
            total += env.step(sched.decide(env)).reward
        means[name] = total / 500
    assert means["gb"] >= means["random"] and means["gb"] >= means["gr"]


def test_make_scheduler_errors():
    with pytest.raises(ValueError):
        make_scheduler("rl")
    with pytest.raises(ValueError):
        make_scheduler("annealing")


def test_greedy_best_dominates_on_empty_queues():
    rng = np.random.default_rng(5)
    others = {"random": random_decide, "gr": greedy_random_decide}
    for i in range(1000):
        env, task = random_instance(rng, n=int(rng.integers(1, 13)))
        for vn in env.vnodes:
            vn.queue.clear()

        def achieved(a):
            feasible = a != env.null_action and env.feasible_actions(task)[a]
            return env.score(task, a if feasible else None).overall

        gb = achieved(greedy_best_decide(task, env))
        for decide in others.values():
            assert gb >= achieved(decide(task, env, np.random.default_rng(i)))
        assert gb >= achieved(pso_decide([task], env, PSOConfig(particles=5, iterations=3, seed=i))[0])


def test_greedy_random_audit():
    env = VECEnv(EnvConfig(default_paper_catalog(seed=0), arrival_rate=0.08,
                           horizon_tasks=100_000, seed=2))
    env.reset()
    sched = make_scheduler("gr", seed=0)
    while not env.done:
        env.step(sched.decide(env))
    accepted = [d for d in env.decisions if d.accepted]
    assert len(accepted) > 10_000
    assert all(d.breakdown.sspecs_s > 0 and d.breakdown.delta >= 0 for d in accepted)
    assert not any(d.forced_null for d in env.decisions)
