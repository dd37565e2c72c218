"""Asynchronous advantage actor-critic training.

Each worker owns an environment and a local copy of the networks. At the end
of every episode it turns its trajectory into actor and critic gradients and
pushes them into the shared model, which applies them one tensor at a time
under that tensor's lock.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .network import HIDDEN, NetParams, backward, forward, init_params, policy, softmax

CHECKPOINT_VERSION = 1
TRAIN_LOG_FIELDS = ("episode", "mean_reward", "actor_loss", "critic_loss", "entropy", "wall_ms")


@dataclass
class TrainConfig:
    episodes: int = 2000
    workers: int = 4
    gamma: float = 0.9
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    entropy_coef: float = 0.01
    seed: int = 0
    optimizer: str = "rmsprop"  # or "sgd"
    rms_alpha: float = 0.99
    rms_eps: float = 1e-8
    max_grad_norm: float | None = 40.0
    train_mask: bool = False
    normalize_advantage: bool = False  # standardise the actor's advantages within each episode
    hidden: tuple[int, ...] = HIDDEN

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be > 0")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")
        if self.optimizer not in ("rmsprop", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    mask: np.ndarray | None = None


@dataclass
class EpisodeLog:
    episode: int
    mean_reward: float
    actor_loss: float
    critic_loss: float
    entropy: float
    wall_ms: float
    worker: int = 0


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    out = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def losses_and_gradients(params: NetParams, states, actions, returns, masks=None,
                         entropy_coef: float = 0.0, normalize_advantage: bool = False):
    """Loss values and gradients for a batch with precomputed returns.

    The advantage uses the critic's current estimate but is held constant for
    the actor gradient. With ``normalize_advantage`` the actor sees the
    advantages standardised over the batch; the critic always fits raw returns.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=int)
    returns = np.asarray(returns, dtype=float)
    n = len(actions)

    values, c_cache = forward(params.critic, states)
    values = values[:, 0]
    logits, a_cache = forward(params.actor, states)
    bad = ~(np.isfinite(values) & np.isfinite(logits).all(axis=1))
    if bad.any():
        raise FloatingPointError(f"non-finite network output at step {int(np.argmax(bad))}")

    p = softmax(logits, masks)
    logp = np.log(np.where(p > 0, p, 1.0))  # masked entries contribute 0 below
    entropy = -(p * logp).sum(axis=1)
    adv = returns - values
    a_adv = adv
    if normalize_advantage and n > 1:
        a_adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    rows = np.arange(n)

    actor_loss = float(-(logp[rows, actions] * a_adv).sum() - entropy_coef * entropy.sum())
    d_logits = p * a_adv[:, None]
    d_logits[rows, actions] -= a_adv
    d_logits += entropy_coef * p * (logp + entropy[:, None])
    actor_grads = backward(params.actor, a_cache, d_logits)

    critic_loss = float((adv ** 2).sum())
    critic_grads = backward(params.critic, c_cache, (-2.0 * adv)[:, None])

    grads = NetParams(actor_grads, critic_grads)
    stats = {
        "actor_loss": actor_loss,
        "critic_loss": critic_loss,
        "entropy": float(entropy.mean()),
        "mean_advantage": float(adv.mean()),
    }
    for k, g in enumerate(actor_grads + critic_grads):
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in tensor {k}")
    return grads, stats


def compute_gradients(buffer: Sequence[Transition], params: NetParams, gamma: float,
                      entropy_coef: float = 0.0, normalize_advantage: bool = False):
    if not buffer:
        raise ValueError("empty episode buffer")
    states = np.stack([tr.state for tr in buffer])
    actions = [tr.action for tr in buffer]
    rewards = [tr.reward for tr in buffer]
    masks = None
    if any(tr.mask is not None for tr in buffer):
        masks = np.stack([
            tr.mask if tr.mask is not None else np.ones(params.n_actions, dtype=bool)
            for tr in buffer
        ])
    returns = discounted_returns(rewards, gamma)
    grads, stats = losses_and_gradients(params, states, actions, returns, masks, entropy_coef,
                                        normalize_advantage)
    stats["mean_reward"] = float(np.mean(rewards))
    return grads, stats


def _clip(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if max_norm is None:
        return grads
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        return [g * (max_norm / norm) for g in grads]
    return grads


class SharedModel:
    """Global parameters plus optimizer accumulators shared by all workers."""

    def __init__(self, params: NetParams, config: TrainConfig, sq: NetParams | None = None):
        self.params = params
        self.config = config
        self.sq = sq if sq is not None else params.zeros_like()
        n = len(params.actor) + len(params.critic)
        self._locks = [threading.Lock() for _ in range(n)]
        self.updates = 0

    def snapshot(self) -> NetParams:
        # lock-free: a concurrent update can tear across tensors, never within one
        return self.params.copy()

    def apply_update(self, grads: NetParams, lr_actor: float | None = None,
                     lr_critic: float | None = None) -> None:
        cfg = self.config
        lr_actor = cfg.lr_actor if lr_actor is None else lr_actor
        lr_critic = cfg.lr_critic if lr_critic is None else lr_critic
        for mine, theirs in ((self.params.actor, grads.actor), (self.params.critic, grads.critic)):
            if len(mine) != len(theirs) or any(p.shape != g.shape for p, g in zip(mine, theirs)):
                raise ValueError("gradient shapes do not match parameters")

        groups = (
            (self.params.actor, self.sq.actor, _clip(grads.actor, cfg.max_grad_norm), lr_actor, 0),
            (self.params.critic, self.sq.critic, _clip(grads.critic, cfg.max_grad_norm), lr_critic,
             len(self.params.actor)),
        )
        for params, sq, grad, lr, offset in groups:
            for k, (p, s, g) in enumerate(zip(params, sq, grad)):
                with self._locks[offset + k]:
                    if cfg.optimizer == "sgd":
                        p -= lr * g
                    else:
                        s *= cfg.rms_alpha
                        s += (1.0 - cfg.rms_alpha) * g * g
                        p -= lr * g / (np.sqrt(s) + cfg.rms_eps)
        self.updates += 1


def apply_update(shared: SharedModel, grads: NetParams, lr_actor: float, lr_critic: float) -> None:
    shared.apply_update(grads, lr_actor, lr_critic)


class EpisodeCounter:
    """Hands out episode indices 0..total-1 exactly once across threads."""

    def __init__(self, total: int):
        self.total = total
        self._next = 0
        self._lock = threading.Lock()

    def claim(self) -> int | None:
        with self._lock:
            if self._next >= self.total:
                return None
            ep = self._next
            self._next += 1
            return ep

    @property
    def claimed(self) -> int:
        return self._next


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


def run_episode(env, local: NetParams, rng: np.random.Generator, use_mask: bool = False):
    state = env.reset()
    buffer = []
    done = False
    while not done:
        mask = env.feasible_actions() if use_mask else None
        a = _sample(policy(state, local.actor, mask), rng)
        out = env.step(a)
        buffer.append(Transition(state, a, out.reward, mask))
        state, done = out.next_state, out.done
    return buffer


def worker_loop(worker_id: int, env, shared: SharedModel, config: TrainConfig,
                counter: EpisodeCounter, log: list, rng: np.random.Generator,
                on_sync: Callable[[int, NetParams], None] | None = None) -> None:
    try:
        while True:
            ep = counter.claim()
            if ep is None:
                return
            t0 = time.perf_counter()
            local = shared.snapshot()
            if on_sync is not None:
                on_sync(worker_id, local)
            buffer = run_episode(env, local, rng, config.train_mask)
            grads, stats = compute_gradients(buffer, local, config.gamma, config.entropy_coef,
                                             config.normalize_advantage)
            shared.apply_update(grads)
            log.append(EpisodeLog(ep, stats["mean_reward"], stats["actor_loss"],
                                  stats["critic_loss"], stats["entropy"],
                                  (time.perf_counter() - t0) * 1e3, worker_id))
    except Exception as exc:
        raise RuntimeError(f"worker {worker_id} failed: {exc}") from exc


def worker_env_seed(base_seed: int, worker_id: int) -> int:
    return int(np.random.SeedSequence([base_seed, worker_id]).generate_state(1)[0])


def train(config: TrainConfig, env_config, env_factory=None, initial: NetParams | None = None,
          checkpoint_path: str | Path | None = None, log_path: str | Path | None = None,
          on_sync=None):
    """Train actor and critic; returns ``(params, log)`` with the log sorted by episode.

    ``env_factory(env_config)`` builds one environment per worker; it defaults
    to :class:`vecsched.environment.VECEnv`. Worker ``k`` gets its environment
    seeded from ``(env_config.seed, k)``.
    """
    if env_factory is None:
        from ..environment import VECEnv as env_factory

    envs = [
        env_factory(dataclasses.replace(env_config, seed=worker_env_seed(env_config.seed, k)))
        for k in range(config.workers)
    ]
    if initial is None:
        initial = init_params(envs[0].state_dim, envs[0].n_actions, config.seed, config.hidden)
    shared = SharedModel(initial.copy(), config)
    counter = EpisodeCounter(config.episodes)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(config.workers)]
    log: list[EpisodeLog] = []

    if config.workers == 1:
        worker_loop(0, envs[0], shared, config, counter, log, rngs[0], on_sync)
    else:
        errors = []

        def run(k):
            try:
                worker_loop(k, envs[k], shared, config, counter, log, rngs[k], on_sync)
            except Exception as exc:  # re-raised in the caller below
                errors.append(exc)

        threads = [threading.Thread(target=run, args=(k,), daemon=True) for k in range(config.workers)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]

    log.sort(key=lambda e: e.episode)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, shared.params, config, shared.sq,
                        meta={"state_dim": envs[0].state_dim, "n_actions": envs[0].n_actions})
    if log_path is not None:
        write_training_log(log_path, log)
    return shared.params, log


def write_training_log(path, log: Sequence[EpisodeLog], include_wall: bool = True) -> None:
    fields = TRAIN_LOG_FIELDS if include_wall else TRAIN_LOG_FIELDS[:-1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for e in log:
            row = [e.episode, f"{e.mean_reward:.12g}", f"{e.actor_loss:.12g}",
                   f"{e.critic_loss:.12g}", f"{e.entropy:.12g}"]
            if include_wall:
                row.append(f"{e.wall_ms:.3f}")
            w.writerow(row)


def save_checkpoint(path, params: NetParams, config: TrainConfig | None = None,
                    sq: NetParams | None = None, meta: dict | None = None) -> None:
    arrays = {"format_version": np.array(CHECKPOINT_VERSION)}
    for name, group in (("actor", params.actor), ("critic", params.critic)):
        for k, p in enumerate(group):
            arrays[f"{name}_{k}"] = np.ascontiguousarray(p, dtype=np.float64)
    if sq is not None:
        for name, group in (("sq_actor", sq.actor), ("sq_critic", sq.critic)):
            for k, p in enumerate(group):
                arrays[f"{name}_{k}"] = np.ascontiguousarray(p, dtype=np.float64)
    info = {
        "n_actor": len(params.actor),
        "n_critic": len(params.critic),
        "train_config": dataclasses.asdict(config) if config is not None else None,
        "meta": meta or {},
    }
    arrays["info"] = np.array(json.dumps(info))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


@dataclass
class Checkpoint:
    params: NetParams
    sq: NetParams | None
    train_config: dict | None
    meta: dict = field(default_factory=dict)


def load_checkpoint(path) -> Checkpoint:
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        info = json.loads(str(z["info"]))
        actor = [z[f"actor_{k}"].copy() for k in range(info["n_actor"])]
        critic = [z[f"critic_{k}"].copy() for k in range(info["n_critic"])]
        sq = None
        if "sq_actor_0" in z.files:
            sq = NetParams([z[f"sq_actor_{k}"].copy() for k in range(info["n_actor"])],
                           [z[f"sq_critic_{k}"].copy() for k in range(info["n_critic"])])
    return Checkpoint(NetParams(actor, critic), sq, info["train_config"], info.get("meta", {}))
