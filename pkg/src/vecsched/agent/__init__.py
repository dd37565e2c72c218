"""A3C scheduler: actor/critic networks, gradients and asynchronous training."""

from .a3c import (
    Checkpoint,
    EpisodeCounter,
    EpisodeLog,
    SharedModel,
    TrainConfig,
    Transition,
    apply_update,
    compute_gradients,
    discounted_returns,
    load_checkpoint,
    losses_and_gradients,
    run_episode,
    save_checkpoint,
    train,
    worker_loop,
    write_training_log,
)
from .network import NetParams, act_greedy, init_params, policy, value

__all__ = [
    "Checkpoint", "EpisodeCounter", "EpisodeLog", "NetParams", "SharedModel", "TrainConfig",
    "Transition", "act_greedy", "apply_update", "compute_gradients", "discounted_returns",
    "init_params", "load_checkpoint", "losses_and_gradients", "policy", "run_episode",
    "save_checkpoint", "train", "value", "worker_loop", "write_training_log",
]
