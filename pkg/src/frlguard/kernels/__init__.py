from .jit import USE_NUMBA, python_impl
from .core import (
    ACT_RELU,
    ACT_TANH,
    HEAD_CATEGORICAL,
    HEAD_GAUSSIAN,
    MODE_GREEDY,
    MODE_RANDOM,
    MODE_SAMPLE,
    VOTE_FEDAVG,
    VOTE_GEOMEDIAN,
    VOTE_TRIMMED,
    aggregate_actions,
    cartpole_step,
    geom_median,
    logprob_backward,
    mlp_forward,
    run_episode,
    run_episode_ensemble,
)

__all__ = [
    "USE_NUMBA",
    "python_impl",
    "ACT_RELU",
    "ACT_TANH",
    "HEAD_CATEGORICAL",
    "HEAD_GAUSSIAN",
    "MODE_GREEDY",
    "MODE_RANDOM",
    "MODE_SAMPLE",
    "VOTE_FEDAVG",
    "VOTE_GEOMEDIAN",
    "VOTE_TRIMMED",
    "aggregate_actions",
    "cartpole_step",
    "geom_median",
    "logprob_backward",
    "mlp_forward",
    "run_episode",
    "run_episode_ensemble",
]
