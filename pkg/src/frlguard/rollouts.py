"""Kernel-driven episode rollouts and RNG stream plumbing.

Every random draw in a run comes from a stream derived as
stream(master_seed, domain_tag, *key), so results are independent of
scheduling. Each episode pre-draws its randomness in a fixed block order
(reset, action uniforms, action normals, reward-noise normals) and hands
the arrays to the jitted episode kernel.
"""

from dataclasses import dataclass

import numpy as np

from . import envs, kernels

# stream domain tags
TAG_INIT = 0
TAG_AGENT = 1
TAG_SERVER = 2
TAG_EVAL = 3
TAG_ATTACK = 4
TAG_FLAME = 5

VOTE_CODES = {"geomedian": kernels.VOTE_GEOMEDIAN,
              "fedavg": kernels.VOTE_FEDAVG,
              "trimmed_mean": kernels.VOTE_TRIMMED}


def stream(master_seed, tag, *key):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(master_seed), int(tag))
                               + tuple(int(k) for k in key)))


@dataclass
class EpisodeResult:
    states: np.ndarray  # (steps, 4)
    actions: np.ndarray  # (steps, acols)
    rewards: np.ndarray  # (steps,)
    grad_sum: np.ndarray  # (d,) sum over steps of dlogpi, zeros if not collected
    disc_return: float
    total_reward: float
    steps: int


def _env_args(env):
    return (env.gravity, env.masscart, env.masspole, env.half_length,
            env.force_mag, env.dt, envs.X_LIMIT, envs.THETA_LIMIT,
            env.episode_cap)


def _draws(arch, env, horizon, rng, mode):
    reset_draws = rng.uniform(-0.05, 0.05, 4)
    ucols = 1 if arch.head == "categorical" else arch.out_dim
    if mode == kernels.MODE_GREEDY:
        act_uniforms = np.zeros((1, 1))
    else:
        act_uniforms = rng.random((horizon, ucols))
    if arch.head == "gaussian" and mode == kernels.MODE_SAMPLE:
        act_normals = rng.standard_normal((horizon, arch.out_dim))
    else:
        act_normals = np.zeros((1, 1))
    if env.noise_std > 0.0:
        noise_draws = rng.standard_normal(horizon)
    else:
        noise_draws = np.zeros(horizon)
    return reset_draws, act_uniforms, act_normals, noise_draws


def run_policy_episode(arch, env, theta, horizon, gamma, rng,
                       mode=kernels.MODE_SAMPLE, collect_grad=True):
    """One episode under the policy; optionally accumulates the per-episode
    sum of log-probability gradients."""
    widths = arch.widths
    acols = 1 if arch.head == "categorical" else arch.out_dim
    states = np.empty((horizon, 4))
    actions = np.empty((horizon, acols))
    rewards = np.empty(horizon)
    grad = np.zeros(arch.param_dim)
    acts = np.empty(int(widths.sum()))
    maxw = int(widths.max())
    delta_a = np.empty(maxw)
    delta_b = np.empty(maxw)

    reset_draws, act_uniforms, act_normals, noise_draws = _draws(
        arch, env, horizon, rng, mode)

    disc, total, steps = kernels.run_episode(
        theta, widths, arch.act_code, arch.head_code, arch.out_tanh,
        arch.lo, arch.hi,
        *_env_args(env), gamma, env.noise_std,
        reset_draws, act_uniforms, act_normals, noise_draws,
        mode, collect_grad,
        states, actions, rewards, grad, acts, delta_a, delta_b)
    if collect_grad and not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite rollout gradient")
    return EpisodeResult(states=states[:steps], actions=actions[:steps],
                         rewards=rewards[:steps], grad_sum=grad,
                         disc_return=disc, total_reward=total, steps=steps)


@dataclass
class BatchStats:
    episodes: int = 0
    total_steps: int = 0
    mean_return: float = 0.0


def agent_update(arch, env, theta, batch_size, horizon, gamma, baseline, rng,
                 random_action=False):
    """The per-round local policy update: mean over the batch of
    (sum_h dlogpi) * (discounted_return - baseline).

    With random_action=True the agent's trajectories are collected under
    uniformly random actions (data poisoning) while the update is still
    computed from the corrupted trajectories.
    """
    mode = kernels.MODE_RANDOM if random_action else kernels.MODE_SAMPLE
    g = np.zeros(arch.param_dim)
    stats = BatchStats()
    ret_acc = 0.0
    for _ in range(batch_size):
        ep = run_policy_episode(arch, env, theta, horizon, gamma, rng,
                                mode=mode, collect_grad=True)
        g += ep.grad_sum * (ep.disc_return - baseline)
        stats.episodes += 1
        stats.total_steps += ep.steps
        ret_acc += ep.total_reward
    g /= batch_size
    stats.mean_return = ret_acc / batch_size
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite local policy update")
    return g, stats


def evaluate_policy(arch, env, theta, episodes, rng):
    """Mean total reward over greedy-action episodes (noise-free env)."""
    clean = envs.with_noise(env, 0.0)
    total = 0.0
    for _ in range(episodes):
        ep = run_policy_episode(arch, clean, theta, clean.episode_cap, 1.0,
                                rng, mode=kernels.MODE_GREEDY,
                                collect_grad=False)
        total += ep.total_reward
    return total / episodes


def evaluate_ensemble(arch, env, thetas, episodes, rng,
                      vote="geomedian", trim_c=0, gm_eps=1e-8, gm_iters=500):
    """Mean total reward over episodes driven by the per-step ensemble vote."""
    clean = envs.with_noise(env, 0.0)
    widths = arch.widths
    thetas = np.ascontiguousarray(np.atleast_2d(thetas))
    acts = np.empty(int(widths.sum()))
    action_mat = np.empty((thetas.shape[0], arch.out_dim))
    agg_action = np.empty(arch.out_dim)
    x_buf = np.empty(4)
    vote_mode = VOTE_CODES[vote]
    total = 0.0
    for _ in range(episodes):
        reset_draws = rng.uniform(-0.05, 0.05, 4)
        noise_draws = np.zeros(clean.episode_cap)
        r, _steps = kernels.run_episode_ensemble(
            thetas, widths, arch.act_code, arch.head_code, arch.out_tanh,
            arch.lo, arch.hi,
            clean.gravity, clean.masscart, clean.masspole, clean.half_length,
            clean.force_mag, clean.dt, envs.X_LIMIT, envs.THETA_LIMIT,
            clean.episode_cap, 0.0,
            reset_draws, noise_draws,
            vote_mode, trim_c, gm_eps, gm_iters,
            acts, action_mat, agg_action, x_buf)
        total += r
    return total / episodes
