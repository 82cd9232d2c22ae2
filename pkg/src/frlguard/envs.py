"""Native cart-pole environments.

Two variants share the same ODEs: the classic discrete-force cart-pole
(episode cap 500, actions {0: push left, 1: push right} with a fixed 10 N
force) and a continuous-force variant (episode cap 1000, scalar action in
[-3, 3] scaled by the 10 N force magnitude). Rewards are +1 per step, with
optional zero-mean Gaussian noise for heterogeneous-reward experiments.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels

X_LIMIT = 2.4
THETA_LIMIT = 12.0 * math.pi / 180.0

CARTPOLE = "cartpole"
CARTPOLE_CONTINUOUS = "cartpole_continuous"

CONTINUOUS_LO = -3.0
CONTINUOUS_HI = 3.0


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0
    dt: float = 0.02
    episode_cap: int = 500
    reward_noise_var: float = 0.0

    @property
    def noise_std(self):
        return math.sqrt(self.reward_noise_var)


@dataclass
class EnvState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float
    steps_elapsed: int = 0

    def as_array(self):
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])


@dataclass
class StepResult:
    state: EnvState
    reward: float
    done: bool


@dataclass(frozen=True)
class ActionSpace:
    kind: str  # "discrete" | "continuous"
    n: int = 0  # discrete action count
    dim: int = 0
    lo: float = 0.0
    hi: float = 0.0


def make_env(kind, reward_noise_var=0.0):
    if kind == CARTPOLE:
        return EnvConfig(kind=kind, episode_cap=500,
                         reward_noise_var=reward_noise_var)
    if kind == CARTPOLE_CONTINUOUS:
        return EnvConfig(kind=kind, episode_cap=1000,
                         reward_noise_var=reward_noise_var)
    raise ValueError(f"unknown environment: {kind!r}")


def action_space(env):
    if env.kind == CARTPOLE:
        return ActionSpace(kind="discrete", n=2)
    return ActionSpace(kind="continuous", dim=1,
                       lo=CONTINUOUS_LO, hi=CONTINUOUS_HI)


def is_terminal(env, state):
    return (abs(state.theta) > THETA_LIMIT
            or abs(state.x) > X_LIMIT
            or state.steps_elapsed >= env.episode_cap)


def reset(env, rng):
    draws = rng.uniform(-0.05, 0.05, 4)
    return EnvState(x=draws[0], x_dot=draws[1], theta=draws[2],
                    theta_dot=draws[3], steps_elapsed=0)


def force_for_action(env, action):
    if env.kind == CARTPOLE:
        a = int(action)
        if a not in (0, 1):
            raise ValueError(f"discrete action must be 0 or 1, got {action!r}")
        return env.force_mag if a == 1 else -env.force_mag
    a = float(np.asarray(action).reshape(-1)[0])
    a = min(max(a, CONTINUOUS_LO), CONTINUOUS_HI)
    return a * env.force_mag


def step(env, state, action, rng=None):
    """Advance one step. Stepping a terminal state is a contract violation."""
    if is_terminal(env, state):
        raise ValueError("cannot step a terminal state")
    force = force_for_action(env, action)
    x, x_dot, theta, theta_dot = kernels.cartpole_step(
        state.x, state.x_dot, state.theta, state.theta_dot, force,
        env.gravity, env.masscart, env.masspole, env.half_length, env.dt)
    nxt = EnvState(x=x, x_dot=x_dot, theta=theta, theta_dot=theta_dot,
                   steps_elapsed=state.steps_elapsed + 1)
    reward = 1.0
    if env.noise_std > 0.0:
        if rng is None:
            raise ValueError("reward noise enabled but no rng provided")
        reward += env.noise_std * rng.standard_normal()
    return StepResult(state=nxt, reward=reward, done=is_terminal(env, nxt))


def max_episode_reward(env):
    """Noise-free reward ceiling: +1 per step up to the episode cap."""
    return float(env.episode_cap)


def with_noise(env, reward_noise_var):
    return replace(env, reward_noise_var=reward_noise_var)
