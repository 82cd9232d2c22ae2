import math

import numpy as np
import pytest

from frlguard import envs, kernels


def test_step_from_origin_with_positive_force():
    # independently derived by hand from the ODEs:
    # temp = 10/1.1, theta_acc = -temp / (0.5*(4/3 - 0.1/1.1)), and the
    # position advances with the old (zero) velocity
    x, x_dot, theta, theta_dot = kernels.cartpole_step(
        0.0, 0.0, 0.0, 0.0, 10.0, 9.8, 1.0, 0.1, 0.5, 0.02)
    assert x == 0.0
    assert theta == 0.0
    assert x_dot == pytest.approx(0.1951219512195122, abs=1e-12)
    assert theta_dot == pytest.approx(-0.2926829268292683, abs=1e-12)


def test_step_is_symmetric_in_force():
    xp = kernels.cartpole_step(0.0, 0.0, 0.0, 0.0, 10.0,
                               9.8, 1.0, 0.1, 0.5, 0.02)
    xm = kernels.cartpole_step(0.0, 0.0, 0.0, 0.0, -10.0,
                               9.8, 1.0, 0.1, 0.5, 0.02)
    assert xp[1] == -xm[1]
    assert xp[3] == -xm[3]


def test_make_env_caps_and_unknown_kind():
    assert envs.make_env("cartpole").episode_cap == 500
    assert envs.make_env("cartpole_continuous").episode_cap == 1000
    with pytest.raises(ValueError):
        envs.make_env("mountain_car")


def test_action_spaces():
    d = envs.action_space(envs.make_env("cartpole"))
    assert d.kind == "discrete" and d.n == 2
    c = envs.action_space(envs.make_env("cartpole_continuous"))
    assert c.kind == "continuous" and c.dim == 1
    assert c.lo == -3.0 and c.hi == 3.0


def test_terminal_conditions():
    env = envs.make_env("cartpole")
    assert envs.is_terminal(env, envs.EnvState(0, 0, 0.21, 0))
    assert envs.is_terminal(env, envs.EnvState(0, 0, -0.21, 0))
    assert envs.is_terminal(env, envs.EnvState(2.41, 0, 0, 0))
    assert not envs.is_terminal(env, envs.EnvState(2.39, 0, 0.2094, 0))
    assert envs.is_terminal(env, envs.EnvState(0, 0, 0, 0, steps_elapsed=500))
    assert envs.THETA_LIMIT == pytest.approx(12.0 * math.pi / 180.0)


def test_reset_range_and_determinism():
    env = envs.make_env("cartpole")
    rng = np.random.default_rng(7)
    for _ in range(50):
        s = envs.reset(env, rng)
        arr = s.as_array()
        assert np.all(arr >= -0.05) and np.all(arr <= 0.05)
        assert s.steps_elapsed == 0
    a = envs.reset(env, np.random.default_rng(5)).as_array()
    b = envs.reset(env, np.random.default_rng(5)).as_array()
    assert np.array_equal(a, b)


def test_step_rewards_and_terminal_guard():
    env = envs.make_env("cartpole")
    s = envs.EnvState(0.0, 0.0, 0.0, 0.0)
    res = envs.step(env, s, 1)
    assert res.reward == 1.0
    assert res.state.steps_elapsed == 1
    with pytest.raises(ValueError):
        envs.step(env, envs.EnvState(0, 0, 0.3, 0), 1)
    with pytest.raises(ValueError):
        envs.step(env, s, 2)


def test_reward_noise_statistics():
    env = envs.make_env("cartpole", reward_noise_var=0.1)
    assert env.noise_std == pytest.approx(math.sqrt(0.1))
    rng = np.random.default_rng(0)
    rewards = []
    for _ in range(4000):
        rewards.append(envs.step(env, envs.EnvState(0, 0, 0, 0), 0, rng).reward)
    rewards = np.asarray(rewards)
    assert rewards.mean() == pytest.approx(1.0, abs=0.02)
    assert rewards.var() == pytest.approx(0.1, rel=0.1)
    with pytest.raises(ValueError):
        envs.step(env, envs.EnvState(0, 0, 0, 0), 0, rng=None)


def test_continuous_force_scaling_and_clamp():
    env = envs.make_env("cartpole_continuous")
    assert envs.force_for_action(env, np.array([1.5])) == 15.0
    assert envs.force_for_action(env, np.array([-4.0])) == -30.0
    assert envs.force_for_action(env, np.array([3.5])) == 30.0


def test_max_episode_reward():
    assert envs.max_episode_reward(envs.make_env("cartpole")) == 500.0
    assert envs.max_episode_reward(envs.make_env("cartpole_continuous")) == 1000.0
