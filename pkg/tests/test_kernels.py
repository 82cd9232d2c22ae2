import json
import os
import subprocess
import sys

import numpy as np
import pytest

from frlguard import envs, fedcore, kernels, policy, rollouts

CAT = policy.ArchSpec(4, (16, 16), "relu", "categorical", 2)
GAUSS = policy.ArchSpec(4, (8, 8), "tanh", "gaussian", 1, lo=-3.0, hi=3.0)


def _episode(arch, env, theta, seed, mode=kernels.MODE_SAMPLE):
    rng = rollouts.stream(seed, rollouts.TAG_AGENT, 0, 0)
    return rollouts.run_policy_episode(arch, env, theta, env.episode_cap,
                                       0.999, rng, mode=mode)


def test_episode_respects_cap_and_termination():
    env = envs.make_env("cartpole")
    theta = policy.init_params(CAT, rollouts.stream(0, rollouts.TAG_INIT, 0))
    ep = _episode(CAT, env, theta, 3)
    assert 1 <= ep.steps <= 500
    assert ep.total_reward == pytest.approx(float(ep.steps))
    assert ep.states.shape == (ep.steps, 4)
    assert ep.actions.shape == (ep.steps, 1)
    # all visited states are non-terminal (the episode stops after the
    # first terminal transition)
    for s in ep.states:
        assert abs(s[2]) <= envs.THETA_LIMIT and abs(s[0]) <= envs.X_LIMIT


def test_discounted_return_matches_reference():
    env = envs.make_env("cartpole")
    theta = policy.init_params(CAT, rollouts.stream(1, rollouts.TAG_INIT, 0))
    ep = _episode(CAT, env, theta, 5)
    tr = fedcore.Trajectory(ep.states, ep.actions, ep.rewards)
    assert ep.disc_return == pytest.approx(
        fedcore.discounted_return(tr, 0.999), rel=1e-12)


def _grad_dual_route(arch, env, seed):
    theta = policy.init_params(arch, rollouts.stream(seed, rollouts.TAG_INIT, 0))
    ep = _episode(arch, env, theta, seed)
    reference = np.zeros(arch.param_dim)
    for s, a in zip(ep.states, ep.actions):
        act = int(a[0]) if arch.head == "categorical" else a
        reference += policy.logprob_grad(arch, theta, s, act)
    return ep.grad_sum, reference


def test_fused_gradient_matches_compositional_categorical():
    env = envs.make_env("cartpole")
    for seed in (0, 1, 2):
        fused, reference = _grad_dual_route(CAT, env, seed)
        np.testing.assert_allclose(fused, reference, rtol=1e-10, atol=1e-12)


def test_fused_gradient_matches_compositional_gaussian():
    env = envs.make_env("cartpole_continuous")
    for seed in (0, 1, 2):
        fused, reference = _grad_dual_route(GAUSS, env, seed)
        np.testing.assert_allclose(fused, reference, rtol=1e-10, atol=1e-12)


def test_fused_greedy_matches_reference_policy():
    env = envs.make_env("cartpole")
    theta = policy.init_params(CAT, rollouts.stream(2, rollouts.TAG_INIT, 0))
    ep = _episode(CAT, env, theta, 7, mode=kernels.MODE_GREEDY)
    for s, a in zip(ep.states, ep.actions):
        assert int(a[0]) == policy.greedy_action(CAT, theta, s)


def test_random_mode_uses_uniform_actions():
    env = envs.make_env("cartpole")
    theta = policy.init_params(CAT, rollouts.stream(3, rollouts.TAG_INIT, 0))
    acts = []
    for seed in range(40):
        rng = rollouts.stream(seed, rollouts.TAG_AGENT, 0, 0)
        ep = rollouts.run_policy_episode(CAT, env, theta, 500, 0.999, rng,
                                         mode=kernels.MODE_RANDOM)
        acts.extend(int(a[0]) for a in ep.actions)
    freq = np.bincount(acts, minlength=2) / len(acts)
    assert abs(freq[0] - 0.5) < 0.1


_BACKEND_SNIPPET = """
import json
import numpy as np
from frlguard import envs, policy, rollouts, kernels, aggregators
env = envs.make_env("cartpole")
arch = policy.ArchSpec(4, (16, 16), "relu", "categorical", 2)
theta = policy.init_params(arch, rollouts.stream(0, rollouts.TAG_INIT, 0))
out = []
for seed in range(3):
    rng = rollouts.stream(seed, rollouts.TAG_AGENT, 0, 0)
    ep = rollouts.run_policy_episode(arch, env, theta, 500, 0.999, rng)
    out.append([ep.disc_return, ep.total_reward, float(ep.steps),
                float(np.sum(ep.grad_sum)), float(np.sum(ep.states))])
pts = rollouts.stream(9, rollouts.TAG_EVAL, 0).standard_normal((7, 3))
med = aggregators.geometric_median(pts)
out.append([float(v) for v in med])
print(json.dumps({"data": out, "numba": kernels.jit.USE_NUMBA}))
"""


def _run_backend(no_numba):
    env = dict(os.environ)
    env["FRLGUARD_NO_NUMBA"] = "1" if no_numba else "0"
    res = subprocess.run([sys.executable, "-c", _BACKEND_SNIPPET],
                         capture_output=True, text=True, env=env, check=True)
    return json.loads(res.stdout)


def test_backends_are_bitwise_identical():
    jit = _run_backend(no_numba=False)
    pure = _run_backend(no_numba=True)
    assert jit["numba"] is True
    assert pure["numba"] is False
    assert jit["data"] == pure["data"]


def test_geom_median_analytic_case():
    pts = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]])
    med = kernels.geom_median(pts, 1e-10, 1000)
    assert med[0] == pytest.approx(1.0, abs=1e-3)
    assert med[1] == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-3)


def test_geom_median_coincident_points():
    pts = np.array([[1.0, 2.0]] * 5)
    med = kernels.geom_median(pts, 1e-10, 100)
    np.testing.assert_allclose(med, [1.0, 2.0])
    # majority at a single point: that point is the median
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [5.0, 1.0], [2.0, -4.0]])
    med = kernels.geom_median(pts, 1e-10, 1000)
    np.testing.assert_allclose(med, [0.0, 0.0], atol=1e-6)


def _grid_objective(pts, lo, hi, n):
    xs = np.linspace(lo, hi, n)
    best, arg = np.inf, None
    for x in xs:
        for y in xs:
            v = np.sum(np.linalg.norm(pts - np.array([x, y]), axis=1))
            if v < best:
                best, arg = v, (x, y)
    return best, arg


def test_geom_median_beats_dense_grid():
    rng = np.random.default_rng(21)
    for _ in range(10):
        pts = rng.uniform(-1, 1, (rng.integers(3, 8), 2))
        med = kernels.geom_median(np.ascontiguousarray(pts), 1e-10, 2000)
        obj = np.sum(np.linalg.norm(pts - med, axis=1))
        grid_best, _ = _grid_objective(pts, -1, 1, 101)
        assert obj <= grid_best * (1 + 1e-6)


def test_ensemble_kernel_majority_tie_breaks_low():
    # two policies disagree deterministically -> tie -> action 0
    theta_a = np.zeros(CAT.param_dim)
    theta_b = np.zeros(CAT.param_dim)
    # bias the output layer: last 2 entries are output biases
    theta_a[-2:] = [5.0, 0.0]  # prefers action 0
    theta_b[-2:] = [0.0, 5.0]  # prefers action 1
    env = envs.make_env("cartpole")
    r_pair = rollouts.evaluate_ensemble(CAT, env, np.stack([theta_a, theta_b]),
                                        1, rollouts.stream(0, 3, 0))
    r_zero = rollouts.evaluate_policy(CAT, env, theta_a, 1,
                                      rollouts.stream(0, 3, 0))
    assert r_pair == r_zero
