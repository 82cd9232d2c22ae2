import numpy as np
import pytest

from frlguard import aggregators, attacks, envs, fedcore, policy, rollouts

ARCH = policy.ArchSpec(4, (8, 8), "relu", "categorical", 2)
ENV = envs.make_env("cartpole")


def _settings(seed=0, eta=1e-3, batch=4, horizon=100):
    return fedcore.RoundSettings(master_seed=seed, batch_size=batch,
                                 horizon=horizon, gamma=0.999, baseline=0.0,
                                 eta=eta)


def _theta(seed=0):
    return policy.init_params(ARCH, rollouts.stream(seed, rollouts.TAG_INIT, 0))


def test_roster_defaults_lowest_ids_malicious():
    r = fedcore.make_roster(10, 0.3)
    assert r.malicious_ids == [0, 1, 2]
    r2 = fedcore.make_roster(10, 0.25)
    assert r2.malicious_ids == [0, 1, 2]  # ceil(2.5) = 3
    r3 = fedcore.make_roster(10, 0.0)
    assert r3.malicious_ids == []
    r4 = fedcore.make_roster(5, 0.3, malicious_ids=[4])
    assert r4.malicious_ids == [4]


def test_roster_rejects_duplicates():
    with pytest.raises(ValueError):
        fedcore.AgentRoster(agents=(fedcore.Agent(1), fedcore.Agent(1)))


def test_discounted_return_exponent_starts_at_one():
    tr = fedcore.Trajectory(states=np.zeros((1, 4)), actions=np.zeros((1, 1)),
                            rewards=np.array([1.0]))
    assert fedcore.discounted_return(tr, 0.999) == pytest.approx(0.999)
    tr3 = fedcore.Trajectory(states=np.zeros((3, 4)), actions=np.zeros((3, 1)),
                             rewards=np.array([1.0, 1.0, 1.0]))
    assert fedcore.discounted_return(tr3, 0.5) == pytest.approx(0.5 + 0.25 + 0.125)


def test_reinforce_zero_rewards_zero_update():
    theta = _theta()
    tr = fedcore.Trajectory(states=np.zeros((2, 4)), actions=np.zeros((2, 1)),
                            rewards=np.zeros(2))
    g = fedcore.reinforce_update(ARCH, [tr], theta, 0.999)
    np.testing.assert_array_equal(g, np.zeros(ARCH.param_dim))
    with pytest.raises(ValueError):
        fedcore.reinforce_update(ARCH, [], theta, 0.999)


def test_reinforce_single_step_is_scaled_logprob_grad():
    theta = _theta(1)
    s = np.array([0.01, -0.02, 0.0, 0.03])
    tr = fedcore.Trajectory(states=s[None], actions=np.array([[1.0]]),
                            rewards=np.array([1.0]))
    g = fedcore.reinforce_update(ARCH, [tr], theta, 0.999)
    np.testing.assert_allclose(g, 0.999 * policy.logprob_grad(ARCH, theta, s, 1),
                               rtol=1e-12)


def test_agent_update_matches_reference_on_recorded_trajectories():
    theta = _theta(2)
    rng = rollouts.stream(3, rollouts.TAG_AGENT, 0, 0)
    trajectories = []
    g_fused = np.zeros(ARCH.param_dim)
    for _ in range(4):
        ep = rollouts.run_policy_episode(ARCH, ENV, theta, 100, 0.999, rng)
        trajectories.append(fedcore.Trajectory(ep.states, ep.actions, ep.rewards))
        g_fused += ep.grad_sum * ep.disc_return
    g_fused /= 4
    g_ref = fedcore.reinforce_update(ARCH, trajectories, theta, 0.999)
    np.testing.assert_allclose(g_fused, g_ref, rtol=1e-9, atol=1e-11)


def test_sample_batch_is_deterministic():
    theta = _theta(4)
    b1 = fedcore.sample_batch(ARCH, ENV, theta, 3, 50,
                              rollouts.stream(5, rollouts.TAG_AGENT, 1, 0))
    b2 = fedcore.sample_batch(ARCH, ENV, theta, 3, 50,
                              rollouts.stream(5, rollouts.TAG_AGENT, 1, 0))
    for t1, t2 in zip(b1, b2):
        np.testing.assert_array_equal(t1.states, t2.states)
        np.testing.assert_array_equal(t1.actions, t2.actions)
    with pytest.raises(ValueError):
        fedcore.sample_batch(ARCH, ENV, theta, 0, 50,
                             rollouts.stream(5, rollouts.TAG_AGENT, 1, 0))


def _run_round(agg_kind="fedavg", attack=None, seed=0, n=5, fraction=0.4):
    roster = fedcore.make_roster(n, fraction)
    agg = aggregators.make_aggregator(
        aggregators.AggregatorSpec(kind=agg_kind), n, fraction)
    theta = _theta(seed)
    return fedcore.global_round(ARCH, ENV, theta, roster, agg,
                                attack or attacks.AttackSpec(kind="none"),
                                _settings(seed), round_index=0)


def test_global_round_applies_eta_times_aggregate():
    theta = _theta(0)
    theta_next, record = _run_round()
    assert record.trajectories_sampled_total == 5 * 4
    assert len(record.per_agent_update_norms) == 5
    delta = np.linalg.norm(theta_next - theta)
    assert delta == pytest.approx(1e-3 * record.aggregated_norm, rel=1e-9)


def test_round_is_reproducible():
    a, _ = _run_round(seed=7)
    b, _ = _run_round(seed=7)
    np.testing.assert_array_equal(a, b)
    c, _ = _run_round(seed=8)
    assert not np.array_equal(a, c)


def test_agent_streams_are_isolated():
    # removing other agents does not change an agent's own update
    theta = _theta(3)
    settings = _settings(seed=11)

    def update_for(agent_id):
        rng = rollouts.stream(settings.master_seed, rollouts.TAG_AGENT,
                              agent_id, 0)
        g, _ = rollouts.agent_update(ARCH, ENV, theta, settings.batch_size,
                                     settings.horizon, settings.gamma,
                                     settings.baseline, rng)
        return g

    g2_alone = update_for(2)
    g2_again = update_for(2)
    np.testing.assert_array_equal(g2_alone, g2_again)


def test_data_poisoning_changes_malicious_updates_only():
    spec = attacks.AttackSpec(kind="random_action")
    clean_theta, clean_rec = _run_round(attack=attacks.AttackSpec(kind="none"),
                                        seed=9)
    pois_theta, pois_rec = _run_round(attack=spec, seed=9)
    # agents 0,1 are malicious (ceil(0.4*5)=2): norms differ there
    clean_n = clean_rec.per_agent_update_norms
    pois_n = pois_rec.per_agent_update_norms
    assert clean_n[2:] == pois_n[2:]
    assert clean_n[0] != pois_n[0] or clean_n[1] != pois_n[1]


def test_model_poisoning_round_runs_all_kinds():
    for kind in ("random_noise", "trim", "shejwalkar", "normalized"):
        theta_next, rec = _run_round(agg_kind="coord_median",
                                     attack=attacks.AttackSpec(kind=kind),
                                     seed=13)
        assert np.all(np.isfinite(theta_next))


def test_attack_start_gate_in_round():
    spec = attacks.AttackSpec(kind="random_noise", start_after=100)
    roster = fedcore.make_roster(5, 0.4)
    agg = aggregators.make_aggregator(aggregators.AggregatorSpec(), 5, 0.4)
    theta = _theta(1)
    early, _ = fedcore.global_round(ARCH, ENV, theta, roster, agg, spec,
                                    _settings(2), 0, trajectories_before=0)
    clean, _ = fedcore.global_round(ARCH, ENV, theta, roster, agg,
                                    attacks.AttackSpec(kind="none"),
                                    _settings(2), 0, trajectories_before=0)
    np.testing.assert_array_equal(early, clean)
    late, _ = fedcore.global_round(ARCH, ENV, theta, roster, agg, spec,
                                   _settings(2), 0, trajectories_before=100)
    assert not np.array_equal(late, clean)
