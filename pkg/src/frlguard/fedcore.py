"""The federated protocol: local REINFORCE updates and the global round.

A round synchronizes the global policy, has every agent compute a local
update from a fresh batch of trajectories (malicious agents subject to
the active attack), sorts updates canonically by agent id, aggregates,
and applies theta' = theta + eta * aggregate.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import aggregators, attacks, kernels, policy, rollouts


@dataclass
class Trajectory:
    states: np.ndarray  # (T, state_dim)
    actions: np.ndarray  # (T, acols)
    rewards: np.ndarray  # (T,)

    def __len__(self):
        return len(self.rewards)


@dataclass(frozen=True)
class Agent:
    id: int
    malicious: bool = False


@dataclass(frozen=True)
class AgentRoster:
    agents: tuple

    def __post_init__(self):
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate agent ids")

    def __len__(self):
        return len(self.agents)

    def sorted_agents(self):
        return sorted(self.agents, key=lambda a: a.id)

    @property
    def malicious_ids(self):
        return [a.id for a in self.sorted_agents() if a.malicious]


def make_roster(n, malicious_fraction, malicious_ids=None):
    """Default malicious assignment: the lowest ceil(fraction * n) ids."""
    if malicious_ids is None:
        m = math.ceil(malicious_fraction * n)
        malicious_ids = set(range(m))
    else:
        malicious_ids = set(malicious_ids)
    return AgentRoster(agents=tuple(
        Agent(id=i, malicious=i in malicious_ids) for i in range(n)))


def sample_batch(arch, env, theta, batch_size, horizon, rng):
    """B independent episodes under the stochastic policy, each capped at
    the horizon."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    out = []
    for _ in range(batch_size):
        ep = rollouts.run_policy_episode(arch, env, theta, horizon, 1.0, rng,
                                         mode=kernels.MODE_SAMPLE,
                                         collect_grad=False)
        out.append(Trajectory(states=ep.states.copy(),
                              actions=ep.actions.copy(),
                              rewards=ep.rewards.copy()))
    return out


def discounted_return(trajectory, gamma):
    """sum_h gamma^h * r_h with the exponent starting at 1."""
    g = 0.0
    gpow = gamma
    for r in trajectory.rewards:
        g += gpow * r
        gpow *= gamma
    return g


def reinforce_update(arch, trajectories, theta, gamma, baseline=0.0):
    """The local policy update, computed compositionally per step:
    (1/B) sum_k [sum_h dlogpi] * [discounted return - baseline].

    Reference path; the training loop uses the fused rollout kernel,
    which is tested against this function.
    """
    if not trajectories:
        raise ValueError("empty trajectory batch")
    g = np.zeros(arch.param_dim)
    for tr in trajectories:
        grad_sum = np.zeros(arch.param_dim)
        for s, a in zip(tr.states, tr.actions):
            act = int(a[0]) if arch.head == "categorical" else a
            grad_sum += policy.logprob_grad(arch, theta, s, act)
        g += grad_sum * (discounted_return(tr, gamma) - baseline)
    g /= len(trajectories)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite policy update")
    return g


@dataclass
class RoundRecord:
    round: int
    trajectories_sampled_total: int
    per_agent_update_norms: list
    aggregated_norm: float
    server_trajectories: int = 0

    def to_dict(self):
        return {"round": self.round,
                "trajectories_sampled_total": self.trajectories_sampled_total,
                "per_agent_update_norms": self.per_agent_update_norms,
                "aggregated_norm": self.aggregated_norm,
                "server_trajectories": self.server_trajectories}


@dataclass
class RoundSettings:
    master_seed: int
    batch_size: int
    horizon: int
    gamma: float
    baseline: float
    eta: float


def global_round(arch, env, theta, roster, aggregator, attack, settings,
                 round_index, trajectories_before=0):
    """One synchronize / local-update / aggregate round.

    trajectories_before: per-agent trajectory count before this round,
    used for the attack's start-after gate.
    """
    agents = roster.sorted_agents()
    n = len(agents)
    active = attack is not None and attack.active(trajectories_before)
    updates = np.empty((n, arch.param_dim))
    sampled = 0
    for row, agent in enumerate(agents):
        rng = rollouts.stream(settings.master_seed, rollouts.TAG_AGENT,
                              agent.id, round_index)
        random_action = (active and attack.kind == "random_action"
                         and agent.malicious)
        g, stats = rollouts.agent_update(
            arch, env, theta, settings.batch_size, settings.horizon,
            settings.gamma, settings.baseline, rng,
            random_action=random_action)
        updates[row] = g
        sampled += stats.episodes

    agg_ctx = aggregators.AggContext(
        master_seed=settings.master_seed, round_index=round_index,
        arch=arch, env=env, theta=theta, eta=settings.eta,
        batch_size=settings.batch_size, horizon=settings.horizon,
        gamma=settings.gamma, baseline=settings.baseline)

    mal_rows = [row for row, agent in enumerate(agents) if agent.malicious]
    if active and attack.kind not in ("none", "random_action") and mal_rows:
        attack_rng = rollouts.stream(settings.master_seed, rollouts.TAG_ATTACK,
                                     round_index)
        updates = attacks.craft_updates(attack, updates, mal_rows, aggregator,
                                        agg_ctx, attack_rng)

    try:
        agg = np.asarray(aggregator(updates, agg_ctx), dtype=float)
    except Exception as exc:
        raise RuntimeError(f"aggregation failed in round {round_index}") from exc
    theta_next = theta + settings.eta * agg
    record = RoundRecord(
        round=round_index,
        trajectories_sampled_total=sampled,
        per_agent_update_norms=[float(np.linalg.norm(u)) for u in updates],
        aggregated_norm=float(np.linalg.norm(agg)),
        server_trajectories=agg_ctx.server_trajectories)
    return theta_next, record
