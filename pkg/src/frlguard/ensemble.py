"""Group partitioning, per-group training, and test-time action voting.

Agents are split into K disjoint groups by hashing their ids (identity
for integer ids, 64-bit FNV-1a for strings). Each group independently
trains its own global policy; at test time the K greedy actions are
combined by majority vote (discrete, ties to the smaller action index)
or by the geometric median (continuous).
"""

from dataclasses import dataclass

import numpy as np

from . import aggregators, fedcore, policy


def fnv1a64(s):
    h = 0xCBF29CE484222325
    for byte in s.encode():
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def assign_groups(ids, k):
    """group(id) = hash(id) mod K; deterministic and repeatable."""
    ids = list(ids)
    if k < 1 or k > len(ids):
        raise ValueError(f"need 1 <= K <= n, got K={k}, n={len(ids)}")
    out = {}
    for i in ids:
        h = i if isinstance(i, int) else fnv1a64(str(i))
        out[i] = h % k
    return out


@dataclass
class EnsemblePolicy:
    arch: policy.ArchSpec
    thetas: np.ndarray  # (K, d)
    action_kind: str  # "discrete" | "continuous"
    metadata: dict

    @property
    def k(self):
        return self.thetas.shape[0]


def vote_discrete(actions):
    """Majority vote; ties go to the smaller action index."""
    actions = [int(a) for a in actions]
    if not actions:
        raise ValueError("empty action list")
    counts = np.bincount(actions)
    return int(np.argmax(counts))


def aggregate_continuous(actions, eps=1e-8, max_iters=500, mode="geomedian",
                         trim_c=0, lo=None, hi=None):
    """Combine K continuous actions; geometric median by default, with
    mean / trimmed-mean ablation modes."""
    a = np.atleast_2d(np.asarray(actions, dtype=float))
    if mode == "geomedian":
        out = aggregators.geometric_median(a, eps, max_iters)
    elif mode == "fedavg":
        out = a.mean(axis=0)
    elif mode == "trimmed_mean":
        out = aggregators.trimmed_mean(a, trim_c)
    else:
        raise ValueError(f"unknown continuous vote mode {mode!r}")
    if lo is not None:
        out = np.clip(out, lo, hi)
    return out


def ensemble_predict(ens, s, vote="geomedian", trim_c=0):
    """Greedy per-group actions combined per the action-space kind."""
    acts = [policy.greedy_action(ens.arch, t, s) for t in ens.thetas]
    if ens.action_kind == "discrete":
        return vote_discrete(acts)
    return aggregate_continuous(acts, mode=vote, trim_c=trim_c,
                                lo=ens.arch.lo, hi=ens.arch.hi)


def group_rosters(roster, assignment, k):
    """Per-group rosters; every agent keeps its global id (and hence its
    RNG streams), so groups are bitwise isolated from each other."""
    groups = [[] for _ in range(k)]
    for agent in roster.sorted_agents():
        groups[assignment[agent.id]].append(agent)
    if any(not g for g in groups):
        raise ValueError("every group must be non-empty")
    return [fedcore.AgentRoster(agents=tuple(g)) for g in groups]


def train_ensemble(arch, env, roster, agg_spec, attack, settings, rounds, k,
                   malicious_fraction=0.0, init_seed=None, round_callback=None,
                   epoch_callback=None):
    """Train K independent group policies for the given number of rounds.

    round_callback(group, round_index, theta, record) is invoked after
    every group round (checkpointing, per-round metrics);
    epoch_callback(round_index, thetas, trajectories_per_agent) after all
    groups finish a round (periodic evaluation).
    """
    assignment = assign_groups([a.id for a in roster.sorted_agents()], k)
    rosters = group_rosters(roster, assignment, k)
    seed = settings.master_seed if init_seed is None else init_seed
    thetas = np.stack([
        policy.init_params(arch, _init_stream(seed, g)) for g in range(k)])
    aggs = [aggregators.make_aggregator(agg_spec, len(r), malicious_fraction)
            for r in rosters]

    traj_per_agent = 0
    for t in range(rounds):
        for g in range(k):
            thetas[g], record = fedcore.global_round(
                arch, env, thetas[g], rosters[g], aggs[g], attack, settings,
                round_index=t, trajectories_before=traj_per_agent)
            if round_callback is not None:
                round_callback(g, t, thetas[g], record)
        traj_per_agent += settings.batch_size
        if epoch_callback is not None:
            epoch_callback(t, thetas, traj_per_agent)

    kind = "discrete" if arch.head == "categorical" else "continuous"
    return EnsemblePolicy(arch=arch, thetas=thetas, action_kind=kind,
                          metadata={"rounds": rounds, "k": k,
                                    "assignment": assignment})


def _init_stream(seed, group):
    from . import rollouts
    return rollouts.stream(seed, rollouts.TAG_INIT, group)
