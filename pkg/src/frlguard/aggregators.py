"""The six foundational aggregation rules.

Each rule maps a stack of local policy updates (one row per agent, sorted
by agent id) to a single update vector. FLAME and FedPG-BR additionally
consume explicit randomness / server-side rollouts through the
aggregation context, so a round's aggregate is a deterministic function
of (updates, master seed, round index).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rollouts


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "fedavg"
    trim_c: int | None = None  # None: ceil(malicious_fraction * n)
    gm_eps: float = 1e-8
    gm_iters: int = 500
    flame_lambda: float = 1e-3
    fedpg_b: int = 4
    fedpg_sigma: float = 0.06
    fedpg_delta: float = 0.6

    def validate(self, n):
        if self.kind not in KINDS:
            raise ValueError(f"unknown aggregator {self.kind!r}")
        if self.kind == "trimmed_mean" and self.trim_c is not None:
            if n <= 2 * self.trim_c:
                raise ValueError(f"trimmed_mean needs n > 2c, got n={n}, c={self.trim_c}")
        if self.gm_eps <= 0:
            raise ValueError("gm_eps must be positive")
        if self.kind == "fedpg_br":
            if self.fedpg_b < 1 or not (0 < self.fedpg_delta < 1) or self.fedpg_sigma <= 0:
                raise ValueError("invalid fedpg_br parameters")


@dataclass
class AggContext:
    """Everything a stateful rule needs for one aggregation call."""
    master_seed: int
    round_index: int
    arch: object = None
    env: object = None
    theta: np.ndarray | None = None
    eta: float = 0.0
    batch_size: int = 16
    horizon: int = 500
    gamma: float = 0.999
    baseline: float = 0.0
    probe: bool = False  # attacker-side simulation: freeze the rng key
    server_trajectories: int = 0

    def rng(self, tag, *key):
        if self.probe:
            # probes re-run the rule with a fixed key so the attack
            # objective is a deterministic function of the candidate
            return rollouts.stream(self.master_seed, rollouts.TAG_ATTACK,
                                   tag, self.round_index, *key)
        return rollouts.stream(self.master_seed, tag, self.round_index, *key)


def fedavg(updates):
    updates = _as_matrix(updates)
    return updates.mean(axis=0)


def trimmed_mean(updates, c):
    """Per dimension, drop the c largest and c smallest values and average
    the rest. c is clamped so at least one value survives, which lets the
    rule double as the attacker's small-sample estimate."""
    updates = _as_matrix(updates)
    n = updates.shape[0]
    c = min(int(c), (n - 1) // 2)
    if c == 0:
        return updates.mean(axis=0)
    s = np.sort(updates, axis=0)
    return s[c:n - c].mean(axis=0)


def coord_median(updates):
    updates = _as_matrix(updates)
    return np.median(updates, axis=0)


def geometric_median(points, eps=1e-8, max_iters=500):
    points = _as_matrix(points)
    return kernels.geom_median(np.ascontiguousarray(points, dtype=np.float64),
                               eps, max_iters)


def flame(updates, noise_lambda, rng):
    """Cosine-similarity clustering, norm clipping to the median norm, and
    per-dimension gaussian noise with std noise_lambda * median norm.

    Clustering: the smallest cosine-distance radius whose largest
    single-linkage component reaches a majority (floor(n/2)+1) defines the
    kept set; if no majority component exists, all updates are kept.
    """
    updates = _as_matrix(updates)
    n = updates.shape[0]
    if n < 3:
        raise ValueError(f"flame needs at least 3 updates, got {n}")
    norms = np.linalg.norm(updates, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = updates / safe[:, None]
    cosdist = 1.0 - unit @ unit.T
    np.fill_diagonal(cosdist, 0.0)
    cosdist = np.maximum(cosdist, cosdist.T)  # enforce exact symmetry

    target = n // 2 + 1
    kept = _majority_component(cosdist, target)
    if kept is None:
        kept = np.arange(n)

    clip_norm = float(np.median(norms))
    scale = np.minimum(1.0, clip_norm / np.where(norms[kept] > 0, norms[kept], 1.0))
    clipped = updates[kept] * scale[:, None]
    agg = clipped.mean(axis=0)
    if noise_lambda > 0.0:
        agg = agg + rng.normal(0.0, noise_lambda * clip_norm, agg.shape)
    return agg


def _majority_component(dist, target):
    """Smallest radius r whose largest single-linkage component has size
    >= target; returns the member indices of that component."""
    n = dist.shape[0]

    def largest_component(r):
        seen = np.zeros(n, dtype=bool)
        best = None
        for s in range(n):
            if seen[s]:
                continue
            stack = [s]
            seen[s] = True
            comp = []
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in range(n):
                    if not seen[v] and dist[u, v] <= r:
                        seen[v] = True
                        stack.append(v)
            if best is None or len(comp) > len(best):
                best = comp
        return np.array(sorted(best))

    radii = np.unique(dist)
    lo_comp = largest_component(radii[0])
    if len(lo_comp) >= target:
        return lo_comp
    lo, hi = 0, len(radii) - 1
    if len(largest_component(radii[hi])) < target:
        return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if len(largest_component(radii[mid])) >= target:
            hi = mid
        else:
            lo = mid
    comp = largest_component(radii[hi])
    return comp if len(comp) >= target else None


def fedpg_br(updates, spec, ctx):
    """Geometric-median filtering plus an SCSG-style server correction.

    Returns the applied aggregate, i.e. (theta_N - theta) / eta for the
    variance-reduced inner loop of length N ~ Geometric(B / (B + b)).
    """
    updates = _as_matrix(updates)
    g_med = geometric_median(updates, spec.gm_eps, spec.gm_iters)
    dist = np.linalg.norm(updates - g_med, axis=1)
    align = updates @ g_med
    keep = (dist <= 2.0 * spec.fedpg_sigma) & (align >= 0.0)
    mu = updates[keep].mean(axis=0) if np.any(keep) else g_med
    if ctx.eta == 0.0:
        # a zero step size makes the inner loop a no-op; the applied
        # aggregate is just the filtered mean
        return mu

    arch, env = ctx.arch, ctx.env
    b = spec.fedpg_b
    p = ctx.batch_size / (ctx.batch_size + b)
    n_rng = ctx.rng(rollouts.TAG_SERVER, 0)
    n_inner = int(n_rng.geometric(p))

    theta_j = ctx.theta.copy()
    for j in range(n_inner):
        # common random numbers: the same stream drives the b server
        # episodes at theta_j and at theta_0
        g_j, st1 = rollouts.agent_update(
            arch, env, theta_j, b, ctx.horizon, ctx.gamma, ctx.baseline,
            ctx.rng(rollouts.TAG_SERVER, 1, j))
        g_0, st0 = rollouts.agent_update(
            arch, env, ctx.theta, b, ctx.horizon, ctx.gamma, ctx.baseline,
            ctx.rng(rollouts.TAG_SERVER, 1, j))
        v = g_j - g_0 + mu
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(
                f"non-finite SCSG iterate in round {ctx.round_index}")
        theta_j = theta_j + ctx.eta * v
        if not ctx.probe:
            ctx.server_trajectories += st1.episodes + st0.episodes
    if ctx.eta == 0.0:
        return mu
    return (theta_j - ctx.theta) / ctx.eta


def _as_matrix(updates):
    m = np.atleast_2d(np.asarray(updates, dtype=np.float64))
    if m.shape[0] == 0:
        raise ValueError("empty update set")
    return m


@dataclass
class Aggregator:
    """A rule bound to its parameters; callable on (updates, ctx)."""
    spec: AggregatorSpec
    trim_c: int = 0

    @property
    def kind(self):
        return self.spec.kind

    def __call__(self, updates, ctx=None):
        k = self.spec.kind
        if k == "fedavg":
            return fedavg(updates)
        if k == "trimmed_mean":
            return trimmed_mean(updates, self.trim_c)
        if k == "coord_median":
            return coord_median(updates)
        if k == "geometric_median":
            return geometric_median(updates, self.spec.gm_eps, self.spec.gm_iters)
        if k == "flame":
            rng = ctx.rng(rollouts.TAG_FLAME)
            return flame(updates, self.spec.flame_lambda, rng)
        if k == "fedpg_br":
            return fedpg_br(updates, self.spec, ctx)
        raise ValueError(f"unknown aggregator {k!r}")


KINDS = ("fedavg", "trimmed_mean", "coord_median", "geometric_median",
         "flame", "fedpg_br")


def make_aggregator(spec, n_agents, malicious_fraction=0.0):
    spec.validate(n_agents)
    if spec.trim_c is not None:
        c = spec.trim_c
    else:
        c = math.ceil(malicious_fraction * n_agents)
        c = min(c, (n_agents - 1) // 2)
    return Aggregator(spec=spec, trim_c=c)
