"""Poisoning attacks on the local policy updates.

Model-poisoning attacks replace the malicious agents' rows in the update
matrix before aggregation; the random-action attack corrupts trajectory
collection instead and is handled at rollout time. The two-stage
normalized attack searches a direction parameter (lambda) and then a
magnitude (zeta) with a decaying-step coordinate search, probing the real
aggregation rule at every step and keeping the best objective seen.

In partial-knowledge mode the attacker only ever reads the malicious
agents' own benign-computed updates; the pre-attack aggregate is
estimated by applying the rule to that subset.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("none", "random_action", "random_noise", "trim", "shejwalkar",
         "normalized")
DELTA_KINDS = ("uv", "std", "sgn")
VARIANTS = ("I", "II", "III", "IV")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    knowledge: str = "full"  # full | partial
    variant: str = "IV"  # normalized attack only
    delta_kind: str = "sgn"
    lambda0: float = 0.83  # initial value and initial step of the lambda search
    zeta0: float = 0.03  # initial value and initial step of the zeta search
    decay: float = 3.0  # step divisor per iteration
    tol: float = 1e-5  # stop when the step falls below this
    max_iters: int = 30
    start_after: int = 0  # trajectories per agent before the attack wakes up
    noise_var: float = 1000.0  # random-noise attack variance

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack {self.kind!r}")
        if self.knowledge not in ("full", "partial"):
            raise ValueError(f"unknown knowledge mode {self.knowledge!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.delta_kind not in DELTA_KINDS:
            raise ValueError(f"unknown perturbation vector {self.delta_kind!r}")
        if self.start_after < 0:
            raise ValueError("start_after must be >= 0")

    def active(self, trajectories_per_agent):
        return self.kind != "none" and trajectories_per_agent >= self.start_after


def perturbation_vector(delta_kind, visible):
    """The fixed perturbation direction: uv = -Avg/||Avg||,
    std = -(per-dimension population std), sgn = -sign(Avg)."""
    visible = np.atleast_2d(np.asarray(visible, dtype=float))
    avg = visible.mean(axis=0)
    if delta_kind == "sgn":
        return -np.sign(avg)
    if delta_kind == "std":
        return -visible.std(axis=0)
    if delta_kind == "uv":
        norm = np.linalg.norm(avg)
        if norm == 0.0:
            logger.warning("uv perturbation with zero mean update; using sgn")
            return -np.sign(avg)
        return -avg / norm
    raise ValueError(f"unknown perturbation vector {delta_kind!r}")


def deviation_objective(before, after, normalized):
    """Distance between the pre- and post-attack aggregates, on the unit
    sphere when normalized."""
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    if not normalized:
        return float(np.linalg.norm(before - after))
    nb, na = np.linalg.norm(before), np.linalg.norm(after)
    if nb == 0.0 or na == 0.0:
        logger.debug("degenerate zero aggregate in normalized objective")
        return 0.0
    return float(np.linalg.norm(before / nb - after / na))


def coordinate_search(objective, x0, step0, decay=3.0, tol=1e-5, max_iters=30,
                      baselines=()):
    """Decaying-step hill climb; returns the best (x, value) ever probed.

    Baseline points are probed first, which also seeds the "did the
    objective increase" comparison.
    """
    best_x, best_v = None, -np.inf
    prev = -np.inf
    for xb in baselines:
        v = objective(xb)
        if v > best_v:
            best_x, best_v = xb, v
        prev = v
    x, step = x0, step0
    for _ in range(max_iters):
        v = objective(x)
        if v > best_v:
            best_x, best_v = x, v
        x = x + step if v > prev else x - step
        prev = v
        step /= decay
        if step < tol:
            break
    return best_x, best_v


class AttackContext:
    """What the attacker can see and probe for one round.

    Full knowledge: all n benign updates and the real aggregator.
    Partial knowledge: only the malicious agents' benign-computed rows;
    the aggregator is probed over that subset.
    """

    def __init__(self, spec, updates, malicious_idx, aggregator, agg_ctx):
        self.spec = spec
        self.malicious_idx = np.asarray(malicious_idx, dtype=int)
        self.aggregator = aggregator
        self.agg_ctx = replace(agg_ctx, probe=True) if agg_ctx is not None else None
        self.full = spec.knowledge == "full"
        if self.full:
            self._updates = np.array(updates, dtype=float)
            self.visible = self._updates
        else:
            self.visible = np.array(updates[self.malicious_idx], dtype=float)
            self._updates = None  # never read in partial mode

    def baseline_aggregate(self):
        """AR over the visible set: the (estimated) pre-attack aggregate."""
        return np.asarray(self.aggregator(self.visible, self.agg_ctx), dtype=float)

    def attacked_aggregate(self, candidate):
        """AR with the malicious rows replaced by the candidate update."""
        if self.full:
            probe = self._updates.copy()
            probe[self.malicious_idx] = candidate
        else:
            probe = np.tile(candidate, (len(self.malicious_idx), 1))
        return np.asarray(self.aggregator(probe, self.agg_ctx), dtype=float)


def random_noise_updates(m, d, rng, variance=1000.0):
    return rng.normal(0.0, np.sqrt(variance), (m, d))


def trim_attack(ctx, rng):
    """Per-dimension directed extremes: push one benign spread beyond the
    visible minimum (mean sign positive) or maximum (mean sign negative)."""
    visible = ctx.visible
    m = len(ctx.malicious_idx)
    sign = np.sign(visible.mean(axis=0))
    vmin = visible.min(axis=0)
    vmax = visible.max(axis=0)
    spread = vmax - vmin
    u = rng.random((m, visible.shape[1]))
    lo = np.where(sign > 0, vmin - spread, vmax)
    rows = lo + u * spread
    mean_row = visible.mean(axis=0)
    return np.where(sign == 0, mean_row, rows)


def shejwalkar_attack(ctx, rng=None):
    """Magnitude attack: g = Avg(visible) + gamma * Delta, with gamma
    maximizing the plain (unnormalized) deviation."""
    spec = ctx.spec
    delta = perturbation_vector(spec.delta_kind, ctx.visible)
    before = ctx.baseline_aggregate()
    base = ctx.visible.mean(axis=0)

    def objective(gamma):
        after = ctx.attacked_aggregate(base + gamma * delta)
        return deviation_objective(before, after, normalized=False)

    gamma, _ = coordinate_search(objective, spec.lambda0, spec.lambda0,
                                 spec.decay, spec.tol, spec.max_iters,
                                 baselines=(0.0,))
    return base + gamma * delta


def normalized_stage1(ctx, before, delta):
    """Direction search: candidates AR_norm + lambda * Delta, objective per
    the variant's normalization; returns (lambda*, direction)."""
    spec = ctx.spec
    norm = np.linalg.norm(before)
    ar_norm = before / norm
    normalized = spec.variant != "III"

    def objective(lam):
        after = ctx.attacked_aggregate(ar_norm + lam * delta)
        return deviation_objective(before, after, normalized=normalized)

    lam, _ = coordinate_search(objective, spec.lambda0, spec.lambda0,
                               spec.decay, spec.tol, spec.max_iters,
                               baselines=(0.0,))
    return lam, ar_norm + lam * delta


def normalized_stage2(ctx, before, direction):
    """Magnitude search: candidates (direction/||direction||) * zeta."""
    spec = ctx.spec
    dnorm = np.linalg.norm(direction)
    if dnorm == 0.0:
        raise ValueError("stage-2 direction has zero norm")
    unit = direction / dnorm
    normalized = spec.variant != "III"

    def objective(zeta):
        after = ctx.attacked_aggregate(unit * zeta)
        return deviation_objective(before, after, normalized=normalized)

    zeta, _ = coordinate_search(objective, spec.zeta0, spec.zeta0,
                                spec.decay, spec.tol, spec.max_iters,
                                baselines=(1.0,))
    return unit * zeta


def normalized_attack(ctx):
    spec = ctx.spec
    before = ctx.baseline_aggregate()
    if np.linalg.norm(before) == 0.0:
        logger.warning("zero pre-attack aggregate; normalized attack inert")
        return None
    delta = perturbation_vector(spec.delta_kind, ctx.visible)
    if spec.variant == "II":
        direction = before / np.linalg.norm(before) + spec.lambda0 * delta
    else:
        _, direction = normalized_stage1(ctx, before, delta)
    if spec.variant == "I":
        return direction
    return normalized_stage2(ctx, before, direction)


def craft_updates(spec, updates, malicious_idx, aggregator, agg_ctx, rng):
    """Replace the malicious rows of `updates` per the active attack and
    return the poisoned matrix (the input is not modified)."""
    spec.validate()
    malicious_idx = np.asarray(malicious_idx, dtype=int)
    if spec.kind in ("none", "random_action") or len(malicious_idx) == 0:
        return updates
    out = np.array(updates, dtype=float)
    m, d = len(malicious_idx), updates.shape[1]
    if spec.kind == "random_noise":
        out[malicious_idx] = random_noise_updates(m, d, rng, spec.noise_var)
        return out
    ctx = AttackContext(spec, updates, malicious_idx, aggregator, agg_ctx)
    if spec.kind == "trim":
        out[malicious_idx] = trim_attack(ctx, rng)
    elif spec.kind == "shejwalkar":
        out[malicious_idx] = shejwalkar_attack(ctx)
    elif spec.kind == "normalized":
        crafted = normalized_attack(ctx)
        if crafted is not None:
            out[malicious_idx] = crafted
    return out
