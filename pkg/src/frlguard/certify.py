"""Closed-form certified robustness for the ensemble vote, with
brute-force oracles.

Discrete action spaces: the vote outcome for a state is unchanged as long
as at most n' = floor((v_x - v_y - 1[y<x]) / 2) group policies are
corrupted, where v_x and v_y are the highest and second-highest vote
frequencies (ties to the smaller action index). Continuous action
spaces: the geometric-median action moves by at most
2w(K - n') / (K - 2n') when n' < K/2 policies are corrupted, with w the
largest distance from any clean action to the clean median.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import aggregators


@dataclass
class CertifiedBound:
    kind: str  # "discrete_tolerance" | "continuous_displacement"
    value: float
    certified: bool
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value,
                "certified": self.certified, "inputs": self.inputs}


def top_two(counts):
    """Indices of the highest and second-highest frequencies, ties to the
    smaller index."""
    counts = np.asarray(counts)
    if counts.size < 2:
        raise ValueError("need at least 2 actions")
    x = int(np.argmax(counts))
    rest = counts.copy()
    rest[x] = -1
    y = int(np.argmax(rest))
    return x, y


def tolerance_discrete(counts):
    """Certified malicious-group tolerance for a vote profile."""
    counts = np.asarray(counts, dtype=int)
    if np.any(counts < 0):
        raise ValueError("negative vote count")
    x, y = top_two(counts)
    expr = counts[x] - counts[y] - (1 if y < x else 0)
    if expr < 0:
        return CertifiedBound(kind="discrete_tolerance", value=0.0,
                              certified=False,
                              inputs={"votes": counts.tolist(), "x": x, "y": y})
    n_prime = expr // 2
    return CertifiedBound(kind="discrete_tolerance", value=float(n_prime),
                          certified=True,
                          inputs={"votes": counts.tolist(), "x": x, "y": y})


def vote_winner(counts):
    return int(np.argmax(counts))


def flip_oracle_discrete(counts, budget):
    """Exhaustively reassign up to `budget` votes (a corrupted group may
    output ANY action) and report the worst-case winner.

    Returns (always_x, worst_profile, worst_winner).
    """
    counts = np.asarray(counts, dtype=int)
    k = int(counts.sum())
    if k > 9:
        raise ValueError("oracle is meant for K <= 9")
    x = vote_winner(counts)
    m = counts.size
    worst_profile, worst_winner = counts.tolist(), x
    for t in range(budget + 1):
        for removals in _compositions(t, m):
            if np.any(np.array(removals) > counts):
                continue
            base = counts - np.array(removals)
            for additions in _compositions(t, m):
                prof = base + np.array(additions)
                w = vote_winner(prof)
                if w != x:
                    return False, prof.tolist(), w
    return True, worst_profile, worst_winner


def _compositions(total, parts):
    """All tuples of `parts` non-negative ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def bound_continuous(k, n_prime, w):
    """Theorem bound on the geometric-median action displacement."""
    if not 0 <= n_prime < k / 2:
        raise ValueError(f"bound requires 0 <= n' < K/2, got n'={n_prime}, K={k}")
    if w < 0:
        raise ValueError("w must be >= 0")
    value = 2.0 * w * (k - n_prime) / (k - 2 * n_prime)
    return CertifiedBound(kind="continuous_displacement", value=value,
                          certified=True,
                          inputs={"K": k, "n_prime": n_prime, "w": w})


def action_spread(points):
    """w = max_k ||a_k - geometric_median(a)||."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    med = aggregators.geometric_median(points)
    return float(np.max(np.linalg.norm(points - med, axis=1))), med


def displacement_oracle_continuous(points, n_prime, trials, rng,
                                   magnitude_factor=1e3):
    """Empirical worst-case geometric-median displacement under random
    adversarial replacement of n_prime points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k, d = points.shape
    if not n_prime < k / 2:
        raise ValueError("oracle requires n' < K/2")
    w, med = action_spread(points)
    worst = 0.0
    for _ in range(trials):
        corrupted = points.copy()
        idx = rng.choice(k, size=n_prime, replace=False)
        for i in idx:
            direction = rng.standard_normal(d)
            norm = np.linalg.norm(direction)
            if norm > 0:
                direction /= norm
            radius = rng.random() * magnitude_factor * max(w, 1.0)
            corrupted[i] = med + radius * direction
        med2 = aggregators.geometric_median(corrupted)
        worst = max(worst, float(np.linalg.norm(med2 - med)))
    return worst
