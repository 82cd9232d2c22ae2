"""frlguard: a deterministic, seedable testbed for poisoning attacks and
provably robust defenses in federated reinforcement learning."""

from . import (aggregators, attacks, certify, ensemble, envs, fedcore,
               harness, kernels, policy, rollouts)

__version__ = "0.1.0"

__all__ = ["aggregators", "attacks", "certify", "ensemble", "envs",
           "fedcore", "harness", "kernels", "policy", "rollouts",
           "__version__"]
