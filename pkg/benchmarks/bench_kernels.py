"""Compare the JIT-compiled kernels against the pure-numpy fallback.

Runs the same rollout and aggregation workload under both backends and
reports throughput. Backend selection happens at import time via the
FRLGUARD_NO_NUMBA environment variable, so the script re-invokes itself
in a subprocess for each backend.

Usage: python3 benchmarks/bench_kernels.py [--episodes N] [--gm-sets N]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def run_workload(episodes, gm_sets):
    import numpy as np

    from frlguard import aggregators, envs, kernels, policy, rollouts

    arch = policy.ArchSpec(input_dim=4, hidden=(16, 16), activation="relu",
                           head="categorical", out_dim=2)
    env = envs.make_env("cartpole")
    theta = policy.init_params(arch, rollouts.stream(0, rollouts.TAG_INIT, 0))

    # warm-up triggers JIT compilation; excluded from timing
    rollouts.agent_update(arch, env, theta, 1, 500, 0.999, 393.0,
                          rollouts.stream(0, rollouts.TAG_AGENT, 0, 0))

    checksum = hashlib.sha256()
    t0 = time.perf_counter()
    steps = 0
    for ep in range(episodes):
        update, stats = rollouts.agent_update(
            arch, env, theta, 1, 500, 0.999, 393.0,
            rollouts.stream(0, rollouts.TAG_AGENT, 0, ep + 1))
        steps += stats.total_steps
        checksum.update(update.tobytes())
    t_roll = time.perf_counter() - t0

    rng = np.random.default_rng(1)
    stacks = [rng.normal(0.0, 1.0, (30, arch.param_dim))
              for _ in range(gm_sets)]
    t0 = time.perf_counter()
    for s in stacks:
        med = aggregators.geometric_median(s)
        checksum.update(med.tobytes())
    t_gm = time.perf_counter() - t0

    return {
        "backend": "numba" if kernels.USE_NUMBA else "numpy",
        "episodes": episodes,
        "env_steps": steps,
        "rollout_seconds": t_roll,
        "steps_per_second": steps / t_roll,
        "gm_sets": gm_sets,
        "gm_seconds": t_gm,
        "checksum": checksum.hexdigest(),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--gm-sets", type=int, default=20)
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.worker:
        print(json.dumps(run_workload(args.episodes, args.gm_sets)))
        return 0

    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, FRLGUARD_NO_NUMBA=flag)
        # the fallback is far slower; shrink its workload and scale rates
        scale = 1 if flag == "0" else 10
        cmd = [sys.executable, os.path.abspath(__file__), "--worker",
               "--episodes", str(max(1, args.episodes // scale)),
               "--gm-sets", str(max(1, args.gm_sets // scale))]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True,
                             check=True)
        r = json.loads(out.stdout)
        results[r["backend"]] = r

    for name, r in results.items():
        print(f"{name:>6}: {r['steps_per_second']:>10.0f} env steps/s "
              f"({r['episodes']} episodes, {r['rollout_seconds']:.2f}s), "
              f"geometric median {r['gm_sets']} sets in {r['gm_seconds']:.2f}s")
    nb, py = results["numba"], results["numpy"]
    print(f"speedup: {nb['steps_per_second'] / py['steps_per_second']:.1f}x "
          f"(rollouts)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
