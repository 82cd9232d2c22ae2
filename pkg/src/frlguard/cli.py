"""Command-line entry points: run, sweep, eval, certify."""

import argparse
import json
import logging
import sys

import numpy as np

from . import certify, harness


def build_parser():
    p = argparse.ArgumentParser(
        prog="frlguard",
        description="Deterministic testbed for poisoning attacks and "
                    "certified defenses in federated reinforcement learning.")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="enable debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train per a config file")
    run.add_argument("--config", required=True, help="path to a key=value file")
    run.add_argument("--seed", type=int, default=None,
                     help="override the master seed")
    run.add_argument("--out", default=None, help="output directory")

    sw = sub.add_parser("sweep", help="repeat a run across one axis")
    sw.add_argument("--config", required=True)
    sw.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    sw.add_argument("--values", required=True,
                    help="comma-separated axis values")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--out", default=None)
    sw.add_argument("--workers", type=int, default=1)

    ev = sub.add_parser("eval", help="evaluate a saved run's checkpoints")
    ev.add_argument("--checkpoint", required=True,
                    help="run directory containing config.txt and checkpoints/")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=None)

    ce = sub.add_parser("certify", help="certified robustness bounds")
    ce.add_argument("--votes", default=None,
                    help="comma-separated vote counts per action index")
    ce.add_argument("--indices", action="store_true",
                    help="also print the top-two action indices")
    ce.add_argument("--continuous", action="store_true")
    ce.add_argument("--k", type=int, default=None, help="number of groups")
    ce.add_argument("--nprime", type=int, default=None,
                    help="corrupted-group budget")
    ce.add_argument("--w", type=float, default=None,
                    help="max clean action distance to the clean median")
    return p


def cmd_run(args):
    overrides = {} if args.seed is None else {"seed": args.seed}
    cfg = harness.load_config(args.config, overrides)
    records = harness.run_experiment(cfg, out_dir=args.out)
    for rec in records:
        print(json.dumps(rec.to_dict()))
    return 0


def cmd_sweep(args):
    overrides = {} if args.seed is None else {"seed": args.seed}
    cfg = harness.load_config(args.config, overrides)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    results = harness.run_sweep(cfg, args.axis, values, out_dir=args.out,
                                workers=args.workers)
    failed = 0
    for value, res in results.items():
        if res["error"] is not None:
            failed += 1
            print(json.dumps({"axis": args.axis, "value": value,
                              "error": res["error"]}))
        else:
            final = res["records"][-1] if res["records"] else None
            print(json.dumps({"axis": args.axis, "value": value,
                              "final": final}))
    return 1 if failed == len(results) else 0


def cmd_eval(args):
    cfg, arch, thetas = harness.load_checkpoint_dir(args.checkpoint)
    if args.seed is not None:
        cfg = harness.config_from_dict({**cfg.to_dict(), "seed": args.seed})
    cfg = harness.config_from_dict({**cfg.to_dict(),
                                    "eval_episodes": args.episodes})
    env = cfg.env_config()
    reward, per_group = harness.evaluate_test_reward(
        cfg, arch, env, thetas, traj_count=cfg.total_trajectories)
    print(json.dumps({"reward": reward, "per_group_rewards": per_group,
                      "episodes": args.episodes,
                      "config_digest": cfg.digest()}))
    return 0


def cmd_certify(args):
    if args.continuous:
        if args.k is None or args.nprime is None or args.w is None:
            raise SystemExit("--continuous requires --k, --nprime and --w")
        bound = certify.bound_continuous(args.k, args.nprime, args.w)
        print(json.dumps(bound.to_dict()))
        return 0
    if args.votes is None:
        raise SystemExit("provide --votes or --continuous")
    counts = np.array([int(v) for v in args.votes.split(",")], dtype=int)
    bound = certify.tolerance_discrete(counts)
    out = bound.to_dict()
    if not args.indices:
        out["inputs"] = {"votes": out["inputs"]["votes"]}
    print(json.dumps(out))
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "eval": cmd_eval,
            "certify": cmd_certify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
