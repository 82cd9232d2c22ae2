"""Experiment orchestration: config parsing, training runs, sweeps over
the experiment axes, and metrics emission.

Metrics go to three files per run: metrics.jsonl (one record per
evaluation), rounds.jsonl (one record per global round), and summary.csv
with header `trajectories,reward,config_digest`. Wall-clock timing lives
in a separate run_info.json so the metrics files are byte-reproducible.
"""

import csv
import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregators, attacks, ensemble, envs, fedcore, policy, rollouts

# per-environment defaults for the keys the dataclass does not pin
ENV_PROFILES = {
    "cartpole": {},
    "cartpole_continuous": {
        "gamma": 0.995, "horizon": 1000, "batch_size": 32,
        "zeta0": 0.2, "fedpg_b": 12, "fedpg_sigma": 0.25,
        "baseline": 197.0,
    },
}

HETEROGENEOUS_NOISE_VAR = 0.1


@dataclass
class ExperimentConfig:
    env: str = "cartpole"
    reward_noise_var: float = 0.0
    heterogeneous: bool = False
    n_agents: int = 30
    malicious_fraction: float = 0.3
    malicious_ids: tuple | None = None
    k_groups: int = 5
    aggregator: str = "fedavg"
    trim_c: int | None = None
    flame_lambda: float = 0.001
    fedpg_b: int = 4
    fedpg_sigma: float = 0.06
    fedpg_delta: float = 0.6
    gm_eps: float = 1e-8
    gm_iters: int = 500
    attack: str = "none"
    knowledge: str = "full"
    variant: str = "IV"
    delta: str = "sgn"
    lambda0: float = 0.83
    zeta0: float = 0.03
    attack_start_trajectories: int = 0
    attack_max_iters: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    gamma: float = 0.999
    horizon: int = 500
    # constant return baseline; defaults to the discounted return of a
    # cap-length episode, which zeroes the update variance at the optimum
    # (with baseline 0 the policy collapses after reaching the cap)
    baseline: float = 393.0
    total_trajectories: int = 5000
    eval_interval: int = 250
    eval_episodes: int = 10
    seed: int = 0
    continuous_vote: str = "geomedian"
    save_checkpoints: bool = False
    hidden: tuple | None = None
    activation: str | None = None
    raw_logits: bool = True

    def validate(self):
        if self.env not in ENV_PROFILES:
            raise ValueError(f"unknown env {self.env!r}")
        if not 1 <= self.k_groups <= self.n_agents:
            raise ValueError("need 1 <= K <= n_agents")
        if not 0.0 <= self.malicious_fraction < 1.0:
            raise ValueError("malicious_fraction must be in [0, 1)")
        if self.batch_size < 1 or self.total_trajectories < 0:
            raise ValueError("invalid trajectory budget")
        if self.continuous_vote not in ("geomedian", "fedavg", "trimmed_mean"):
            raise ValueError(f"unknown continuous_vote {self.continuous_vote!r}")
        self.aggregator_spec().validate(self.group_sizes_min())
        self.attack_spec().validate()

    def group_sizes_min(self):
        return self.n_agents // self.k_groups

    def aggregator_spec(self):
        return aggregators.AggregatorSpec(
            kind=self.aggregator, trim_c=self.trim_c, gm_eps=self.gm_eps,
            gm_iters=self.gm_iters, flame_lambda=self.flame_lambda,
            fedpg_b=self.fedpg_b, fedpg_sigma=self.fedpg_sigma,
            fedpg_delta=self.fedpg_delta)

    def attack_spec(self):
        return attacks.AttackSpec(
            kind=self.attack, knowledge=self.knowledge, variant=self.variant,
            delta_kind=self.delta, lambda0=self.lambda0, zeta0=self.zeta0,
            start_after=self.attack_start_trajectories,
            max_iters=self.attack_max_iters)

    def env_config(self):
        var = self.reward_noise_var
        if self.heterogeneous and var == 0.0:
            var = HETEROGENEOUS_NOISE_VAR
        return envs.make_env(self.env, reward_noise_var=var)

    def arch(self):
        if self.env == "cartpole":
            hidden = self.hidden or (16, 16)
            activation = self.activation or "relu"
            return policy.ArchSpec(input_dim=4, hidden=tuple(hidden),
                                   activation=activation, head="categorical",
                                   out_dim=2, raw_logits=self.raw_logits)
        hidden = self.hidden or (64, 64)
        activation = self.activation or "tanh"
        return policy.ArchSpec(input_dim=4, hidden=tuple(hidden),
                               activation=activation, head="gaussian",
                               out_dim=1, lo=envs.CONTINUOUS_LO,
                               hi=envs.CONTINUOUS_HI)

    def settings(self):
        return fedcore.RoundSettings(
            master_seed=self.seed, batch_size=self.batch_size,
            horizon=self.horizon, gamma=self.gamma, baseline=self.baseline,
            eta=self.learning_rate)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["malicious_ids"] = (None if self.malicious_ids is None
                              else list(self.malicious_ids))
        d["hidden"] = None if self.hidden is None else list(self.hidden)
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_BOOL = {"true": True, "1": True, "yes": True,
         "false": False, "0": False, "no": False}

# config-file key -> dataclass field, for names that differ
KEY_ALIASES = {"K": "k_groups", "attack_start": "attack_start_trajectories",
               "eta": "learning_rate"}


def _coerce(name, raw):
    raw = raw.strip()
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if name not in fields:
        raise ValueError(f"unknown config key {name!r}")
    ftype = str(fields[name].type)
    if raw.lower() in ("none", "null") and "None" in ftype:
        return None
    if name in ("malicious_ids", "hidden"):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if "bool" in ftype:
        return _BOOL[raw.lower()]
    if "int" in ftype:
        return int(raw)
    if "float" in ftype:
        return float(raw)
    return raw


def config_from_dict(d):
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    resolved = {}
    for key, value in d.items():
        name = KEY_ALIASES.get(key, key)
        if name not in fields:
            raise ValueError(f"unknown config key {key!r}")
        resolved[name] = value
    profile = ENV_PROFILES.get(resolved.get("env", "cartpole"), {})
    for key, value in profile.items():
        resolved.setdefault(key, value)
    cfg = ExperimentConfig(**resolved)
    cfg.validate()
    return cfg


def parse_config(text):
    """Flat `key = value` lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        name = KEY_ALIASES.get(key, key)
        out[key] = _coerce(name, raw)
    return config_from_dict(out)


def load_config(path, overrides=None):
    cfg = parse_config(Path(path).read_text())
    if overrides:
        d = {KEY_ALIASES.get(k, k): v for k, v in overrides.items()}
        merged = cfg.to_dict()
        merged.update(d)
        cfg = config_from_dict(merged)
    return cfg


def dump_config(cfg):
    lines = []
    for key, value in sorted(cfg.to_dict().items()):
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


@dataclass
class MetricsRecord:
    trajectories: int
    reward: float
    per_group_rewards: list
    wall_clock: float
    config_digest: str

    def to_dict(self, with_wall_clock=False):
        d = {"trajectories": self.trajectories, "reward": self.reward,
             "per_group_rewards": self.per_group_rewards,
             "config_digest": self.config_digest}
        if with_wall_clock:
            d["wall_clock"] = self.wall_clock
        return d


def evaluate_test_reward(cfg, arch, env, thetas, traj_count):
    """Test reward: mean total reward over eval_episodes greedy episodes,
    driven by the single policy (K=1) or the per-step ensemble vote."""
    thetas = np.atleast_2d(thetas)
    k = thetas.shape[0]
    trim_c = math.ceil(cfg.malicious_fraction * k)
    trim_c = min(trim_c, (k - 1) // 2)
    per_group = []
    for g in range(k):
        rng = rollouts.stream(cfg.seed, rollouts.TAG_EVAL, traj_count, 1 + g)
        per_group.append(rollouts.evaluate_policy(
            arch, env, thetas[g], cfg.eval_episodes, rng))
    if k == 1:
        reward = per_group[0]
    else:
        rng = rollouts.stream(cfg.seed, rollouts.TAG_EVAL, traj_count, 0)
        reward = rollouts.evaluate_ensemble(
            arch, env, thetas, cfg.eval_episodes, rng,
            vote=cfg.continuous_vote, trim_c=trim_c,
            gm_eps=cfg.gm_eps, gm_iters=cfg.gm_iters)
    return reward, per_group


def run_experiment(cfg, out_dir=None):
    """Train for the trajectory budget, evaluating every eval_interval
    trajectories per agent; returns the list of MetricsRecords."""
    cfg.validate()
    t_start = time.time()
    arch = cfg.arch()
    env = cfg.env_config()
    settings = cfg.settings()
    digest = cfg.digest()
    roster = fedcore.make_roster(cfg.n_agents, cfg.malicious_fraction,
                                 cfg.malicious_ids)
    attack = cfg.attack_spec()
    rounds = math.ceil(cfg.total_trajectories / cfg.batch_size)

    out = Path(out_dir) if out_dir is not None else None
    metrics_f = rounds_f = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(dump_config(cfg))
        metrics_f = open(out / "metrics.jsonl", "w")
        rounds_f = open(out / "rounds.jsonl", "w")

    records = []

    def emit(traj_count, thetas):
        reward, per_group = evaluate_test_reward(cfg, arch, env, thetas,
                                                 traj_count)
        rec = MetricsRecord(trajectories=traj_count, reward=reward,
                            per_group_rewards=per_group,
                            wall_clock=time.time() - t_start,
                            config_digest=digest)
        records.append(rec)
        if metrics_f is not None:
            metrics_f.write(json.dumps(rec.to_dict()) + "\n")
            metrics_f.flush()

    def save_checkpoints(thetas, round_index):
        if out is None:
            return
        for g in range(thetas.shape[0]):
            gdir = out / "checkpoints" / f"group_{g}"
            gdir.mkdir(parents=True, exist_ok=True)
            policy.save_params(gdir / f"round_{round_index}.params",
                               arch, thetas[g])

    def round_callback(group, round_index, theta, record):
        if rounds_f is not None:
            rounds_f.write(json.dumps({"group": group, **record.to_dict()})
                           + "\n")

    last_eval = [0]

    def epoch_callback(round_index, thetas, traj_per_agent):
        due = (traj_per_agent // cfg.eval_interval
               > last_eval[0] // cfg.eval_interval)
        final = round_index == rounds - 1
        if due or final:
            emit(traj_per_agent, thetas)
            if cfg.save_checkpoints or final:
                save_checkpoints(thetas, round_index)
        last_eval[0] = traj_per_agent

    try:
        init_thetas = np.stack([
            policy.init_params(
                arch, rollouts.stream(cfg.seed, rollouts.TAG_INIT, g))
            for g in range(cfg.k_groups)])
        emit(0, init_thetas)
        if rounds == 0:
            save_checkpoints(init_thetas, 0)
        else:
            ensemble.train_ensemble(
                arch, env, roster, cfg.aggregator_spec(), attack, settings,
                rounds, cfg.k_groups,
                malicious_fraction=cfg.malicious_fraction,
                round_callback=round_callback, epoch_callback=epoch_callback)
    finally:
        if metrics_f is not None:
            metrics_f.close()
            rounds_f.close()

    if out is not None:
        with open(out / "summary.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["trajectories", "reward", "config_digest"])
            for rec in records:
                w.writerow([rec.trajectories, rec.reward, rec.config_digest])
        (out / "run_info.json").write_text(json.dumps(
            {"wall_clock": time.time() - t_start, "rounds": rounds,
             "config_digest": digest}, indent=2))
    return records


SWEEP_AXES = ("malicious_fraction", "n_agents", "K", "delta_kind", "variant",
              "knowledge", "attack_start", "continuous_vote", "heterogeneous")


def apply_axis(cfg, axis, value):
    d = cfg.to_dict()
    if axis == "malicious_fraction":
        d["malicious_fraction"] = float(value)
    elif axis == "n_agents":
        # "n" or "n:K" pairs (group count scales with agent count)
        if ":" in str(value):
            n, k = str(value).split(":")
            d["n_agents"], d["k_groups"] = int(n), int(k)
        else:
            d["n_agents"] = int(value)
    elif axis == "K":
        d["k_groups"] = int(value)
    elif axis == "delta_kind":
        d["delta"] = str(value)
    elif axis == "variant":
        d["variant"] = str(value)
    elif axis == "knowledge":
        d["knowledge"] = str(value)
    elif axis == "attack_start":
        d["attack_start_trajectories"] = int(value)
    elif axis == "continuous_vote":
        d["continuous_vote"] = str(value)
    elif axis == "heterogeneous":
        d["heterogeneous"] = _BOOL[str(value).lower()]
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    return config_from_dict(d)


def _run_sweep_point(args):
    cfg_dict, axis, value, point_dir = args
    try:
        cfg = apply_axis(config_from_dict(cfg_dict), axis, value)
        records = run_experiment(cfg, out_dir=point_dir)
        return value, [r.to_dict() for r in records], None
    except Exception as exc:  # per-point failures recorded, sweep continues
        if point_dir is not None:
            Path(point_dir).mkdir(parents=True, exist_ok=True)
            (Path(point_dir) / "error.txt").write_text(repr(exc))
        return value, None, repr(exc)


def run_sweep(cfg, axis, values, out_dir=None, workers=1):
    """One experiment per axis value with a constant master seed."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    jobs = []
    for value in values:
        point_dir = None
        if out_dir is not None:
            point_dir = str(Path(out_dir) / f"{axis}_{value}".replace(":", "x"))
        jobs.append((cfg.to_dict(), axis, value, point_dir))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sweep_point, jobs))
    else:
        results = [_run_sweep_point(j) for j in jobs]
    return {value: {"records": recs, "error": err}
            for value, recs, err in results}


def load_checkpoint_dir(run_dir):
    """Rebuild the trained (ensemble) policy from a run directory."""
    run_dir = Path(run_dir)
    cfg = parse_config((run_dir / "config.txt").read_text())
    ck = run_dir / "checkpoints"
    groups = sorted(ck.glob("group_*"), key=lambda p: int(p.name.split("_")[1]))
    if not groups:
        raise FileNotFoundError(f"no checkpoints under {ck}")
    thetas = []
    arch = None
    for gdir in groups:
        rounds_avail = sorted(gdir.glob("round_*.params"),
                              key=lambda p: int(p.stem.split("_")[1]))
        arch, theta = policy.load_params(rounds_avail[-1])
        thetas.append(theta)
    return cfg, arch, np.stack(thetas)
