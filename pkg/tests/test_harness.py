import json
from pathlib import Path

import numpy as np
import pytest

from frlguard import harness


def _tiny(**kw):
    base = dict(n_agents=4, malicious_fraction=0.0, k_groups=2,
                total_trajectories=8, batch_size=4, eval_interval=4,
                eval_episodes=2, seed=3)
    base.update(kw)
    return harness.config_from_dict(base)


def test_parse_config_types_and_comments():
    cfg = harness.parse_config("""
# experiment
env = cartpole
n_agents = 12   # inline comment
K = 3
malicious_fraction = 0.25
attack = normalized
variant = II
lambda0 = 0.5
heterogeneous = true
trim_c = none
""")
    assert cfg.n_agents == 12
    assert cfg.k_groups == 3
    assert cfg.malicious_fraction == 0.25
    assert cfg.variant == "II"
    assert cfg.lambda0 == 0.5
    assert cfg.heterogeneous is True
    assert cfg.trim_c is None


def test_parse_config_rejects_unknown_keys_and_bad_lines():
    with pytest.raises(ValueError):
        harness.parse_config("optimizer = adam")
    with pytest.raises(ValueError):
        harness.parse_config("env cartpole")


def test_env_profile_defaults():
    cont = harness.config_from_dict({"env": "cartpole_continuous"})
    assert cont.gamma == 0.995
    assert cont.horizon == 1000
    assert cont.batch_size == 32
    assert cont.baseline == 197.0
    # explicit keys beat the profile
    cont2 = harness.config_from_dict({"env": "cartpole_continuous",
                                      "gamma": 0.9})
    assert cont2.gamma == 0.9
    disc = harness.config_from_dict({})
    assert disc.gamma == 0.999 and disc.horizon == 500


def test_validation_errors():
    with pytest.raises(ValueError):
        harness.config_from_dict({"env": "pong"})
    with pytest.raises(ValueError):
        harness.config_from_dict({"n_agents": 4, "K": 5})
    with pytest.raises(ValueError):
        harness.config_from_dict({"malicious_fraction": 1.0})
    with pytest.raises(ValueError):
        harness.config_from_dict({"continuous_vote": "mode"})


def test_digest_stable_and_sensitive():
    a, b = _tiny(), _tiny()
    assert a.digest() == b.digest()
    assert a.digest() != _tiny(seed=4).digest()
    assert len(a.digest()) == 16


def test_config_roundtrip_through_dump():
    cfg = _tiny(attack="trim", malicious_fraction=0.25,
                malicious_ids=(1, 3), hidden=(8, 8))
    cfg2 = harness.parse_config(harness.dump_config(cfg))
    assert cfg2 == cfg


def test_arch_selection():
    disc = harness.config_from_dict({})
    a = disc.arch()
    assert a.head == "categorical" and a.hidden == (16, 16)
    assert a.activation == "relu"
    cont = harness.config_from_dict({"env": "cartpole_continuous"})
    g = cont.arch()
    assert g.head == "gaussian" and g.hidden == (64, 64)
    assert g.activation == "tanh" and g.lo == -3.0


def test_run_experiment_outputs(tmp_path):
    cfg = _tiny()
    records = harness.run_experiment(cfg, out_dir=tmp_path)
    assert (tmp_path / "metrics.jsonl").exists()
    assert (tmp_path / "rounds.jsonl").exists()
    assert (tmp_path / "config.txt").exists()
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "trajectories,reward,config_digest"
    assert len(lines) == len(records) + 1
    # trajectory counts strictly increase across records
    trajs = [r.trajectories for r in records]
    assert trajs == sorted(set(trajs))
    assert trajs[0] == 0 and trajs[-1] == 8
    for rec in records:
        assert rec.config_digest == cfg.digest()
    # checkpoints for the final round exist for every group
    final = json.loads((tmp_path / "metrics.jsonl").read_text().splitlines()[-1])
    assert final["trajectories"] == 8
    assert (tmp_path / "checkpoints" / "group_0").is_dir()
    assert (tmp_path / "checkpoints" / "group_1").is_dir()


def test_rerun_is_byte_identical(tmp_path):
    cfg = _tiny(attack="normalized", malicious_fraction=0.5,
                aggregator="trimmed_mean")
    harness.run_experiment(cfg, out_dir=tmp_path / "a")
    harness.run_experiment(cfg, out_dir=tmp_path / "b")
    for name in ("metrics.jsonl", "summary.csv", "rounds.jsonl", "config.txt"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes(), name


def test_checkpoint_reload_and_eval(tmp_path):
    cfg = _tiny()
    harness.run_experiment(cfg, out_dir=tmp_path)
    cfg2, arch, thetas = harness.load_checkpoint_dir(tmp_path)
    assert cfg2.digest() == cfg.digest()
    assert thetas.shape == (2, arch.param_dim)
    env = cfg2.env_config()
    r1, per1 = harness.evaluate_test_reward(cfg2, arch, env, thetas, 8)
    r2, per2 = harness.evaluate_test_reward(cfg2, arch, env, thetas, 8)
    assert r1 == r2 and per1 == per2  # fixed seed -> identical evaluation


def test_sweep_runs_each_value_and_records_failures(tmp_path):
    cfg = _tiny()
    res = harness.run_sweep(cfg, "K", [1, 2], out_dir=tmp_path)
    assert set(res) == {1, 2}
    assert res[1]["error"] is None and res[2]["error"] is None
    assert len(res[1]["records"]) >= 1
    # a failing point is recorded without killing the sweep
    res2 = harness.run_sweep(cfg, "K", [2, 99], out_dir=tmp_path / "s2")
    assert res2[2]["error"] is None
    assert res2[99]["error"] is not None
    assert (tmp_path / "s2" / "K_99" / "error.txt").exists()


def test_sweep_n_agents_pairs():
    cfg = _tiny()
    res = harness.run_sweep(cfg, "n_agents", ["4:2", "6:3"])
    assert res["4:2"]["error"] is None
    assert res["6:3"]["error"] is None
    with pytest.raises(ValueError):
        harness.run_sweep(cfg, "learning_rate", [1])


def test_k1_sweep_point_equals_single_run():
    cfg = _tiny()
    sweep = harness.run_sweep(cfg, "K", [1])
    single = harness.run_experiment(_tiny(k_groups=1))
    assert sweep[1]["records"] == [r.to_dict() for r in single]
