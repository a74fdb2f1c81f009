import numpy as np
import pytest

from aovsim.agents import CheckpointError
from aovsim.engine import build_scenario
from aovsim.training import evaluate, make_learner, train


def _text(p):
    return p.read_text()


def test_zero_episodes_returns_untrained(small_cfg):
    sc = build_scenario(small_cfg)
    fresh = make_learner(sc)
    res = train(small_cfg, episodes=0, scenario=sc)
    x = np.random.default_rng(0).random(sc.obs_dim)
    assert np.array_equal(res.learner.agents[0].actor(x), fresh.agents[0].actor(x))
    assert res.curve == [] and res.eval_curve == []


def test_resume_matches_uninterrupted(small_cfg, tmp_path):
    train(small_cfg, tmp_path / "full", episodes=4)
    train(small_cfg, tmp_path / "split", episodes=2)
    train(small_cfg, tmp_path / "split", episodes=4, resume=True)
    for name in ("learning_curve.csv", "eval_curve.csv"):
        assert _text(tmp_path / "full" / name) == _text(tmp_path / "split" / name)


def test_same_seed_same_curves(small_cfg, tmp_path):
    a = train(small_cfg, tmp_path / "a", episodes=2)
    b = train(small_cfg, tmp_path / "b", episodes=2)
    assert a.curve == b.curve
    assert _text(tmp_path / "a" / "learning_curve.csv") == _text(tmp_path / "b" / "learning_curve.csv")


def test_corrupt_checkpoint_is_explicit(small_cfg, tmp_path):
    train(small_cfg, tmp_path, episodes=1)
    (tmp_path / "checkpoint" / "agent_000" / "networks.npz").write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        train(small_cfg, tmp_path, episodes=2, resume=True)
    (tmp_path / "checkpoint" / "training_state.json").write_text("{not json")
    with pytest.raises(CheckpointError):
        train(small_cfg, tmp_path, episodes=2, resume=True)


def test_resume_without_checkpoint(small_cfg, tmp_path):
    with pytest.raises(CheckpointError):
        train(small_cfg, tmp_path, episodes=2, resume=True)


def test_curve_columns(small_cfg, tmp_path):
    res = train(small_cfg, tmp_path, episodes=2)
    header = _text(tmp_path / "learning_curve.csv").splitlines()[0]
    assert header == "episode,agent,critic_loss,mean_reward"
    assert len(res.curve) == 2 * small_cfg.vehicles.count
    assert (tmp_path / "manifest.json").exists()


def test_evaluate_baseline_by_name(small_cfg):
    ms = evaluate(build_scenario(small_cfg), "random", [1, 2])
    assert len(ms) == 2 and ms[0] != ms[1]
