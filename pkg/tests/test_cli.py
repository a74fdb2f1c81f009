import json

import pytest

from aovsim.cli import main
from aovsim.config import ConfigError, config_to_dict, with_overrides
from aovsim.sweep import METRICS, ExperimentSpec, read_sweep_csv, run_sweep


@pytest.fixture
def cfg_file(small_cfg, tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(config_to_dict(small_cfg)))
    return p


def test_run_writes_outputs(cfg_file, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg_file), "--policy", "random", "--out", str(out)]) == 0
    assert (out / "metrics.csv").exists() and (out / "manifest.json").exists()


def test_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) != 0
    assert "missing.yaml" in capsys.readouterr().err


def test_seed_determinism_and_manifest_reproduces(cfg_file, tmp_path):
    args = ["run", "--config", str(cfg_file), "--policy", "greedy-sensing", "--seed", "7"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    replay = tmp_path / "replay.json"
    replay.write_text(json.dumps(manifest["config"]))
    main(["run", "--config", str(replay), "--out", str(tmp_path / "c")])
    assert (tmp_path / "c" / "metrics.csv").read_bytes() == a


def test_out_env_var(cfg_file, tmp_path, monkeypatch):
    monkeypatch.setenv("AOVSIM_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", str(cfg_file), "--policy", "static"]) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()


def test_train_zero_episodes(cfg_file, tmp_path):
    assert main(["train", "--config", str(cfg_file), "--episodes", "0", "--out", str(tmp_path / "t")]) == 0
    assert not (tmp_path / "t" / "checkpoint").exists()


def test_train_resume_equivalence(cfg_file, tmp_path):
    base = ["train", "--config", str(cfg_file), "--quiet"]
    assert main(base + ["--episodes", "4", "--out", str(tmp_path / "full")]) == 0
    assert main(base + ["--episodes", "2", "--out", str(tmp_path / "part")]) == 0
    assert main(base + ["--episodes", "4", "--resume", "--out", str(tmp_path / "part")]) == 0
    for name in ("learning_curve.csv", "eval_curve.csv"):
        assert (tmp_path / "full" / name).read_text() == (tmp_path / "part" / name).read_text()


def test_train_corrupt_checkpoint_exits_nonzero(cfg_file, tmp_path, capsys):
    out = tmp_path / "t"
    main(["train", "--config", str(cfg_file), "--episodes", "1", "--quiet", "--out", str(out)])
    (out / "checkpoint" / "learner.npz").write_bytes(b"\x00")
    assert main(["train", "--config", str(cfg_file), "--episodes", "2", "--resume", "--out", str(out)]) != 0
    assert "checkpoint" in capsys.readouterr().err


def test_train_rejects_fixed_policy(cfg_file, tmp_path):
    assert main(["train", "--config", str(cfg_file), "--policy", "random", "--out", str(tmp_path)]) != 0


def test_sweep_cardinality_and_summaries(cfg_file, tmp_path):
    out = tmp_path / "sw"
    rc = main(["sweep", "--config", str(cfg_file), "--axis", "bandwidth", "--values", "3e6,4e6,5e6",
               "--policies", "random,static", "--replications", "3", "--jobs", "2", "--out", str(out)])
    assert rc == 0
    rows = read_sweep_csv(out / "sweep.csv")
    data = [r for r in rows if r["kind"] == "row"]
    assert len(data) == 18 and not any(r["error"] for r in data)
    for s in (r for r in rows if r["kind"] == "mean"):
        cell = [r for r in data if r["axis_value"] == s["axis_value"] and r["policy"] == s["policy"]]
        for k in METRICS:
            assert abs(sum(r[k] for r in cell) / len(cell) - s[k]) <= 1e-9 * max(1.0, abs(s[k]))
    assert (out / "manifest.json").exists()


def test_sweep_order_independent_of_jobs(small_cfg):
    spec = ExperimentSpec(small_cfg, "bandwidth", (1e6, 3e6), ("random",), 2)
    assert run_sweep(spec, jobs=1) == run_sweep(spec, jobs=2)


def test_view_multiplier_sizes(small_cfg):
    # ten vehicles, so the 2x view (about 26 cells) fits the 50-cell grid
    spec = ExperimentSpec(with_overrides(small_cfg, {"vehicles.count": 10}), "view-size", (0.25, 0.5, 1.0, 2.0), ("static",), 1)
    rows, _ = run_sweep(spec)
    for r, target in zip(rows, (1.62, 3.23, 6.46, 12.9)):
        assert r["mean_view_mb"] == pytest.approx(target, rel=0.1)


def test_sweep_spec_errors(small_cfg):
    with pytest.raises(ConfigError):
        ExperimentSpec(small_cfg, "bandwidth", (), ("random",))
    with pytest.raises(ConfigError):
        ExperimentSpec(small_cfg, "bandwidth", (-1.0,), ("random",))
    with pytest.raises(ConfigError):
        ExperimentSpec(small_cfg, "bandwidth", (1e6,), ("random",), 0)


def test_failed_cell_is_marked(small_cfg):
    # 40x the view size needs more cells than 4 vehicles x 5 categories hold
    spec = ExperimentSpec(small_cfg, "view-size", (1.0, 40.0), ("random",), 1)
    rows, summary = run_sweep(spec)
    assert rows[0]["error"] == "" and rows[1]["error"].startswith("ERROR")
    assert summary[2]["error"] == "1 failed"


def test_empty_axis_exits_nonzero(cfg_file, tmp_path):
    assert main(["sweep", "--config", str(cfg_file), "--values", "", "--out", str(tmp_path)]) != 0
