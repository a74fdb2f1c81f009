"""Episode-level training loop with periodic evaluation and resumable checkpoints."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from aovsim.agents import CheckpointError, MultiAgentLearner, make_policy
from aovsim.config import SimulationConfig, derive_seed, seeded_rng, write_manifest
from aovsim.engine import RunMetrics, Scenario, build_scenario, run_episode

LEARNED = {"mdr-gba": "difference", "mac-gba": "shared"}
CURVE_FIELDS = ["episode", "agent", "critic_loss", "mean_reward"]
EVAL_FIELDS = ["episode", "CR", "AQT", "SR", "objective"]
STATE_FILE = "training_state.json"


def make_learner(sc: Scenario, policy: str | None = None) -> MultiAgentLearner:
    policy = policy or sc.cfg.agents.policy
    if policy not in LEARNED:
        raise ValueError(f"{policy!r} is not a learned policy")
    return MultiAgentLearner(
        sc.n_vehicles, sc.obs_dim, sc.n_categories, sc.cfg.agents,
        seeded_rng(sc.cfg.seed, "init"), LEARNED[policy],
    )


def eval_seeds(seed: int, n: int) -> list[int]:
    return [derive_seed(seed, f"eval/{k}") for k in range(n)]


def evaluate(sc: Scenario, policy, seeds: Sequence[int]) -> list[RunMetrics]:
    """Noise-free episodes of ``policy`` (a learner or a baseline name) over ``seeds``."""
    if isinstance(policy, str):
        policy = make_policy(policy)
    return [run_episode(sc, policy, s).metrics for s in seeds]


@dataclass
class TrainResult:
    learner: MultiAgentLearner
    curve: list[dict]
    eval_curve: list[dict]
    episodes_done: int


def _write_csv(path: Path, fields, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _read_csv(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (int(v) if k in ("episode", "agent") else float(v)) for k, v in r.items()})
    return out


def train(
    cfg: SimulationConfig,
    out_dir: str | Path | None = None,
    episodes: int | None = None,
    resume: bool = False,
    scenario: Scenario | None = None,
    policy: str | None = None,
    verbose: bool = False,
) -> TrainResult:
    """Train ``episodes`` episodes in total (counting those already in a resumed checkpoint).

    Episode ``e`` always uses the seed derived from ``train/episode/e``, so training
    5 episodes, stopping, and resuming to 10 matches an uninterrupted 10-episode run.
    """
    tc = cfg.training
    episodes = tc.episodes if episodes is None else episodes
    sc = scenario if scenario is not None else build_scenario(cfg)
    learner = make_learner(sc, policy)
    out = Path(out_dir) if out_dir is not None else None
    ckpt = out / "checkpoint" if out is not None else None
    curve: list[dict] = []
    eval_curve: list[dict] = []
    start = 0

    if resume:
        if ckpt is None or not (ckpt / STATE_FILE).exists():
            raise CheckpointError(f"no checkpoint to resume under {out}")
        try:
            state = json.loads((ckpt / STATE_FILE).read_text(encoding="utf-8"))
            start = int(state["episodes_done"])
            if state["policy"] != learner.name or int(state["seed"]) != cfg.seed:
                raise CheckpointError(
                    f"checkpoint is for policy {state['policy']} seed {state['seed']}, "
                    f"not {learner.name} seed {cfg.seed}"
                )
        except (ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"corrupt {ckpt / STATE_FILE}: {exc}") from exc
        learner.load(ckpt)
        curve = [r for r in _read_csv(out / "learning_curve.csv") if r["episode"] < start]
        eval_curve = [r for r in _read_csv(out / "eval_curve.csv") if r["episode"] < start]

    if out is not None:
        write_manifest(out, cfg, cfg.seed, policy=learner.name, episodes=episodes)

    seeds = eval_seeds(cfg.seed, tc.eval_episodes)
    for ep in range(start, episodes):
        res = run_episode(sc, learner, derive_seed(cfg.seed, f"train/episode/{ep}"),
                          learner=learner, train=True, explore=True)
        losses = learner.pop_losses()
        rewards = res.agent_rewards / max(sc.horizon, 1)
        for i in range(learner.n_agents):
            curve.append({"episode": ep, "agent": i, "critic_loss": float(losses[i]),
                          "mean_reward": float(rewards[i])})
        done = ep + 1
        if tc.eval_every and (done % tc.eval_every == 0 or done == episodes):
            ms = evaluate(sc, learner, seeds)
            eval_curve.append({
                "episode": ep,
                "CR": float(np.mean([m.CR for m in ms])),
                "AQT": float(np.mean([m.AQT for m in ms])),
                "SR": float(np.mean([m.SR for m in ms])),
                "objective": float(np.mean([m.objective for m in ms])),
            })
            if verbose:
                print(f"episode {done}/{episodes} eval CR {eval_curve[-1]['CR']:.3f}", flush=True)
        elif verbose:
            print(f"episode {done}/{episodes} train CR {res.metrics.CR:.3f}", flush=True)
        if out is not None and (done % tc.checkpoint_every == 0 or done == episodes):
            learner.save(ckpt)
            state = {"episodes_done": done, "policy": learner.name, "seed": cfg.seed}
            (ckpt / STATE_FILE).write_text(json.dumps(state, sort_keys=True) + "\n", encoding="utf-8")
            _write_csv(out / "learning_curve.csv", CURVE_FIELDS, curve)
            _write_csv(out / "eval_curve.csv", EVAL_FIELDS, eval_curve)
    return TrainResult(learner, curve, eval_curve, max(start, episodes))
