"""Command-line front end: ``aovsim run | train | sweep``.

Outputs go under ``--out``, else ``$AOVSIM_OUT``, else ``./runs``.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from aovsim.agents import CheckpointError, make_policy
from aovsim.config import POLICIES, ConfigError, SimulationConfig, load_config, validate, with_overrides, write_manifest
from aovsim.engine import build_scenario, run_episode, write_outputs
from aovsim.training import LEARNED, train

OUT_ENV = "AOVSIM_OUT"


def _out_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def _config(args) -> SimulationConfig:
    cfg = load_config(args.config) if args.config else SimulationConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "policy", None) is not None:
        over["agents.policy"] = args.policy
    if over:
        cfg = with_overrides(cfg, over)
    validate(cfg)
    return cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}: {exc}") from exc


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out_root(args.out)
    sc = build_scenario(cfg)
    policy = cfg.agents.policy
    if policy in LEARNED:
        pol = train(cfg, scenario=sc, episodes=args.episodes, policy=policy).learner
    else:
        pol = make_policy(policy)
    result = run_episode(sc, pol, cfg.seed)
    write_manifest(out, cfg, cfg.seed, command="run", policy=policy, episodes=args.episodes)
    path = write_outputs(out, result)
    m = result.metrics
    print(f"{policy}: CR={m.CR:.4f} AQT={m.AQT:.4f} SR={m.SR:.4f} -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    if cfg.agents.policy not in LEARNED:
        raise ConfigError(f"agents.policy {cfg.agents.policy!r} is not learnable; use one of {', '.join(LEARNED)}")
    episodes = cfg.training.episodes if args.episodes is None else args.episodes
    if episodes < 0:
        raise ConfigError("--episodes must be >= 0")
    out = _out_root(args.out)
    if episodes == 0 and not args.resume:
        print("0 episodes requested; nothing to do")
        return 0
    res = train(cfg, out, episodes=episodes, resume=args.resume, verbose=not args.quiet)
    print(f"trained {res.episodes_done} episodes -> {out}")
    return 0


def cmd_sweep(args) -> int:
    from aovsim.sweep import ExperimentSpec, run_sweep, sweep_csv

    cfg = _config(args)
    spec = ExperimentSpec(
        base=cfg,
        axis=args.axis,
        values=tuple(_floats(args.values)),
        policies=tuple(p.strip() for p in args.policies.split(",") if p.strip()),
        replications=args.replications,
        train_episodes=args.episodes,
    )
    out = _out_root(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, cfg.seed, command="sweep", axis=spec.axis, values=list(spec.values),
                   policies=list(spec.policies), replications=spec.replications, episodes=args.episodes)
    rows, summary = run_sweep(spec, jobs=args.jobs)
    path = out / "sweep.csv"
    path.write_text(sweep_csv(rows, summary), encoding="utf-8")
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} cells ({failed} failed) -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aovsim", description="Age-of-View vehicular sensing simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON config (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--policy", choices=POLICIES, help="override agents.policy")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
        sp.add_argument("--episodes", type=int, help="training episodes for learned policies")

    r = sub.add_parser("run", help="run one evaluation episode")
    common(r)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train a learned policy with checkpoints")
    common(t)
    t.add_argument("--resume", action="store_true", help="continue from the checkpoint under --out")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="sweep RSU bandwidth or view size across policies")
    common(s)
    s.add_argument("--axis", choices=("bandwidth", "view-size"), default="bandwidth")
    s.add_argument("--values", required=True, help="comma list: Hz for bandwidth, multipliers for view-size")
    s.add_argument("--policies", default="random,greedy-sensing", help="comma list of policies")
    s.add_argument("--replications", type=int, default=1)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, OSError) as exc:
        print(f"aovsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
