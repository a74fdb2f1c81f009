"""Train MDR-GBA and MAC-GBA on one scenario and compare against the baselines on paired seeds."""
import argparse
import math

import numpy as np

from aovsim.config import SimulationConfig, derive_seed, load_config
from aovsim.engine import build_scenario
from aovsim.training import eval_seeds, evaluate, train

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--evals", type=int, default=20)
    a = ap.parse_args()
    cfg = load_config(a.config) if a.config else SimulationConfig()
    sc = build_scenario(cfg)
    seeds = eval_seeds(derive_seed(cfg.seed, "compare"), a.evals)
    cr = {p: np.array([m.CR for m in evaluate(sc, p, seeds)]) for p in ("random", "static", "greedy-sensing")}
    for p in ("mdr-gba", "mac-gba"):
        cr[p] = np.array([m.CR for m in evaluate(sc, train(cfg, scenario=sc, episodes=a.episodes, policy=p).learner, seeds)])
    for p, x in cr.items():
        print(f"{p:15s} CR {x.mean():8.2f} +- {x.std(ddof=1):.2f}")
    wins = int(np.sum(cr["mdr-gba"] > cr["random"]))
    n = wins + int(np.sum(cr["mdr-gba"] < cr["random"]))
    p = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2 ** n
    print(f"mdr-gba beats random on {wins}/{n} paired seeds (one-sided sign test p={p:.2e})")
