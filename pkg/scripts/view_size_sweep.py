"""Baselines across view-size multipliers (0.25x to 2x of 6.46 MB); writes sweep.csv."""
import argparse
from pathlib import Path

from aovsim.config import SimulationConfig, load_config
from aovsim.sweep import ExperimentSpec, run_sweep, sweep_csv

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--multipliers", default="0.25,0.5,1,2")
    ap.add_argument("--policies", default="random,static,greedy-sensing")
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/view_size")
    a = ap.parse_args()
    cfg = load_config(a.config) if a.config else SimulationConfig()
    spec = ExperimentSpec(cfg, "view-size", tuple(float(x) for x in a.multipliers.split(",")),
                          tuple(a.policies.split(",")), a.replications)
    rows, summary = run_sweep(spec, a.jobs)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(rows, summary))
    for s in summary:
        if s["kind"] == "mean":
            print(f"{s['axis_value']:5.2f}x ({s['mean_view_mb']:5.2f} MB)  {s['policy']:15s} CR {s['CR']:8.2f}")
