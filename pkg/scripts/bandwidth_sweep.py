"""CR/CAR/AQT/SR of the baselines across RSU bandwidths; writes sweep.csv."""
import argparse
from pathlib import Path

from aovsim.config import SimulationConfig, load_config
from aovsim.sweep import ExperimentSpec, run_sweep, sweep_csv

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--mhz", default="1,2,3,4,5")
    ap.add_argument("--policies", default="random,static,greedy-sensing")
    ap.add_argument("--replications", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/bandwidth")
    a = ap.parse_args()
    cfg = load_config(a.config) if a.config else SimulationConfig()
    spec = ExperimentSpec(cfg, "bandwidth", tuple(float(x) * 1e6 for x in a.mhz.split(",")),
                          tuple(a.policies.split(",")), a.replications)
    rows, summary = run_sweep(spec, a.jobs)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(rows, summary))
    for s in summary:
        if s["kind"] == "mean":
            print(f"{s['axis_value'] / 1e6:4.1f} MHz  {s['policy']:15s} CR {s['CR']:8.2f}  SR {s['SR']:.3f}")
