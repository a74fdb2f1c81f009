"""Experiment sweeps over RSU bandwidth or view size, one CSV of rows plus mean/std summaries."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from aovsim.agents import make_policy
from aovsim.config import POLICIES, ConfigError, SimulationConfig, derive_seed, validate, with_overrides
from aovsim.engine import build_scenario, run_episode
from aovsim.training import LEARNED, train

AXES = {"bandwidth": "rsu.bandwidth", "view-size": "views.mean_size_bytes"}
METRICS = ["CR", "CAR_timeliness", "CAR_completeness", "CAR_consistency", "AQT", "SR", "mean_view_mb"]
FIELDS = ["kind", "axis", "axis_value", "policy", "replication", *METRICS, "error"]


@dataclass(frozen=True)
class ExperimentSpec:
    """``axis`` is "bandwidth" (values in Hz) or "view-size" (multipliers of the base mean view size)."""

    base: SimulationConfig
    axis: str
    values: tuple[float, ...]
    policies: tuple[str, ...]
    replications: int = 1
    train_episodes: int | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {', '.join(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep axis has no values")
        if any(not (v > 0 and math.isfinite(v)) for v in self.values):
            raise ConfigError(f"sweep axis values must be positive, got {list(self.values)}")
        if not self.policies:
            raise ConfigError("sweep needs at least one policy")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")

    def cell_config(self, value: float, replication: int) -> SimulationConfig:
        key = AXES[self.axis]
        v = value if self.axis == "bandwidth" else value * self.base.views.mean_size_bytes
        seed = derive_seed(self.base.seed, f"replication/{replication}")
        cfg = with_overrides(self.base, {key: v, "seed": seed})
        validate(cfg)
        return cfg

    def cells(self) -> list[tuple[float, str, int]]:
        return [(v, p, r) for v in self.values for p in self.policies for r in range(self.replications)]


def run_cell(spec: ExperimentSpec, value: float, policy: str, replication: int) -> dict:
    row = {"kind": "row", "axis": spec.axis, "axis_value": value, "policy": policy, "replication": replication}
    try:
        cfg = spec.cell_config(value, replication)
        sc = build_scenario(cfg)
        if policy in LEARNED:
            pol = train(cfg, scenario=sc, episodes=spec.train_episodes, policy=policy).learner
        else:
            pol = make_policy(policy)
        m = run_episode(sc, pol, derive_seed(cfg.seed, "eval/0")).metrics
        row.update(CR=m.CR, CAR_timeliness=m.CAR[0], CAR_completeness=m.CAR[1], CAR_consistency=m.CAR[2],
                   AQT=m.AQT, SR=m.SR, mean_view_mb=m.mean_view_bits / 8e6, error="")
    except Exception as exc:  # a failed cell is recorded, the sweep goes on
        row.update({k: float("nan") for k in METRICS})
        row["error"] = f"ERROR: {type(exc).__name__}: {exc}"
    return row


def _run_cell_args(args):
    return run_cell(*args)


def summarize(spec: ExperimentSpec, rows: Sequence[dict]) -> list[dict]:
    """Mean and sample std (ddof=1; 0 for a single replication) per (axis value, policy), skipping failed cells."""
    out = []
    for v in spec.values:
        for p in spec.policies:
            ok = [r for r in rows if r["axis_value"] == v and r["policy"] == p and not r["error"]]
            for kind in ("mean", "std"):
                s = {"kind": kind, "axis": spec.axis, "axis_value": v, "policy": p, "replication": "", "error": ""}
                for k in METRICS:
                    x = np.array([r[k] for r in ok], dtype=float)
                    if not len(x):
                        s[k] = float("nan")
                    elif kind == "mean":
                        s[k] = float(np.mean(x))
                    else:
                        s[k] = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
                if len(ok) < spec.replications:
                    s["error"] = f"{spec.replications - len(ok)} failed"
                out.append(s)
    return out


def run_sweep(spec: ExperimentSpec, jobs: int = 1) -> tuple[list[dict], list[dict]]:
    cells = [(spec, *c) for c in spec.cells()]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, cells))  # map keeps submission order
    else:
        rows = [run_cell(*c) for c in cells]
    return rows, summarize(spec, rows)


def sweep_csv(rows: Sequence[dict], summary: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, FIELDS, lineterminator="\n")
    w.writeheader()
    for r in [*rows, *summary]:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def read_sweep_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["axis_value"] = float(r["axis_value"])
        for k in METRICS:
            r[k] = float(r[k])
    return rows
