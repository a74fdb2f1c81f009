"""Trajectory ingestion, synthetic traces, and short-horizon location prediction.

A trace is a ``(horizon, 2)`` float array of positions in meters on the slot
grid; rows are NaN where the vehicle is not present in the data.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

EARTH_RADIUS = 6_371_008.8  # meters, mean radius


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryPoint:
    vehicle: int
    t: float
    position: tuple[float, float]


@dataclass(frozen=True)
class Prediction:
    horizon_h: int
    predicted_positions: np.ndarray  # (h, 2)
    mean_predicted_distance: float


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# --------------------------------------------------------------------------
# ingestion


def project(lon: np.ndarray, lat: np.ndarray, origin: tuple[float, float]) -> np.ndarray:
    """Equirectangular projection to meters about ``origin = (lon0, lat0)``."""
    lon0, lat0 = origin
    x = EARTH_RADIUS * np.radians(np.asarray(lon) - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS * np.radians(np.asarray(lat) - lat0)
    return np.column_stack([x, y])


def read_points(path: str | Path) -> tuple[list[TrajectoryPoint], bool]:
    """Parse the trajectory CSV. Returns the points and whether they are lon/lat."""
    path = Path(path)
    if not path.exists():
        raise TrajectoryError(f"trajectory file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TrajectoryError(f"{path}: empty file") from None
        if header == ["vehicle_id", "timestamp", "lon", "lat"]:
            geographic = True
        elif header == ["vehicle_id", "t", "x", "y"]:
            geographic = False
        else:
            raise TrajectoryError(
                f"{path}: line 1: header must be 'vehicle_id,timestamp,lon,lat' or 'vehicle_id,t,x,y', got {','.join(header)}"
            )
        points = []
        last_t: dict[int, tuple[float, int]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise TrajectoryError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                vid = int(row[0])
                t, a, b = (float(row[1]), float(row[2]), float(row[3]))
            except ValueError:
                raise TrajectoryError(f"{path}: line {lineno}: malformed row {row!r}") from None
            if not all(math.isfinite(v) for v in (t, a, b)):
                raise TrajectoryError(f"{path}: line {lineno}: non-finite value")
            if vid in last_t and t <= last_t[vid][0]:
                raise TrajectoryError(
                    f"{path}: line {lineno}: non-monotone timestamp {t} for vehicle {vid} "
                    f"(previous {last_t[vid][0]} at line {last_t[vid][1]})"
                )
            last_t[vid] = (t, lineno)
            points.append(TrajectoryPoint(vid, t, (a, b)))
    if not points:
        raise TrajectoryError(f"{path}: empty file")
    return points, geographic


def resample(times: np.ndarray, xy: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Linear interpolation onto ``grid``; NaN outside ``[times[0], times[-1]]``."""
    out = np.full((len(grid), 2), np.nan)
    inside = (grid >= times[0] - 1e-9) & (grid <= times[-1] + 1e-9)
    out[inside, 0] = np.interp(grid[inside], times, xy[:, 0])
    out[inside, 1] = np.interp(grid[inside], times, xy[:, 1])
    return out


def ingest_csv(
    path: str | Path,
    horizon: int,
    slot_length: float,
    projection_origin: tuple[float, float] | None = None,
    max_gap: float = 30.0,
    gap_policy: str = "split",
) -> list[np.ndarray]:
    """Load a trajectory CSV and resample every vehicle onto the slot grid.

    Timestamps are shifted so the earliest point in the file is t = 0. A gap
    longer than ``max_gap`` seconds splits the vehicle into separate traces or
    drops it, per ``gap_policy``. Traces are returned ordered by vehicle id.
    """
    points, geographic = read_points(path)
    by_vehicle: dict[int, list[TrajectoryPoint]] = {}
    for p in points:
        by_vehicle.setdefault(p.vehicle, []).append(p)
    t0 = min(p.t for p in points)
    if geographic and projection_origin is None:
        projection_origin = (
            float(np.mean([p.position[0] for p in points])),
            float(np.mean([p.position[1] for p in points])),
        )
    grid = np.arange(horizon) * slot_length
    traces = []
    for vid in sorted(by_vehicle):
        pts = by_vehicle[vid]
        if len(pts) < 2:
            raise TrajectoryError(f"{path}: vehicle {vid} has fewer than 2 points")
        times = np.array([p.t for p in pts]) - t0
        raw = np.array([p.position for p in pts], dtype=float)
        xy = project(raw[:, 0], raw[:, 1], projection_origin) if geographic else raw
        breaks = np.nonzero(np.diff(times) > max_gap)[0]
        if len(breaks) and gap_policy == "drop":
            continue
        for seg in np.split(np.arange(len(times)), breaks + 1):
            if len(seg) < 2:
                continue
            trace = resample(times[seg], xy[seg], grid)
            if np.isfinite(trace[:, 0]).any():
                traces.append(trace)
    if not traces:
        raise TrajectoryError(f"{path}: no usable trajectories inside the horizon")
    return traces


def write_csv(path: str | Path, traces: Sequence[np.ndarray], slot_length: float) -> None:
    """Write traces in the ``vehicle_id,t,x,y`` layout (absent slots omitted)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "t", "x", "y"])
        for vid, trace in enumerate(traces):
            for k, (x, y) in enumerate(trace):
                if np.isfinite(x):
                    w.writerow([vid, repr(k * slot_length), repr(float(x)), repr(float(y))])


# --------------------------------------------------------------------------
# synthetic traces


def synthesize(
    n_vehicles: int,
    area: tuple[float, float],
    speed_range: tuple[float, float],
    horizon: int,
    slot_length: float,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Random-waypoint traces inside ``[0, W] x [0, H]``."""
    if n_vehicles < 1:
        raise ValueError("need at least one vehicle")
    w, h = area
    traces = []
    for _ in range(n_vehicles):
        pos = rng.uniform((0.0, 0.0), (w, h))
        target = rng.uniform((0.0, 0.0), (w, h))
        speed = rng.uniform(*speed_range)
        trace = np.empty((horizon, 2))
        for k in range(horizon):
            trace[k] = pos
            step = speed * slot_length
            while step > 0:
                gap = target - pos
                dist = math.hypot(*gap)
                if dist > step:
                    pos = pos + gap * (step / dist)
                    break
                pos = target
                step -= dist
                target = rng.uniform((0.0, 0.0), (w, h))
                speed = rng.uniform(*speed_range)
                if speed == 0:
                    break
        traces.append(np.clip(trace, (0.0, 0.0), (w, h)))
    return traces


# --------------------------------------------------------------------------
# prediction


def _valid_history(history) -> np.ndarray:
    hist = np.asarray(history, dtype=float).reshape(-1, 2)
    ok = np.isfinite(hist).all(axis=1)
    # only the trailing run of valid points is usable
    if not ok.any():
        return hist[:0]
    last_bad = np.nonzero(~ok)[0]
    start = last_bad[-1] + 1 if len(last_bad) else 0
    return hist[start:]


def _em_dominant_mean(x: np.ndarray, iters: int = 50) -> float:
    """Mean of the heavier component of a 2-component 1-D Gaussian mixture fitted by EM."""
    if np.ptp(x) < 1e-9:
        return float(x.mean())
    mu = np.array([x.min(), x.max()], dtype=float)
    var = np.full(2, x.var() + 1e-6)
    w = np.array([0.5, 0.5])
    for _ in range(iters):
        dens = w * np.exp(-0.5 * (x[:, None] - mu) ** 2 / var) / np.sqrt(2 * np.pi * var)
        resp = dens / np.maximum(dens.sum(axis=1, keepdims=True), 1e-300)
        nk = resp.sum(axis=0) + 1e-12
        w = nk / len(x)
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk + 1e-6
    return float(mu[np.argmax(w)])


def predict(
    history,
    h: int,
    rsu_location: tuple[float, float],
    method: str = "linear",
    em_window: int = 10,
) -> Prediction:
    """Predict the next ``h`` positions and their mean distance to the RSU.

    ``linear`` extrapolates the last displacement. ``em`` fits a two-component
    mixture to recent per-slot changes of the RSU distance and moves the vehicle
    radially by the dominant component's mean. With fewer than two usable points
    the last position is held.
    """
    hist = _valid_history(history)
    if len(hist) == 0:
        raise ValueError("no valid history points")
    last = hist[-1]
    steps = np.arange(1, h + 1)[:, None]
    if len(hist) < 2:
        pred = np.repeat(last[None, :], h, axis=0)
    elif method == "linear":
        pred = last + steps * (hist[-1] - hist[-2])
    elif method == "em":
        rsu = np.asarray(rsu_location, dtype=float)
        recent = hist[-(em_window + 1):]
        dists = np.hypot(*(recent - rsu).T)
        if len(dists) < 4:
            pred = last + steps * (hist[-1] - hist[-2])
        else:
            delta = _em_dominant_mean(np.diff(dists))
            d_now = dists[-1]
            future = np.maximum(d_now + steps[:, 0] * delta, 0.0)
            if d_now < 1e-9:
                direction = np.zeros(2)
            else:
                direction = (last - rsu) / d_now
            pred = rsu + future[:, None] * direction
    else:
        raise ValueError(f"unknown prediction method {method!r}")
    dists = np.hypot(pred[:, 0] - rsu_location[0], pred[:, 1] - rsu_location[1])
    return Prediction(h, pred, float(dists.mean()))
