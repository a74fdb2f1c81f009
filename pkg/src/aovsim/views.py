"""View requirement matrices, per-slot schedules and delivery bookkeeping."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Cell = tuple[int, int]  # (vehicle i, category j), both 0-based


class ViewError(ValueError):
    pass


@dataclass(frozen=True)
class Delivery:
    success: bool
    int_: float
    wai: float
    tra: float


@dataclass
class View:
    id: int
    cells: tuple[Cell, ...]
    deliveries: dict[Cell, Delivery] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cells:
            raise ViewError(f"view {self.id} requires no cells")
        self.cells = tuple(sorted(set(self.cells)))
        self._cellset = frozenset(self.cells)

    def requires(self, cell: Cell) -> bool:
        return cell in self._cellset

    def requirement_matrix(self, n_vehicles: int, n_categories: int) -> np.ndarray:
        m = np.zeros((n_vehicles, n_categories), dtype=np.int8)
        for i, j in self.cells:
            m[i, j] = 1
        return m

    def clear(self) -> None:
        self.deliveries = {}

    def without_vehicle(self, vehicle: int) -> View:
        """Copy with every delivery of ``vehicle`` marked failed (times kept)."""
        dl = {
            c: (Delivery(False, d.int_, d.wai, d.tra) if c[0] == vehicle else d)
            for c, d in self.deliveries.items()
        }
        v = View(self.id, self.cells)
        v.deliveries = dl
        return v


@dataclass(frozen=True)
class ViewSchedule:
    slots: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.slots)

    def at(self, t: int) -> tuple[int, ...]:
        return self.slots[t]


def record_delivery(view: View, cell: Cell, success: bool, int_: float, wai: float, tra: float) -> View:
    if not view.requires(cell):
        raise ViewError(f"view {view.id} does not require cell {cell}")
    view.deliveries[cell] = Delivery(bool(success), float(int_), float(wai), float(tra))
    return view


def required_cells(views: Sequence[View], scheduled: Iterable[int]) -> dict[int, tuple[int, ...]]:
    """Categories required of each vehicle by the scheduled views (set union)."""
    req: dict[int, set[int]] = {}
    for g in scheduled:
        for i, j in views[g].cells:
            req.setdefault(i, set()).add(j)
    return {i: tuple(sorted(js)) for i, js in sorted(req.items())}


def generate_views(
    n_views: int,
    target_mean_size_bits: float,
    n_vehicles: int,
    n_categories: int,
    mean_item_bits: float,
    horizon: int,
    rng: np.random.Generator,
    schedule_prob: float = 0.5,
) -> tuple[list[View], ViewSchedule]:
    """Random views whose expected required volume matches the target.

    Each view draws ``floor(c)`` or ``ceil(c)`` distinct cells with
    ``c = target / mean item size`` (probabilities chosen so the expected count
    is exactly ``c``). Each slot schedules every view independently with
    ``schedule_prob``, falling back to one uniformly chosen view.
    """
    if n_views < 1:
        raise ViewError("n_views must be >= 1")
    n_cells = n_vehicles * n_categories
    c = target_mean_size_bits / mean_item_bits
    if c > n_cells:
        raise ViewError(f"target needs {c:.2f} cells per view but only {n_cells} exist")
    if c < 0.9:
        raise ViewError(f"target {target_mean_size_bits:.4g} bits is below one item's mean size")
    base, frac = math.floor(c), c - math.floor(c)
    views = []
    for g in range(n_views):
        k = base + int(rng.random() < frac)
        k = min(max(k, 1), n_cells)
        flat = rng.choice(n_cells, size=k, replace=False)
        views.append(View(g, tuple((int(f) // n_categories, int(f) % n_categories) for f in flat)))
    slots = []
    for _ in range(horizon):
        chosen = tuple(int(g) for g in np.nonzero(rng.random(n_views) < schedule_prob)[0])
        if not chosen:
            chosen = (int(rng.integers(n_views)),)
        slots.append(chosen)
    return views, ViewSchedule(tuple(slots))


def export_views(path: str | Path, views: Sequence[View]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["view_id", "vehicle_id", "category_j"])
        for v in views:
            for i, j in v.cells:
                w.writerow([v.id, i, j])


def import_views(path: str | Path) -> list[View]:
    cells: dict[int, list[Cell]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["view_id", "vehicle_id", "category_j"]:
            raise ViewError(f"{path}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                g, i, j = (int(x) for x in row)
            except ValueError:
                raise ViewError(f"{path}: line {lineno}: malformed row {row!r}") from None
            cells.setdefault(g, []).append((i, j))
    ids = sorted(cells)
    if ids != list(range(len(ids))):
        raise ViewError(f"{path}: view ids must be 0..n-1")
    return [View(g, tuple(cells[g])) for g in ids]
