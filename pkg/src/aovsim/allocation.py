"""Greedy bandwidth allocation at the RSU."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence


@dataclass(frozen=True)
class AllocationDecision:
    vehicles: tuple[int, ...]
    required_bits: tuple[float, ...]
    mean_predicted_distance: tuple[float, ...]
    rank: tuple[int, ...]
    allocated_b: tuple[float, ...]

    def bandwidth(self) -> dict[int, float]:
        return dict(zip(self.vehicles, self.allocated_b))


def required_volume(categories: Sequence[int], sizes_bits: Mapping[int, float]) -> float:
    """Volume of the distinct categories required of one vehicle."""
    return sum(sizes_bits[j] for j in sorted(set(categories)))


def rank_vehicles(entries: Mapping[int, tuple[float, float]]) -> dict[int, int]:
    """1-based ranks: larger volume first, then nearer predicted distance, then lower id."""
    order = sorted(entries, key=lambda i: (-entries[i][0], entries[i][1], i))
    return {vid: r for r, vid in enumerate(order, start=1)}


def allocate(entries: Mapping[int, tuple[float, float]], b_e: float, omega: float = 1.0) -> AllocationDecision:
    """Harmonic shares ``b_e / (omega + rank)``, scaled down uniformly if they oversubscribe ``b_e``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    ranks = rank_vehicles(entries)
    vehicles = tuple(sorted(entries))
    raw = [b_e / (omega + ranks[i]) for i in vehicles]
    total = sum(raw)
    if total > b_e:
        shares = [r * b_e / total for r in raw]
        # rounding can leave the sum a few ulps over the cap
        while sum(shares) > b_e:
            shares = [s * (1.0 - 1e-15) for s in shares]
    else:
        shares = raw
    return AllocationDecision(
        vehicles=vehicles,
        required_bits=tuple(entries[i][0] for i in vehicles),
        mean_predicted_distance=tuple(entries[i][1] for i in vehicles),
        rank=tuple(ranks[i] for i in vehicles),
        allocated_b=tuple(shares),
    )
