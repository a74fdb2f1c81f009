"""Multi-class M/G/1 priority queue statistics for sensed information.

Per-slot steady-state quantities; nothing is carried across slots.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from aovsim.config import CategoryParams


class SteadyStateError(ValueError):
    """Workload at or above 1: the queue has no steady state (C4)."""


@dataclass(frozen=True)
class QueueStats:
    rho_i: float
    rho_ij: tuple[float, ...]
    mu_ij: tuple[float, ...]


def inter_arrival(lam: float) -> float:
    if not lam > 0:
        raise ValueError(f"arrival rate must be positive, got {lam}")
    return 1.0 / lam


def workloads(categories: Sequence[CategoryParams]) -> QueueStats:
    """Vehicle workload plus, per class, the workload of classes with priority >= its own.

    A class always counts itself, and classes with equal priority count each other.
    """
    lam = np.array([c.lambda_t for c in categories], dtype=float)
    s1 = np.array([c.ser_mean for c in categories], dtype=float)
    s2 = np.array([c.ser_second_moment for c in categories], dtype=float)
    p = np.array([c.priority_p for c in categories], dtype=float)
    if np.any(lam <= 0) or np.any(s1 <= 0) or np.any(s2 <= 0):
        raise ValueError("arrival rates and service moments must be positive")
    load = lam * s1
    rho_i = float(load.sum())
    if rho_i >= 1.0:
        raise SteadyStateError(f"vehicle workload {rho_i:.6g} >= 1")
    # mask[j, k] = 1 if class k has priority >= class j
    mask = p[None, :] >= p[:, None]
    rho_ij = mask @ load
    mu_ij = mask @ (lam * s2)
    return QueueStats(rho_i, tuple(float(x) for x in rho_ij), tuple(float(x) for x in mu_ij))


def waiting_time(category: CategoryParams, rho_ij: float, mu_ij: float) -> float:
    """Mean queuing time of one class.

    ``[E[ser] + mu/(2(1-rho))] / (1 - rho + lam E[ser]) - E[ser]``, evaluated as
    ``[E[ser](rho - lam E[ser]) + mu/(2(1-rho))] / (1 - rho + lam E[ser])``, which
    is the same expression without the cancellation of the trailing ``- E[ser]``.
    """
    if rho_ij >= 1.0:
        raise SteadyStateError(f"class workload {rho_ij:.6g} >= 1")
    es = category.ser_mean
    own = category.lambda_t * es
    denom = 1.0 - rho_ij + own
    if denom <= 0:
        raise SteadyStateError(f"non-positive denominator {denom:.6g}")
    wai = (es * (rho_ij - own) + mu_ij / (2.0 * (1.0 - rho_ij))) / denom
    if wai < 0:
        if wai < -1e-12 * max(1.0, es):
            raise ArithmeticError(f"negative waiting time {wai}")
        wai = 0.0
    return wai


def waiting_times(categories: Sequence[CategoryParams]) -> list[float]:
    stats = workloads(categories)
    return [waiting_time(c, r, m) for c, r, m in zip(categories, stats.rho_ij, stats.mu_ij)]
