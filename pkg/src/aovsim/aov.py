"""Age of View: timeliness, completeness, consistency and their weighted blend."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from aovsim.views import View


@dataclass(frozen=True)
class ViewScore:
    view: int
    theta: float
    chi: float
    xi: float
    theta_hat: float
    xi_hat: float
    aov: float


def _delivered(view: View):
    for cell in view.cells:
        d = view.deliveries.get(cell)
        if d is not None and d.success:
            yield d


def timeliness(view: View) -> float:
    """Sum of inter-arrival, queuing and transmission time over delivered cells."""
    return math.fsum(d.int_ + d.wai + d.tra for d in _delivered(view))


def completeness(view: View) -> float:
    if not view.cells:
        raise ValueError(f"view {view.id} has no required cells")
    return sum(1 for _ in _delivered(view)) / len(view.cells)


def consistency(view: View) -> float:
    """Squared spread of delivered (wai + tra) around their mean; 0 when nothing was delivered."""
    times = [d.wai + d.tra for d in _delivered(view)]
    if not times:
        return 0.0
    m = math.fsum(times) / len(times)
    return math.fsum((x - m) ** 2 for x in times)


class MinMaxWindow:
    """Min/max of a raw quantity: running over an episode, or fixed when ``frozen``."""

    def __init__(self, lo: float = math.inf, hi: float = -math.inf, frozen: bool = False):
        self.lo = lo
        self.hi = hi
        self.frozen = frozen

    def update(self, v: float) -> None:
        if self.frozen:
            return
        self.lo = min(self.lo, v)
        self.hi = max(self.hi, v)

    def normalize(self, v: float) -> float:
        if not self.hi > self.lo:
            return 0.0
        return min(max((v - self.lo) / (self.hi - self.lo), 0.0), 1.0)

    def copy(self) -> MinMaxWindow:
        return MinMaxWindow(self.lo, self.hi, self.frozen)


def normalize(values: Sequence[float], v: float) -> float:
    lo, hi = min(values), max(values)
    if hi == lo:
        return 0.0
    return (v - lo) / (hi - lo)


def aov(theta_hat: float, chi: float, xi_hat: float, weights: Sequence[float] = (0.3, 0.4, 0.3)) -> float:
    w1, w2, w3 = weights
    if min(weights) < 0 or abs(w1 + w2 + w3 - 1.0) > 1e-9:
        raise ValueError(f"weights must be non-negative and sum to 1, got {tuple(weights)}")
    return w1 * theta_hat + w2 * (1.0 - chi) + w3 * xi_hat


def score_views(
    views: Sequence[View],
    theta_window: MinMaxWindow,
    xi_window: MinMaxWindow,
    weights: Sequence[float],
    commit: bool = True,
) -> list[ViewScore]:
    """Score one slot's views.

    With ``commit`` the raw values first extend the episode windows. Without it
    (counterfactual scoring) the windows are left untouched and normalized values
    are clipped to [0, 1].
    """
    raw = [(v.id, timeliness(v), completeness(v), consistency(v)) for v in views]
    if commit:
        for _, theta, _, xi in raw:
            theta_window.update(theta)
            xi_window.update(xi)
    scores = []
    for g, theta, chi, xi in raw:
        th = theta_window.normalize(theta)
        xh = xi_window.normalize(xi)
        scores.append(ViewScore(g, theta, chi, xi, th, xh, aov(th, chi, xh, weights)))
    return scores


def objective(per_slot_aov: Sequence[Sequence[float]]) -> float:
    """Period-average AoV; slots with no required views are skipped."""
    means = [math.fsum(s) / len(s) for s in per_slot_aov if len(s)]
    if not means:
        return 0.0
    return math.fsum(means) / len(means)
