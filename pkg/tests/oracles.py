"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import math
from collections import deque

import numpy as np


def gamma_service(rng, mean: float, second_moment: float, size: int) -> np.ndarray:
    """Service times matched to (E[S], E[S^2]); deterministic when the variance is 0."""
    var = second_moment - mean * mean
    if var <= 1e-15 * mean * mean:
        return np.full(size, mean)
    return rng.gamma(mean * mean / var, var / mean, size=size)


def des_priority_queue(lams, ser_mean, ser_second, priorities, n_arrivals, rng, batches=50, warmup=0.02):
    """Event-driven single-server non-preemptive priority queue.

    Poisson arrivals per class, gamma service. Classes with equal priority share one
    FIFO. Returns per-class (mean wait, standard error), the error from batch means
    over arrival order after discarding the warm-up fraction.
    """
    lams = np.asarray(lams, dtype=float)
    total = lams.sum()
    arrivals = np.cumsum(rng.exponential(1.0 / total, n_arrivals))
    cls = rng.choice(len(lams), size=n_arrivals, p=lams / total)
    service = np.empty(n_arrivals)
    for k in range(len(lams)):
        idx = np.nonzero(cls == k)[0]
        service[idx] = gamma_service(rng, ser_mean[k], ser_second[k], len(idx))
    levels = sorted(set(priorities), reverse=True)
    level_of = [levels.index(p) for p in priorities]
    queues = [deque() for _ in levels]
    waits = np.empty(n_arrivals)
    arr = arrivals.tolist()
    svc = service.tolist()
    lev = [level_of[c] for c in cls.tolist()]
    free = 0.0
    nxt = 0
    queued = 0
    served = 0
    while served < n_arrivals:
        while nxt < n_arrivals and arr[nxt] <= free:
            queues[lev[nxt]].append(nxt)
            queued += 1
            nxt += 1
        if queued:
            for q in queues:
                if q:
                    j = q.popleft()
                    break
            queued -= 1
            start = free
        else:
            j = nxt
            nxt += 1
            start = arr[j]
        waits[j] = start - arr[j]
        free = start + svc[j]
        served += 1
    out = []
    keep = np.arange(n_arrivals) >= int(warmup * n_arrivals)
    for k in range(len(lams)):
        w = waits[keep & (cls == k)]
        means = np.array([b.mean() for b in np.array_split(w, batches)])
        out.append((float(w.mean()), float(means.std(ddof=1) / math.sqrt(batches))))
    return out


def haversine(lon1, lat1, lon2, lat2, radius=6371008.8) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(a))


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar ``f`` w.r.t. array ``x`` (perturbed in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g
