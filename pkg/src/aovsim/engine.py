"""Per-slot simulation loop and run metrics.

Slot phases: observe/act -> queue stats -> in-range set -> GBA -> transmit
-> record deliveries -> score views -> rewards -> store experience.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from aovsim import channel, mobility, queueing
from aovsim.agents import CategoryTable, MultiAgentLearner, RandomPolicy, SlotContext, decode_action, noise_scale
from aovsim.allocation import AllocationDecision, allocate
from aovsim.aov import MinMaxWindow, ViewScore, objective, score_views
from aovsim.config import CategoryParams, SimulationConfig, derive_seed, seeded_rng
from aovsim.views import Delivery, View, ViewSchedule, generate_views, record_delivery, required_cells

HISTORY = 12  # slots of position history handed to the predictor


class ConstraintViolation(AssertionError):
    """A C1-C5 breach inside the engine (a bug, not an environment state)."""


@dataclass
class Scenario:
    """Everything fixed for a run: traces, RSU, channel constants, views and their schedule."""

    cfg: SimulationConfig
    traces: np.ndarray  # (N, T, 2), NaN where absent
    views: list[View]
    schedule: ViewSchedule
    params: channel.ChannelParams
    table: CategoryTable
    reference: tuple[float, float, float, float] | None = None  # theta lo/hi, xi lo/hi
    distances: np.ndarray = field(init=False)  # (N, T)
    in_range: np.ndarray = field(init=False)  # (N, T) bool

    def __post_init__(self):
        rsu = np.asarray(self.cfg.rsu.location, dtype=float)
        with np.errstate(invalid="ignore"):
            self.distances = np.hypot(self.traces[..., 0] - rsu[0], self.traces[..., 1] - rsu[1])
            self.in_range = np.nan_to_num(self.distances, nan=np.inf) <= self.cfg.rsu.range

    @property
    def n_vehicles(self) -> int:
        return self.traces.shape[0]

    @property
    def n_categories(self) -> int:
        return self.table.n

    @property
    def horizon(self) -> int:
        return self.cfg.clock.horizon

    @property
    def obs_dim(self) -> int:
        return 3 * self.n_categories


def build_scenario(cfg: SimulationConfig, seed: int | None = None, traces=None) -> Scenario:
    seed = cfg.seed if seed is None else seed
    T, eps = cfg.clock.horizon, cfg.clock.slot_length
    if traces is None:
        vc = cfg.vehicles
        if vc.source == "csv":
            traces = mobility.ingest_csv(
                vc.trajectory_csv, T, eps, vc.projection_origin, vc.max_gap, vc.gap_policy
            )[: vc.count]
        else:
            traces = mobility.synthesize(vc.count, vc.area, vc.speed_range, T, eps, seeded_rng(seed, "mobility"))
    traces = np.asarray(traces, dtype=float).reshape(len(traces), T, 2)
    views, schedule = generate_views(
        cfg.views.count,
        8.0 * cfg.views.mean_size_bytes,
        len(traces),
        cfg.categories.count,
        cfg.data.mean_bits,
        T,
        seeded_rng(seed, "views"),
        cfg.views.schedule_prob,
    )
    sc = Scenario(
        cfg, traces, views, schedule,
        channel.ChannelParams.from_config(cfg.channel),
        CategoryTable.from_config(cfg.categories),
    )
    if cfg.aov.normalization == "calibrated":
        sc.reference = calibrate(sc, derive_seed(seed, "calibration"))
    return sc


def calibrate(sc: Scenario, episode_seed: int) -> tuple[float, float, float, float] | None:
    """Fixed normalization window from one random-policy episode.

    Bounds are the minimum and the ``calibration_quantile`` of the raw timeliness and
    consistency values; both are heavy-tailed, so the raw maximum would flatten
    everything else towards 0.
    """
    if sc.horizon == 0:
        return None
    reference, sc.reference = sc.reference, None
    try:
        sim = Simulation(sc, episode_seed)
        policy = RandomPolicy()
        rng = seeded_rng(episode_seed, "policy/calibration")
        theta, xi = [], []
        while not sim.done:
            out = sim.step(policy.act(sim.context(), rng))
            theta += [s.theta for s in out.scores]
            xi += [s.xi for s in out.scores]
    finally:
        sc.reference = reference
    if not theta:
        return None
    q = sc.cfg.aov.calibration_quantile
    return (min(theta), float(np.quantile(theta, q)), min(xi), float(np.quantile(xi, q)))


@dataclass
class EpisodeDraws:
    fading: np.ndarray  # (N, T)
    walls: np.ndarray  # (T,)
    sizes_bits: np.ndarray  # (T, N, J)
    snr: np.ndarray  # (N, T)


def draw_episode(sc: Scenario, episode_seed: int) -> EpisodeDraws:
    cfg = sc.cfg
    n, T, J = sc.n_vehicles, sc.horizon, sc.n_categories
    fading = channel.fading_draws(sc.params, seeded_rng(episode_seed, "fading"), (n, T))
    lo, hi = cfg.channel.noise_uncertainty_db
    n0 = seeded_rng(episode_seed, "noise-uncertainty").uniform(lo, hi, size=T)
    walls = np.array([channel.snr_wall(x) for x in n0])
    sizes = 8.0 * seeded_rng(episode_seed, "sizes").uniform(
        cfg.data.size_min_bytes, cfg.data.size_max_bytes, size=(T, n, J)
    )
    d = np.maximum(np.nan_to_num(sc.distances, nan=np.inf), channel.MIN_DISTANCE)
    p = sc.params
    snr = fading * p.antenna_psi * d ** (-p.path_loss_phi) * p.tx_power_pi / p.noise_n0
    return EpisodeDraws(fading, walls, sizes, snr)


@dataclass
class SlotOutcome:
    slot: int
    in_range: tuple[int, ...]
    allocation: AllocationDecision
    lam: np.ndarray  # (N, J)
    priority: np.ndarray  # (N, J)
    wai: np.ndarray  # (N, J)
    deliveries: dict[tuple[int, int], Delivery]
    scores: list[ViewScore]
    system_reward: float
    difference_rewards: np.ndarray  # (N,)


@dataclass(frozen=True)
class RunMetrics:
    CR: float
    CAR: tuple[float, float, float]
    AQT: float
    SR: float
    objective: float
    mean_view_bits: float


def system_reward(scores: Sequence[ViewScore]) -> float:
    if not scores:
        return 0.0
    return math.fsum(1.0 - s.aov for s in scores) / len(scores)


class Simulation:
    """State of one episode on a scenario."""

    def __init__(self, sc: Scenario, episode_seed: int):
        self.sc = sc
        self.cfg = sc.cfg
        self.draws = draw_episode(sc, episode_seed)
        n, J = sc.n_vehicles, sc.n_categories
        self.t = 0
        self.last_success = np.full((n, J), -np.inf)
        self.cache_prev = np.zeros(J)
        self.theta_window = MinMaxWindow()
        self.xi_window = MinMaxWindow()
        if sc.reference is not None:
            t_lo, t_hi, x_lo, x_hi = sc.reference
            self.theta_window = MinMaxWindow(t_lo, t_hi, frozen=True)
            self.xi_window = MinMaxWindow(x_lo, x_hi, frozen=True)

    @property
    def done(self) -> bool:
        return self.t >= self.sc.horizon

    # observation ---------------------------------------------------------

    def required_counts(self, t: int) -> np.ndarray:
        counts = np.zeros((self.sc.n_vehicles, self.sc.n_categories))
        if t < self.sc.horizon:
            for g in self.sc.schedule.at(t):
                for i, j in self.sc.views[g].cells:
                    counts[i, j] += 1
        return counts

    def context(self, t: int | None = None) -> SlotContext:
        t = self.t if t is None else t
        counts = self.required_counts(t)
        cap = self.cfg.agents.freshness_cap
        fresh = np.minimum((t - self.last_success) / cap, 1.0)
        cache = np.broadcast_to(self.cache_prev, counts.shape)
        obs = np.concatenate([fresh, cache, (counts > 0).astype(float)], axis=1)
        return SlotContext(obs, counts)

    # one slot -------------------------------------------------------------

    def step(self, raw_actions: np.ndarray) -> SlotOutcome:
        sc, cfg, t = self.sc, self.cfg, self.t
        if t >= sc.horizon:
            raise RuntimeError("episode already finished")
        n, J = sc.n_vehicles, sc.n_categories
        eps = cfg.clock.slot_length

        # (1) actions -> (lambda, p), checked against C1, C2, C4
        lam = np.empty((n, J))
        prio = np.empty((n, J))
        for i in range(n):
            a = decode_action(raw_actions[i], sc.table)
            lam[i], prio[i] = a.lam, a.priority
        self._check_sensing(lam, prio)

        # (2) queue statistics
        wai = np.empty((n, J))
        for i in range(n):
            cats = [
                CategoryParams(lam[i, j], sc.table.lambda_min[j], sc.table.lambda_max[j], prio[i, j],
                               sc.table.ser_mean[j], sc.table.ser_second_moment[j])
                for j in range(J)
            ]
            wai[i] = queueing.waiting_times(cats)
        inter = 1.0 / lam

        # (3) in-range set, (4) GBA
        covered = tuple(int(i) for i in np.nonzero(sc.in_range[:, t])[0])
        required = required_cells(sc.views, sc.schedule.at(t))
        sizes = self.draws.sizes_bits[t]
        entries = {}
        for i in covered:
            vol = sum(sizes[i, j] for j in required.get(i, ()))
            hist = sc.traces[i, max(0, t - HISTORY + 1): t + 1]
            pred = mobility.predict(hist, cfg.allocation.prediction_horizon, cfg.rsu.location,
                                    cfg.allocation.predictor, cfg.allocation.em_window)
            entries[i] = (vol, pred.mean_predicted_distance)
        alloc = allocate(entries, cfg.rsu.bandwidth, cfg.allocation.omega)
        self._check_bandwidth(alloc)
        bw = alloc.bandwidth()

        # (5) transmission in descending priority within each vehicle
        deliveries: dict[tuple[int, int], Delivery] = {}
        wall = self.draws.walls[t]
        end_of_run = sc.horizon * eps
        for i, cats in required.items():
            r = channel.rate(bw.get(i, 0.0), self.draws.snr[i, t]) if sc.in_range[i, t] else 0.0
            offset = 0.0
            for j in sorted(cats, key=lambda j: (-prio[i, j], j)):
                tra = channel.transmission_time(sizes[i, j], r)
                ok = math.isfinite(tra)
                if ok and cfg.engine.slot_deadline:
                    ok = offset + tra <= eps * (1 + 1e-12)
                if ok:
                    ok = t * eps + offset + tra <= end_of_run * (1 + 1e-12)
                if ok:
                    slots = [s for s in channel.sample_slots(t, offset, tra, eps) if s < sc.horizon]
                    ok = all(sc.in_range[i, s] for s in slots) and channel.success_indicator(
                        (self.draws.snr[i, s] for s in slots), wall
                    )
                deliveries[(i, j)] = Delivery(ok, inter[i, j], wai[i, j], tra)
                if math.isfinite(tra):
                    offset += tra

        # (6) views record deliveries, (7) scoring
        scheduled = [sc.views[g] for g in sc.schedule.at(t)]
        for v in scheduled:
            v.clear()
            for cell in v.cells:
                d = deliveries[cell]
                record_delivery(v, cell, d.success, d.int_, d.wai, d.tra)
        w = cfg.aov.weights
        scores = score_views(scheduled, self.theta_window, self.xi_window, w)

        # (8) rewards
        r_sys = system_reward(scores)
        diff = np.zeros(n)
        delivered_by = {i for (i, _), d in deliveries.items() if d.success}
        for i in delivered_by:
            affected = [k for k, v in enumerate(scheduled) if any(c[0] == i for c in v.cells)]
            cf_views = [scheduled[k].without_vehicle(i) for k in affected]
            cf = score_views(cf_views, self.theta_window, self.xi_window, w, commit=False)
            cf_scores = list(scores)
            for k, s in zip(affected, cf):
                cf_scores[k] = s
            diff[i] = r_sys - system_reward(cf_scores)

        # bookkeeping for the next observation
        self.cache_prev = np.zeros(J)
        for (i, j), d in deliveries.items():
            if d.success:
                self.last_success[i, j] = t
                self.cache_prev[j] = 1.0
        self.t += 1
        return SlotOutcome(t, covered, alloc, lam, prio, wai, deliveries, scores, r_sys, diff)

    # constraint checks -----------------------------------------------------

    def _check_sensing(self, lam: np.ndarray, prio: np.ndarray) -> None:
        tb = self.sc.table
        if np.any(lam < tb.lambda_min * (1 - 1e-12)) or np.any(lam > tb.lambda_max * (1 + 1e-12)):
            raise ConstraintViolation(f"slot {self.t}: C1 violated")
        if np.any(prio <= 0) or np.any(prio >= 1):
            raise ConstraintViolation(f"slot {self.t}: C2 violated")
        load = lam @ tb.ser_mean
        if np.any(load >= 1):
            raise ConstraintViolation(f"slot {self.t}: C4 violated (workload {load.max():.6g})")

    def _check_bandwidth(self, alloc: AllocationDecision) -> None:
        b_e = self.cfg.rsu.bandwidth
        if any(b < 0 or b > b_e for b in alloc.allocated_b):
            raise ConstraintViolation(f"slot {self.t}: C3 violated")
        if sum(alloc.allocated_b) > b_e:
            raise ConstraintViolation(f"slot {self.t}: C5 violated")


# --------------------------------------------------------------------------
# episodes


@dataclass
class EpisodeResult:
    metrics: RunMetrics
    slot_rows: list[dict]
    view_rows: list[dict]
    outcomes: list[SlotOutcome] | None = None
    agent_rewards: np.ndarray | None = None  # per-agent sum of the rewards the learner sees


def run_episode(
    sc: Scenario,
    policy,
    episode_seed: int,
    learner: MultiAgentLearner | None = None,
    train: bool = False,
    explore: bool = False,
    keep_outcomes: bool = False,
    store: bool | None = None,
) -> EpisodeResult:
    """Run one episode of ``policy`` (a baseline or a ``MultiAgentLearner``).

    With a learner, ``store`` (default: ``train``) appends transitions to its buffer,
    ``train`` runs updates after warm-up, and ``explore`` adds decaying Gaussian noise.
    """
    cfg = sc.cfg
    sim = Simulation(sc, episode_seed)
    # both reward modes share one exploration stream so toggling them changes only rewards
    label = "learned" if isinstance(policy, MultiAgentLearner) else getattr(policy, "name", "policy")
    act_rng = seeded_rng(episode_seed, f"policy/{label}")
    train_rng = seeded_rng(episode_seed, "train/minibatch")
    store = train if store is None else store
    ag = cfg.agents
    outcomes = []
    agent_rewards = np.zeros(sc.n_vehicles)
    ctx = sim.context()
    while not sim.done:
        noise = 0.0
        if explore and learner is not None:
            noise = noise_scale(learner.steps, ag.noise_init, ag.noise_floor, ag.noise_decay_slots)
        raw = policy.act(ctx, act_rng, noise)
        out = sim.step(raw)
        outcomes.append(out)
        next_ctx = sim.context()
        if learner is not None:
            rewards = learner.select_rewards(out.system_reward, out.difference_rewards)
            agent_rewards += rewards
            if store:
                learner.buffer.add(ctx.obs, raw, rewards, next_ctx.obs, sim.done)
        if learner is not None and train:
            learner.steps += 1
            ready = len(learner.buffer) >= max(ag.warmup, ag.batch_size)
            if ready and learner.steps % ag.train_every == 0:
                learner.update(train_rng)
        ctx = next_ctx
    metrics, slot_rows, view_rows = summarize(sc, outcomes)
    return EpisodeResult(metrics, slot_rows, view_rows, outcomes if keep_outcomes else None, agent_rewards)


def summarize(sc: Scenario, outcomes: Sequence[SlotOutcome]) -> tuple[RunMetrics, list[dict], list[dict]]:
    w1, w2, w3 = sc.cfg.aov.weights
    thr = sc.cfg.aov.completeness_threshold
    slot_rows, view_rows = [], []
    car = [[], [], []]
    served = total_views = 0
    aqt_terms = []
    per_slot_aov = []
    for out in outcomes:
        sc_ = out.scores
        k = len(sc_)
        per_slot_aov.append([s.aov for s in sc_])
        slot_rows.append({
            "slot": out.slot,
            "reward": out.system_reward,
            "mean_theta_hat": math.fsum(s.theta_hat for s in sc_) / k if k else 0.0,
            "mean_chi": math.fsum(s.chi for s in sc_) / k if k else 0.0,
            "mean_xi_hat": math.fsum(s.xi_hat for s in sc_) / k if k else 0.0,
            "mean_aov": math.fsum(s.aov for s in sc_) / k if k else 0.0,
            "n_views": k,
            "n_in_range": len(out.in_range),
        })
        for s in sc_:
            view_rows.append({
                "slot": out.slot, "view": s.view, "theta": s.theta, "chi": s.chi, "xi": s.xi,
                "theta_hat": s.theta_hat, "xi_hat": s.xi_hat, "aov": s.aov,
            })
            car[0].append(w1 * (1 - s.theta_hat))
            car[1].append(w2 * s.chi)
            car[2].append(w3 * (1 - s.xi_hat))
            served += s.chi >= thr
            total_views += 1
        aqt_terms.append(float(np.mean(out.wai)))
    cr = math.fsum(r["reward"] for r in slot_rows)
    nan = float("nan")
    metrics = RunMetrics(
        CR=cr,
        CAR=tuple(math.fsum(c) / len(c) if c else nan for c in car),
        AQT=math.fsum(aqt_terms) / len(aqt_terms) if aqt_terms else nan,
        SR=served / total_views if total_views else nan,
        objective=objective(per_slot_aov),
        mean_view_bits=mean_view_bits(sc),
    )
    return metrics, slot_rows, view_rows


def mean_view_bits(sc: Scenario) -> float:
    """Expected required volume of the view set (cells times the mean item size)."""
    if not sc.views:
        return float("nan")
    return float(np.mean([len(v.cells) for v in sc.views])) * sc.cfg.data.mean_bits


# --------------------------------------------------------------------------
# CSV output

SLOT_FIELDS = ["kind", "slot", "reward", "mean_theta_hat", "mean_chi", "mean_xi_hat", "mean_aov", "n_views",
               "n_in_range", "CR", "CAR_timeliness", "CAR_completeness", "CAR_consistency", "AQT", "SR", "objective"]
VIEW_FIELDS = ["slot", "view", "theta", "chi", "xi", "theta_hat", "xi_hat", "aov"]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def metrics_csv(result: EpisodeResult) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SLOT_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in result.slot_rows:
        w.writerow({"kind": "slot", **{k: _fmt(v) for k, v in row.items()}})
    m = result.metrics
    w.writerow({
        "kind": "summary", "CR": _fmt(m.CR), "CAR_timeliness": _fmt(m.CAR[0]),
        "CAR_completeness": _fmt(m.CAR[1]), "CAR_consistency": _fmt(m.CAR[2]),
        "AQT": _fmt(m.AQT), "SR": _fmt(m.SR), "objective": _fmt(m.objective),
    })
    return buf.getvalue()


def view_scores_csv(result: EpisodeResult) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, VIEW_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in result.view_rows:
        w.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def write_outputs(out_dir: str | Path, result: EpisodeResult) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "metrics.csv"
    path.write_text(metrics_csv(result), encoding="utf-8")
    (out_dir / "view_scores.csv").write_text(view_scores_csv(result), encoding="utf-8")
    return path


def read_metrics_csv(path: str | Path) -> tuple[list[dict], dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    slots = [r for r in rows if r["kind"] == "slot"]
    summary = next(r for r in rows if r["kind"] == "summary")
    return slots, summary
