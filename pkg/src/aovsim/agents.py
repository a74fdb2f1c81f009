"""Vehicle agents: action decoding, baseline policies, replay buffer, actor-critic learner."""
from __future__ import annotations

from dataclasses import dataclass
import zipfile
from pathlib import Path

import numpy as np

from aovsim.nn import Adam, Mlp, load_adam, load_mlp, save_npz

P_EPS = 1e-6
C4_TARGET = 0.99


@dataclass(frozen=True)
class CategoryTable:
    """Per-category bounds and service moments shared by all vehicles."""

    lambda_min: np.ndarray
    lambda_max: np.ndarray
    ser_mean: np.ndarray
    ser_second_moment: np.ndarray

    @classmethod
    def from_config(cls, cats) -> CategoryTable:
        return cls(
            np.asarray(cats.lambda_min, dtype=float),
            np.asarray(cats.lambda_max, dtype=float),
            np.asarray(cats.ser_mean, dtype=float),
            np.asarray(cats.ser_second_moment, dtype=float),
        )

    @property
    def n(self) -> int:
        return len(self.lambda_min)


@dataclass(frozen=True)
class AgentAction:
    raw: np.ndarray  # (2J,) in [0, 1]
    lam: np.ndarray  # (J,)
    priority: np.ndarray  # (J,)


def project_c4(lam: np.ndarray, table: CategoryTable, target: float = C4_TARGET) -> np.ndarray:
    """Shrink the above-minimum part of ``lam`` so the workload is at most ``target``.

    Scaling only ``lam - lambda_min`` keeps every rate inside its C1 bounds.
    """
    load = float(np.dot(lam, table.ser_mean))
    if load < 1.0:
        return lam
    base = float(np.dot(table.lambda_min, table.ser_mean))
    extra = load - base
    s = (target - base) / extra
    out = table.lambda_min + s * (lam - table.lambda_min)
    return np.clip(out, table.lambda_min, table.lambda_max)


def decode_action(raw, table: CategoryTable) -> AgentAction:
    u = np.clip(np.asarray(raw, dtype=float), 0.0, 1.0)
    j = table.n
    lam = table.lambda_min + u[:j] * (table.lambda_max - table.lambda_min)
    lam = project_c4(lam, table)
    p = np.clip(u[j:], P_EPS, 1.0 - P_EPS)
    return AgentAction(u, lam, p)


# --------------------------------------------------------------------------
# policies


@dataclass
class SlotContext:
    """What a policy may look at when acting in one slot."""

    obs: np.ndarray  # (N, obs_dim)
    required_counts: np.ndarray  # (N, J) views requiring each cell


class RandomPolicy:
    name = "random"

    def act(self, ctx: SlotContext, rng: np.random.Generator, noise: float = 0.0) -> np.ndarray:
        n, j = ctx.required_counts.shape
        return rng.random((n, 2 * j))


class StaticPolicy:
    name = "static"

    def act(self, ctx: SlotContext, rng: np.random.Generator, noise: float = 0.0) -> np.ndarray:
        n, j = ctx.required_counts.shape
        return np.full((n, 2 * j), 0.5)


class GreedySensingPolicy:
    """Sense at the maximum rate; prioritize categories by how many views need them."""

    name = "greedy-sensing"

    def act(self, ctx: SlotContext, rng: np.random.Generator, noise: float = 0.0) -> np.ndarray:
        counts = ctx.required_counts.astype(float)
        top = counts.max(axis=1, keepdims=True)
        p = (counts + 0.5) / (top + 1.0)
        return np.concatenate([np.ones_like(counts), p], axis=1)


# --------------------------------------------------------------------------
# replay buffer


class ReplayBuffer:
    """Fixed-capacity FIFO ring of joint transitions."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, n_agents, obs_dim))
        self.act = np.zeros((capacity, n_agents, act_dim))
        self.rew = np.zeros((capacity, n_agents))
        self.next_obs = np.zeros((capacity, n_agents, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.head = 0  # next write position
        self.total = 0  # transitions ever added

    def __len__(self) -> int:
        return self.size

    def add(self, obs, act, rew, next_obs, done: bool) -> None:
        k = self.head
        self.obs[k] = obs
        self.act[k] = act
        self.rew[k] = rew
        self.next_obs[k] = next_obs
        self.done[k] = float(done)
        self.head = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total += 1

    def ordered_indices(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        start = (self.head - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def sample(self, batch: int, rng: np.random.Generator):
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch}")
        idx = rng.integers(0, self.size, size=batch)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]

    def state(self) -> dict:
        idx = self.ordered_indices()
        return {
            "buffer/capacity": np.array(self.capacity),
            "buffer/total": np.array(self.total),
            "buffer/obs": self.obs[idx],
            "buffer/act": self.act[idx],
            "buffer/rew": self.rew[idx],
            "buffer/next_obs": self.next_obs[idx],
            "buffer/done": self.done[idx],
        }

    @classmethod
    def from_state(cls, data) -> ReplayBuffer:
        obs = data["buffer/obs"]
        act = data["buffer/act"]
        cap = int(data["buffer/capacity"])
        n_agents, obs_dim = (obs.shape[1], obs.shape[2]) if obs.ndim == 3 else (0, 0)
        buf = cls(cap, n_agents, obs_dim, act.shape[2] if act.ndim == 3 else 0)
        n = len(obs)
        buf.obs[:n] = obs
        buf.act[:n] = act
        buf.rew[:n] = data["buffer/rew"]
        buf.next_obs[:n] = data["buffer/next_obs"]
        buf.done[:n] = data["buffer/done"]
        buf.size = n
        buf.head = n % cap
        buf.total = int(data["buffer/total"])
        return buf


# --------------------------------------------------------------------------
# learner


def noise_scale(step: int, init: float, floor: float, decay_slots: int) -> float:
    """Linearly decaying exploration std (in action-range units)."""
    if decay_slots <= 0:
        return floor
    return max(floor, init - (init - floor) * step / decay_slots)


class Agent:
    def __init__(self, obs_dim: int, act_dim: int, joint_act_dim: int, hidden, actor_lr, critic_lr, rng):
        self.actor = Mlp([obs_dim, *hidden, act_dim], "relu", "sigmoid", rng)
        self.critic = Mlp([obs_dim + joint_act_dim, *hidden, 1], "relu", "identity", rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(actor_lr)
        self.critic_opt = Adam(critic_lr)

    def soft_update(self, n: float) -> None:
        self.actor_target.soft_update_from(self.actor, n)
        self.critic_target.soft_update_from(self.critic, n)


class MultiAgentLearner:
    """Per-vehicle actors and critics; critics see the own observation plus the joint action.

    ``reward_mode`` is ``"difference"`` (each agent learns from its own counterfactual
    credit) or ``"shared"`` (every agent learns from the system reward).
    """

    def __init__(self, n_agents: int, obs_dim: int, n_categories: int, cfg, rng: np.random.Generator,
                 reward_mode: str = "difference"):
        if reward_mode not in ("difference", "shared"):
            raise ValueError(f"unknown reward mode {reward_mode!r}")
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.act_dim = 2 * n_categories
        self.cfg = cfg
        self.reward_mode = reward_mode
        self.name = "mdr-gba" if reward_mode == "difference" else "mac-gba"
        joint = n_agents * self.act_dim
        self.agents = [
            Agent(obs_dim, self.act_dim, joint, cfg.hidden, cfg.actor_lr, cfg.critic_lr, rng)
            for _ in range(n_agents)
        ]
        self.buffer = ReplayBuffer(cfg.buffer_size, n_agents, obs_dim, self.act_dim)
        self.steps = 0  # environment slots seen while training
        self.updates = 0
        self.loss_sum = np.zeros(n_agents)
        self.loss_count = 0

    def act(self, ctx: SlotContext, rng: np.random.Generator, noise: float = 0.0) -> np.ndarray:
        out = np.empty((self.n_agents, self.act_dim))
        for i, agent in enumerate(self.agents):
            out[i] = agent.actor(ctx.obs[i])
        if noise > 0:
            out = out + rng.normal(0.0, noise, size=out.shape)
        return np.clip(out, 0.0, 1.0)

    def select_rewards(self, system_reward: float, difference: np.ndarray) -> np.ndarray:
        if self.reward_mode == "shared":
            return np.full(self.n_agents, system_reward)
        return np.asarray(difference, dtype=float)

    def train_step(self, i: int, batch, next_actions: np.ndarray | None = None) -> float:
        """One critic and one actor step for agent ``i`` on a minibatch; returns the critic loss."""
        obs, act, rew, next_obs, done = batch
        m = len(rew)
        agent = self.agents[i]
        gamma = self.cfg.gamma
        if next_actions is None:
            next_actions = self.target_actions(next_obs)
        q_next = agent.critic_target(np.concatenate([next_obs[:, i], next_actions], axis=1))[:, 0]
        y = rew[:, i] + gamma * (1.0 - done) * q_next

        joint = act.reshape(m, -1)
        q, cache = agent.critic.forward(np.concatenate([obs[:, i], joint], axis=1))
        err = q[:, 0] - y
        loss = float(np.mean(err ** 2))
        grads, _ = agent.critic.backward(cache, (2.0 / m) * err[:, None])
        agent.critic_opt.step(agent.critic.params, grads)

        a_i, a_cache = agent.actor.forward(obs[:, i])
        joint_pi = act.copy()
        joint_pi[:, i] = a_i
        q_pi, q_cache = agent.critic.forward(np.concatenate([obs[:, i], joint_pi.reshape(m, -1)], axis=1))
        _, dq_din = agent.critic.backward(q_cache, np.full((m, 1), 1.0 / m))
        lo = self.obs_dim + i * self.act_dim
        dq_da = dq_din[:, lo:lo + self.act_dim]
        a_grads, _ = agent.actor.backward(a_cache, -dq_da)  # ascend Q
        agent.actor_opt.step(agent.actor.params, a_grads)
        return loss

    def target_actions(self, next_obs: np.ndarray) -> np.ndarray:
        m = len(next_obs)
        return np.concatenate([a.actor_target(next_obs[:, k]) for k, a in enumerate(self.agents)], axis=1).reshape(m, -1)

    def update(self, rng: np.random.Generator) -> np.ndarray:
        """Train every agent on one shared minibatch, then soft-update the targets."""
        batch = self.buffer.sample(self.cfg.batch_size, rng)
        next_actions = self.target_actions(batch[3])
        losses = np.array([self.train_step(i, batch, next_actions) for i in range(self.n_agents)])
        for agent in self.agents:
            agent.soft_update(self.cfg.soft_update)
        self.updates += 1
        self.loss_sum += losses
        self.loss_count += 1
        return losses

    def pop_losses(self) -> np.ndarray:
        """Mean critic loss per agent since the last call (NaN if no update ran)."""
        out = self.loss_sum / self.loss_count if self.loss_count else np.full(self.n_agents, np.nan)
        self.loss_sum = np.zeros(self.n_agents)
        self.loss_count = 0
        return out

    # checkpointing -------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, a in enumerate(self.agents):
            agent_dir = directory / f"agent_{i:03d}"
            agent_dir.mkdir(exist_ok=True)
            save_npz(
                agent_dir / "networks.npz",
                actor=a.actor, critic=a.critic,
                actor_target=a.actor_target, critic_target=a.critic_target,
                actor_opt=a.actor_opt, critic_opt=a.critic_opt,
            )
        np.savez(
            directory / "learner.npz",
            meta=np.array([self.n_agents, self.obs_dim, self.act_dim, self.steps, self.updates]),
            reward_mode=np.array(self.reward_mode),
            **self.buffer.state(),
        )

    def load(self, directory: str | Path) -> None:
        directory = Path(directory)
        try:
            with np.load(directory / "learner.npz") as data:
                meta = [int(x) for x in data["meta"]]
                if meta[:3] != [self.n_agents, self.obs_dim, self.act_dim]:
                    raise ValueError(f"checkpoint shape {meta[:3]} does not match the configured learner")
                if str(data["reward_mode"]) != self.reward_mode:
                    raise ValueError(f"checkpoint reward mode {data['reward_mode']} != {self.reward_mode}")
                self.steps, self.updates = meta[3], meta[4]
                buf = ReplayBuffer.from_state(data)
            if buf.capacity != self.buffer.capacity:
                raise ValueError("checkpoint buffer capacity does not match the config")
            if len(buf):
                self.buffer = buf
            else:
                self.buffer.total = buf.total
            for i, a in enumerate(self.agents):
                with np.load(directory / f"agent_{i:03d}" / "networks.npz") as data:
                    a.actor = load_mlp(data, "actor")
                    a.critic = load_mlp(data, "critic")
                    a.actor_target = load_mlp(data, "actor_target")
                    a.critic_target = load_mlp(data, "critic_target")
                    a.actor_opt = load_adam(data, "actor_opt")
                    a.critic_opt = load_adam(data, "critic_opt")
        except (OSError, KeyError, ValueError, EOFError, zipfile.BadZipFile) as exc:
            raise CheckpointError(f"cannot load checkpoint from {directory}: {exc}") from exc


class CheckpointError(RuntimeError):
    pass


def make_policy(name: str):
    if name == "random":
        return RandomPolicy()
    if name == "static":
        return StaticPolicy()
    if name == "greedy-sensing":
        return GreedySensingPolicy()
    raise ValueError(f"{name!r} is not a fixed baseline policy")
