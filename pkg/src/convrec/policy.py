"""Two-action dialogue policy: a small Q-network trained by deep Q-learning
with a FIFO replay buffer and a periodically synced target network."""
from __future__ import annotations

import json
from collections import deque
from enum import IntEnum
from pathlib import Path

import numpy as np

from .config import RewardConfig

POLICY_CHECKPOINT_VERSION = 1


class Action(IntEnum):
    ASK = 0
    RECOMMEND = 1


class TurnOutcome(IntEnum):
    INFORMATIVE_ANSWER = 0
    UNINFORMATIVE_ANSWER = 1
    ACCEPTED_RECOMMENDATION = 2
    REJECTED_OR_TIMEOUT = 3


def reward(outcome: TurnOutcome, cfg: RewardConfig) -> float:
    return {
        TurnOutcome.INFORMATIVE_ANSWER: cfg.ask_hit,
        TurnOutcome.UNINFORMATIVE_ANSWER: cfg.ask_miss,
        TurnOutcome.ACCEPTED_RECOMMENDATION: cfg.accept,
        TurnOutcome.REJECTED_OR_TIMEOUT: cfg.reject,
    }[outcome]


def discounted_return(rewards: list[float], damping: float) -> float:
    """Damped sum of rewards from the current turn onward."""
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0,1)")
    total = 0.0
    for k, r in enumerate(rewards):
        total += (damping ** k) * r
    return total


class PolicyNet:
    """Q(s) = W1 tanh(W2 s + b1) + b2, one Q-value per action."""

    def __init__(self, state_dim: int, hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.state_dim = state_dim
        self.hidden = hidden
        s1 = 1.0 / np.sqrt(state_dim)
        s2 = 1.0 / np.sqrt(hidden)
        self.params: dict[str, np.ndarray] = {
            "W2": rng.uniform(-s1, s1, size=(hidden, state_dim)),
            "b1": np.zeros(hidden),
            "W1": rng.uniform(-s2, s2, size=(2, hidden)),
            "b2": np.zeros(2),
        }

    def q_values(self, states: np.ndarray) -> np.ndarray:
        """(B, state_dim) -> (B, 2)."""
        states = np.atleast_2d(states)
        if states.shape[1] != self.state_dim:
            raise ValueError(f"state dim {states.shape[1]} != {self.state_dim}")
        z = states @ self.params["W2"].T + self.params["b1"]
        t = np.tanh(z)
        return t @ self.params["W1"].T + self.params["b2"]

    def copy_from(self, other: "PolicyNet") -> None:
        for k, v in other.params.items():
            self.params[k] = v.copy()

    def clone(self) -> "PolicyNet":
        twin = PolicyNet(self.state_dim, self.hidden)
        twin.copy_from(self)
        return twin

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        meta = {"version": POLICY_CHECKPOINT_VERSION,
                "state_dim": self.state_dim, "hidden": self.hidden}
        if extra_meta:
            meta.update(extra_meta)
        np.savez(path, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(),
                                          dtype=np.uint8),
                 **self.params)

    @classmethod
    def load(cls, path: str | Path) -> tuple["PolicyNet", dict]:
        from .embedding import CheckpointError

        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != POLICY_CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"incompatible policy checkpoint version {meta.get('version')}")
            net = cls(meta["state_dim"], meta["hidden"])
            for k in net.params:
                net.params[k] = data[k].copy()
        return net, meta


def act(net: PolicyNet, state: np.ndarray, eps: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy over the two Q-values; exact ties resolve to ASK."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0,1]")
    if eps > 0 and rng.random() < eps:
        return Action(int(rng.integers(2)))
    q = net.q_values(state[None, :])[0]
    return Action.RECOMMEND if q[1] > q[0] else Action.ASK


class ReplayBuffer:
    """FIFO transition store: (s, a, r, s_next, terminal)."""

    def __init__(self, capacity: int = 100_000):
        self.data: deque = deque(maxlen=capacity)

    def push(self, s: np.ndarray, a: int, r: float,
             s_next: np.ndarray | None, terminal: bool) -> None:
        self.data.append((s, int(a), float(r), s_next, bool(terminal)))

    def __len__(self) -> int:
        return len(self.data)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if len(self.data) < batch_size:
            raise ValueError(f"buffer holds {len(self.data)} < batch {batch_size}")
        idx = rng.choice(len(self.data), size=batch_size, replace=False)
        return [self.data[int(j)] for j in idx]


class RMSProp:
    """v = rho v + (1-rho) g^2; theta -= lr g / (sqrt(v) + eps)."""

    def __init__(self, lr: float, rho: float = 0.9, eps: float = 1e-8):
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for n, g in grads.items():
            v = self.v.setdefault(n, np.zeros_like(g))
            v *= self.rho
            v += (1 - self.rho) * g * g
            params[n] -= self.lr * g / (np.sqrt(v) + self.eps)


def td_loss_and_grads(net: PolicyNet, target_net: PolicyNet, batch,
                      damping: float, want_grads: bool = True):
    """Mean squared TD error over a transition batch; manual gradients."""
    S = np.stack([tr[0] for tr in batch])
    A = np.array([tr[1] for tr in batch], dtype=np.intp)
    R = np.array([tr[2] for tr in batch], dtype=float)
    terminal = np.array([tr[4] for tr in batch], dtype=bool)

    y = R.copy()
    live = ~terminal
    if live.any():
        S_next = np.stack([tr[3] for tr in batch if not tr[4]])
        q_next = target_net.q_values(S_next).max(axis=1)
        y[live] += damping * q_next

    z = S @ net.params["W2"].T + net.params["b1"]
    t = np.tanh(z)
    q = t @ net.params["W1"].T + net.params["b2"]
    q_sel = q[np.arange(len(batch)), A]
    err = q_sel - y
    loss = float((err ** 2).mean())
    if not want_grads:
        return loss, None

    B = len(batch)
    dq_sel = 2.0 * err / B
    dq = np.zeros_like(q)
    dq[np.arange(B), A] = dq_sel
    grads = {
        "W1": dq.T @ t,
        "b2": dq.sum(axis=0),
    }
    dt = dq @ net.params["W1"]
    dz = dt * (1.0 - t ** 2)
    grads["W2"] = dz.T @ S
    grads["b1"] = dz.sum(axis=0)
    return loss, grads


def dqn_step(net: PolicyNet, target_net: PolicyNet, buffer: ReplayBuffer,
             batch_size: int, damping: float, opt: RMSProp,
             rng: np.random.Generator) -> float:
    batch = buffer.sample(batch_size, rng)
    loss, grads = td_loss_and_grads(net, target_net, batch, damping)
    opt.step(net.params, grads)
    return loss


def sync_target(net: PolicyNet, target_net: PolicyNet) -> None:
    target_net.copy_from(net)


def epsilon_at(episode: int, total_episodes: int, eps_start: float = 1.0,
               eps_end: float = 0.1, anneal_fraction: float = 0.5) -> float:
    """Linear decay over the first anneal_fraction of episodes, then flat."""
    horizon = max(1, int(total_episodes * anneal_fraction))
    frac = min(1.0, episode / horizon)
    return eps_start + (eps_end - eps_start) * frac
