"""Value-based agent pieces: replay buffer, epsilon schedule, DQN/DDQN
targets with one Adam update per learn step, and target-network sync."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import MlpNet


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class AgentConfig:
    buffer_size: int = 100_000
    batch_size: int = 64
    lr: float = 1e-3
    target_mode: str = "hard"      # "hard": full copy every N learn steps
    target_value: float = 100.0    # "soft": Polyak rate applied every learn step
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 200_000
    gamma_discount: float = 0.99
    warmup_steps: int = 1000

    def __post_init__(self):
        if not (0.0 < self.gamma_discount < 1.0):
            raise ValueError("discount must lie in (0, 1)")
        if self.eps_end > self.eps_start:
            raise ValueError("eps_end must not exceed eps_start")
        if self.target_mode not in ("hard", "soft"):
            raise ValueError("target_mode must be 'hard' or 'soft'")
        if self.eps_decay_steps <= 0 or self.buffer_size <= 0 or self.batch_size <= 0:
            raise ValueError("counts must be positive")


class ReplayBuffer:
    """Fixed-capacity ring of transitions; uniform sampling."""

    def __init__(self, capacity):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items = []
        self._head = 0

    def __len__(self):
        return len(self._items)

    def push(self, transition: Transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._head] = transition
            self._head = (self._head + 1) % self.capacity

    def sample(self, batch_size, rng):
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def oldest(self):
        if not self._items:
            raise IndexError("empty buffer")
        return self._items[self._head if len(self._items) == self.capacity else 0]


def epsilon_at(step, config: AgentConfig):
    """Linear decay from eps_start to eps_end over eps_decay_steps."""
    if step < 0:
        raise ValueError("step must be non-negative")
    frac = min(step / config.eps_decay_steps, 1.0)
    return config.eps_start + (config.eps_end - config.eps_start) * frac


def select_action(net: MlpNet, obs, eps, rng, n_actions):
    """Epsilon-greedy; greedy ties break to the lowest action index."""
    if rng.random() < eps:
        return int(rng.integers(0, n_actions))
    q = net.forward(obs)
    return int(np.argmax(q))


def compute_targets(net: MlpNet, target_net: MlpNet, batch, config: AgentConfig,
                    mode):
    """TD targets: y = r for terminal transitions, else bootstrapped from the
    target net -- action chosen by the online net in ddqn mode."""
    S_next = np.stack([t.s_next for t in batch])
    r = np.array([t.r for t in batch])
    done = np.array([t.done for t in batch])
    q_target_next, _ = target_net.batch_forward(S_next)
    if mode == "ddqn":
        q_online_next, _ = net.batch_forward(S_next)
        a_next = np.argmax(q_online_next, axis=1)
    elif mode == "dqn":
        a_next = np.argmax(q_target_next, axis=1)
    else:
        raise ValueError("mode must be 'dqn' or 'ddqn'")
    bootstrap = q_target_next[np.arange(len(batch)), a_next]
    return r + config.gamma_discount * bootstrap * (~done)


def train_step(net: MlpNet, target_net: MlpNet, batch, config: AgentConfig,
               mode="ddqn", stats=None):
    """One MSE/Adam update on a batch; returns the batch loss.  When a stats
    dict is supplied, the batch mean absolute error is recorded in it."""
    if not batch:
        raise ValueError("batch must be non-empty")
    y = compute_targets(net, target_net, batch, config, mode)
    S = np.stack([t.s for t in batch])
    a = np.array([t.a for t in batch])
    q, acts = net.batch_forward(S, with_cache=True)
    pred = q[np.arange(len(batch)), a]
    err = pred - y
    if stats is not None:
        stats["mae"] = float(np.mean(np.abs(err)))
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite training loss")
    grad_out = np.zeros_like(q)
    grad_out[np.arange(len(batch)), a] = 2.0 * err / len(batch)
    grads_w, grads_b = net.backward(acts, grad_out)
    net.adam_update(grads_w, grads_b, config.lr)
    return loss


def sync_target(net: MlpNet, target_net: MlpNet, config: AgentConfig,
                learn_step):
    """Hard copy every target_value learn steps, or Polyak soft update."""
    if config.target_mode == "hard":
        if learn_step % int(config.target_value) == 0:
            target_net.copy_from(net)
    else:
        target_net.copy_from(net, rate=config.target_value)
