"""Training and evaluation loops for the grid (DQN) and highway (DDQN) agents.

The grid agent uses soft target updates (Polyak 0.01); the highway agent uses
hard target syncs every 100 learn steps.  Both loops are single-threaded and
deterministic under a fixed seed.
"""

from __future__ import annotations

import csv

import numpy as np

from .agent import (AgentConfig, ReplayBuffer, Transition, epsilon_at,
                    select_action, sync_target, train_step)
from .envs import GridWorld, HighwayEnv
from .net import MlpNet

GRID_HIDDEN = (32, 32)
HIGHWAY_HIDDEN = (128, 128)


def grid_agent_config():
    """Desk-scale DQN settings for the grid task (50k-step budget)."""
    return AgentConfig(buffer_size=20_000, batch_size=64, lr=1e-3,
                       target_mode="soft", target_value=0.01,
                       eps_start=1.0, eps_end=0.05, eps_decay_steps=15_000,
                       gamma_discount=0.98, warmup_steps=500)


def highway_agent_config():
    """Desk-scale DDQN settings for the two-lane task."""
    return AgentConfig(buffer_size=50_000, batch_size=64, lr=1e-3,
                       target_mode="hard", target_value=100,
                       eps_start=1.0, eps_end=0.05, eps_decay_steps=20_000,
                       gamma_discount=0.97, warmup_steps=500)


def write_training_log(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "steps", "total_reward", "loss_mean", "eps"])
        for rec in records:
            writer.writerow([rec["episode"], rec["steps"],
                             f"{rec['total_reward']:.6f}",
                             f"{rec['loss_mean']:.6f}", f"{rec['eps']:.6f}"])


def train_grid_agent(max_steps=50_000, seed=0, config=None, env=None,
                     log_path=None):
    """DQN on the grid task; returns (net, per-episode records)."""
    config = config or grid_agent_config()
    env = env or GridWorld()
    rng = np.random.default_rng(seed)
    net = MlpNet([env.obs_size, *GRID_HIDDEN, env.n_actions], rng=rng)
    target = net.clone()
    buffer = ReplayBuffer(config.buffer_size)
    records = []
    total_steps = 0
    learn_steps = 0
    episode = 0
    while total_steps < max_steps:
        obs = env.reset()
        ep_reward = 0.0
        ep_steps = 0
        losses = []
        maes = []
        done = False
        while not done and total_steps < max_steps:
            eps = epsilon_at(total_steps, config)
            action = select_action(net, obs, eps, rng, env.n_actions)
            obs_next, reward, done = env.step(action)
            buffer.push(Transition(obs, action, reward, obs_next, done))
            obs = obs_next
            ep_reward += reward
            ep_steps += 1
            total_steps += 1
            if len(buffer) >= config.warmup_steps:
                batch = buffer.sample(config.batch_size, rng)
                stats = {}
                losses.append(train_step(net, target, batch, config,
                                         mode="dqn", stats=stats))
                maes.append(stats["mae"])
                learn_steps += 1
                sync_target(net, target, config, learn_steps)
        records.append({
            "episode": episode, "steps": ep_steps, "total_reward": ep_reward,
            "loss_mean": float(np.mean(losses)) if losses else 0.0,
            "eps": epsilon_at(total_steps, config),
            "mae_mean": float(np.mean(maes)) if maes else 0.0,
        })
        episode += 1
    if log_path:
        write_training_log(records, log_path)
    return net, records


def evaluate_grid(net, env=None, episodes=200):
    """Greedy rollouts; success = goal reached without collision."""
    env = env or GridWorld()
    successes = 0
    for _ in range(episodes):
        obs = env.reset()
        done = False
        reward = 0.0
        while not done:
            action = int(np.argmax(net.forward(obs)))
            obs, reward, done = env.step(action)
        if env.vehicle_cell == env.goal_cell and reward > 0:
            successes += 1
    return successes / episodes


def run_hierarchical_episode(net, env: HighwayEnv, rng, eps=0.0,
                             policy=None, buffer=None, train_cb=None):
    """One episode of the two-level loop: a decision every 200 ms, 20 steering
    QP solves underneath.  `policy` overrides the net (scripted decisions);
    `train_cb`, when given, is invoked once per stored transition."""
    obs = env.reset(rng=rng)
    done = False
    record = {"steps": 0, "total_reward": 0.0, "collision": False,
              "reached": False, "lanes": [], "fallbacks": 0}
    while not done:
        if policy is not None:
            action = policy(record["steps"], obs)
        else:
            action = select_action(net, obs, eps, rng, env.n_actions)
        obs_next, reward, done, info = env.step(action)
        if buffer is not None:
            buffer.push(Transition(obs, action, reward, obs_next, done))
            if train_cb is not None:
                train_cb()
        obs = obs_next
        record["steps"] += 1
        record["total_reward"] += reward
        record["lanes"].append(info["lane"])
        record["fallbacks"] += info["fallbacks"]
        record["collision"] = record["collision"] or info["collision"]
        record["reached"] = record["reached"] or info["reached"]
    return record


def train_highway_agent(episodes=900, seed=0, config=None, env=None,
                        log_path=None):
    """DDQN on the two-lane hierarchical task; returns (net, records)."""
    config = config or highway_agent_config()
    env = env or HighwayEnv()
    rng = np.random.default_rng(seed)
    net = MlpNet([env.obs_size, *HIGHWAY_HIDDEN, env.n_actions], rng=rng)
    target = net.clone()
    buffer = ReplayBuffer(config.buffer_size)
    records = []
    total_steps = 0
    learn_steps = 0
    for episode in range(episodes):
        losses = []

        def train_cb():
            nonlocal learn_steps
            if len(buffer) >= config.warmup_steps:
                batch = buffer.sample(config.batch_size, rng)
                losses.append(train_step(net, target, batch, config, mode="ddqn"))
                learn_steps += 1
                sync_target(net, target, config, learn_steps)

        eps = epsilon_at(total_steps, config)
        rec = run_hierarchical_episode(net, env, rng, eps=eps, buffer=buffer,
                                       train_cb=train_cb)
        total_steps += rec["steps"]
        records.append({
            "episode": episode, "steps": rec["steps"],
            "total_reward": rec["total_reward"],
            "loss_mean": float(np.mean(losses)) if losses else 0.0,
            "eps": epsilon_at(total_steps, config),
            "collision": rec["collision"], "reached": rec["reached"],
        })
    if log_path:
        write_training_log(records, log_path)
    return net, records


def evaluate_highway(net, env=None, episodes=100, seed=1):
    """Greedy rollouts with jittered obstacle placement; returns the fraction
    of collision-free goal reaches."""
    env = env or HighwayEnv()
    rng = np.random.default_rng(seed)
    successes = 0
    for _ in range(episodes):
        rec = run_hierarchical_episode(net, env, rng, eps=0.0)
        if rec["reached"] and not rec["collision"]:
            successes += 1
    return successes / episodes
