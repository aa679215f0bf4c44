"""Value-based deep RL built on plain numpy: MLP + Adam, replay buffer,
DQN/DDQN targets, grid and highway environments, and the hierarchical
training loop that couples lane decisions to the steering QP."""

from .net import MlpNet, mlp_forward, save_checkpoint, load_checkpoint
from .agent import (AgentConfig, ReplayBuffer, Transition, compute_targets,
                    epsilon_at, select_action, sync_target, train_step)
from .envs import (GridWorld, HighwayEnv, HighwayEnvConfig, HighwayObstacle,
                   grid_env_step, highway_env_step,
                   GRID_ACTIONS, HIGHWAY_ACTIONS)
from .training import (grid_agent_config, highway_agent_config,
                       train_grid_agent, evaluate_grid,
                       train_highway_agent, evaluate_highway,
                       run_hierarchical_episode, write_training_log)

__all__ = [
    "MlpNet", "mlp_forward", "save_checkpoint", "load_checkpoint",
    "AgentConfig", "ReplayBuffer", "Transition", "compute_targets",
    "epsilon_at", "select_action", "sync_target", "train_step",
    "GridWorld", "HighwayEnv", "HighwayEnvConfig", "HighwayObstacle",
    "grid_env_step", "highway_env_step", "GRID_ACTIONS", "HIGHWAY_ACTIONS",
    "grid_agent_config", "highway_agent_config", "train_grid_agent",
    "evaluate_grid", "train_highway_agent", "evaluate_highway",
    "run_hierarchical_episode", "write_training_log",
]
