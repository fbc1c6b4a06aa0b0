#!/usr/bin/env python3
"""
PPO training for the regulator policy

Whole episodes go into an on-policy buffer; each update computes discounted
returns, plain (return - value) advantages and the clipped surrogate, then
clears the buffer.
"""

import copy
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from agent import PolicyNetwork, greedy_place, masked_log_probs, policy_act
from bookshelf import Netlist
from errors import ConfigError, IoError, NonFiniteLoss
from geometry import Mode, PlacementState
from regulator_env import EnvConfig, RegulatorEnv, evaluate

CHECKPOINT_FORMAT = 'macro-regulator-policy'
CHECKPOINT_VERSION = 2
CURVE_COLUMNS = ['episode', 'mean_reward', 'final_hpwl', 'final_regularity']


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 2.5e-3
    episodes: int = 1000
    update_epochs: int = 10
    batch_size: int = 64
    buffer_capacity: int = 5120
    clip_eps: float = 0.2
    grad_clip_norm: float = 0.5
    gamma: float = 0.95
    alpha: float = 0.7
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    mask_prior: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ConfigError(f"clip_eps must be positive, got {self.clip_eps}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.episodes < 0 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ConfigError("episodes, batch_size and buffer_capacity must be non-negative counts")


@dataclass
class Transition:
    stack: np.ndarray
    valid: np.ndarray
    action: int
    log_prob: float
    value: float
    reward: float
    done: bool


class RolloutBuffer:
    """On-policy storage of whole episodes, cleared after every update"""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.transitions: List[Transition] = []

    def __len__(self):
        return len(self.transitions)

    def can_fit(self, steps: int) -> bool:
        return len(self.transitions) + steps <= self.capacity

    def add_episode(self, episode: Sequence[Transition]):
        if not self.can_fit(len(episode)):
            raise ValueError(f"episode of {len(episode)} steps does not fit "
                             f"({len(self)}/{self.capacity} used)")
        self.transitions.extend(episode)

    def clear(self):
        self.transitions = []

    def batch(self, gamma: float, dtype=torch.float32) -> Dict[str, torch.Tensor]:
        """Tensors for the whole buffer, with returns and advantages"""
        rewards = [t.reward for t in self.transitions]
        dones = [t.done for t in self.transitions]
        values = np.array([t.value for t in self.transitions])
        returns = discounted_returns(rewards, dones, gamma)
        return {
            'stacks': torch.as_tensor(np.stack([t.stack for t in self.transitions]), dtype=dtype),
            'valid': torch.as_tensor(np.stack([t.valid for t in self.transitions])),
            'actions': torch.as_tensor([t.action for t in self.transitions], dtype=torch.int64),
            'old_log_probs': torch.as_tensor([t.log_prob for t in self.transitions], dtype=dtype),
            'returns': torch.as_tensor(returns, dtype=dtype),
            'advantages': torch.as_tensor(returns - values, dtype=dtype),
        }


def discounted_returns(rewards: Sequence[float], dones: Sequence[bool], gamma: float) -> np.ndarray:
    """G_t = r_t + gamma * G_{t+1}, restarting after every done"""
    returns = np.zeros(len(rewards))
    running = 0.0
    for t in reversed(range(len(rewards))):
        if dones[t]:
            running = 0.0
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def clipped_surrogate(ratio: torch.Tensor, advantage: torch.Tensor, clip_eps: float) -> torch.Tensor:
    """Per-sample min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)"""
    clipped = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return torch.min(ratio * advantage, clipped * advantage)


def ppo_loss(policy: PolicyNetwork, batch: Dict[str, torch.Tensor], config: PPOConfig):
    """Total loss and its parts for one minibatch"""
    output = policy(batch['stacks'], batch['valid'])
    log_probs, entropy = masked_log_probs(output.logits, batch['valid'].flatten(1))
    chosen = log_probs.gather(1, batch['actions'].unsqueeze(1)).squeeze(1)
    ratio = torch.exp(chosen - batch['old_log_probs'])

    policy_loss = -clipped_surrogate(ratio, batch['advantages'], config.clip_eps).mean()
    value_loss = ((output.value - batch['returns']) ** 2).mean()
    entropy = entropy.mean()
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
    return loss, {
        'policy_loss': policy_loss.item(),
        'value_loss': value_loss.item(),
        'entropy': entropy.item(),
    }


@dataclass
class RolloutStats:
    episodes: int = 0
    steps: int = 0
    episode_rewards: List[float] = field(default_factory=list)
    final_hpwl: List[float] = field(default_factory=list)
    final_regularity: List[float] = field(default_factory=list)
    completed: List[bool] = field(default_factory=list)
    final_states: List[Optional[PlacementState]] = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.episode_rewards)) if self.episode_rewards else 0.0

    @property
    def mean_final_hpwl(self) -> float:
        return float(np.mean(self.final_hpwl)) if self.final_hpwl else 0.0


def collect_rollout(env: RegulatorEnv, policy: PolicyNetwork, buffer: RolloutBuffer,
                    generator: Optional[torch.Generator] = None,
                    initial: Optional[PlacementState] = None,
                    max_episodes: Optional[int] = None) -> RolloutStats:
    """Sample whole episodes until the next one might not fit the buffer"""
    stats = RolloutStats()
    policy.eval()
    while buffer.can_fit(env.episode_length) and env.episode_length > 0:
        if max_episodes is not None and stats.episodes >= max_episodes:
            break
        observation = env.reset(initial)
        episode, rewards = [], []
        while not env.done:
            action, log_prob, value = policy_act(observation, policy, generator)
            stack, valid = observation.stack(), observation.valid()
            result = env.step(action)
            episode.append(Transition(stack, valid, action, log_prob, value, result.reward, result.done))
            rewards.append(result.reward)
            observation = result.observation
        buffer.add_episode(episode)

        stats.episodes += 1
        stats.steps += len(episode)
        stats.episode_rewards.append(float(np.mean(rewards)))
        stats.final_hpwl.append(env.hpwl)
        stats.final_regularity.append(env.regularity)
        stats.completed.append(env.completed())
        stats.final_states.append(env.state.copy() if env.completed() else None)
    return stats


def greedy_rollout(env: RegulatorEnv, policy: PolicyNetwork,
                   initial: Optional[PlacementState] = None):
    """Final (hpwl, placement) of one argmax episode; placement is None unless completed"""
    policy.eval()
    observation = env.reset(initial)
    while not env.done:
        action, _, _ = policy_act(observation, policy, greedy=True)
        observation = env.step(action).observation
    return env.hpwl, (env.state.copy() if env.completed() else None)


def _restore(policy, optimizer, policy_state, optimizer_state):
    policy.load_state_dict(policy_state)
    optimizer.load_state_dict(optimizer_state)


def ppo_update(buffer: RolloutBuffer, policy: PolicyNetwork, optimizer: torch.optim.Optimizer,
               config: PPOConfig, generator: Optional[torch.Generator] = None) -> Dict[str, float]:
    """update_epochs passes of shuffled minibatches; the buffer is always cleared

    A non-finite loss rolls the policy and optimizer back and raises NonFiniteLoss.
    """
    if len(buffer) == 0:
        raise ValueError("ppo_update needs a non-empty buffer")
    dtype = next(policy.parameters()).dtype
    batch = buffer.batch(config.gamma, dtype)
    policy_state = copy.deepcopy(policy.state_dict())
    optimizer_state = copy.deepcopy(optimizer.state_dict())

    policy.train()
    n = len(buffer)
    totals = {'policy_loss': 0.0, 'value_loss': 0.0, 'entropy': 0.0}
    updates = 0
    try:
        for _ in range(config.update_epochs):
            order = torch.randperm(n, generator=generator)
            for start in range(0, n, config.batch_size):
                index = order[start:start + config.batch_size]
                minibatch = {key: value[index] for key, value in batch.items()}
                loss, parts = ppo_loss(policy, minibatch, config)
                if not torch.isfinite(loss):
                    _restore(policy, optimizer, policy_state, optimizer_state)
                    raise NonFiniteLoss(f"loss became {float(loss)} at update {updates}")
                optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(policy.parameters(), config.grad_clip_norm)
                optimizer.step()
                for key in totals:
                    totals[key] += parts[key]
                updates += 1
    finally:
        buffer.clear()

    stats = {key: value / updates for key, value in totals.items()}
    stats['updates'] = updates
    return stats


@dataclass
class TrainResult:
    policy: PolicyNetwork
    best_state_dict: Dict[str, torch.Tensor]
    best_hpwl: float
    best_placement: Optional[PlacementState]
    initial_hpwl: Optional[float]
    curve: pd.DataFrame


def train(netlist: Netlist, env_config: EnvConfig, ppo_config: PPOConfig,
          initial: Optional[PlacementState] = None, progress: bool = True) -> TrainResult:
    """Alternate rollouts and PPO updates for ppo_config.episodes episodes

    Regulate mode without an initial placement starts every episode from the
    greedy Place-mode layout. The reward blend uses ppo_config.alpha. After
    each rollout one argmax episode of the pre-update policy also competes for
    the best checkpoint.
    """
    env_config = replace(env_config, alpha=ppo_config.alpha)
    torch.manual_seed(ppo_config.seed)
    generator = torch.Generator().manual_seed(ppo_config.seed)
    policy = PolicyNetwork(env_config.n_grid, env_config.alpha, ppo_config.mask_prior)
    optimizer = torch.optim.Adam(policy.parameters(), lr=ppo_config.learning_rate)
    env = RegulatorEnv(env_config, netlist)

    initial_hpwl = None
    if env_config.mode == Mode.REGULATE:
        if initial is None:
            initial = greedy_place(netlist, env_config.n_grid, env_config.order_rule)
        initial_hpwl = evaluate(netlist, initial)[0]

    episode_length = max(env.episode_length, 1)
    if ppo_config.episodes and ppo_config.buffer_capacity < episode_length:
        raise ConfigError(f"buffer_capacity {ppo_config.buffer_capacity} cannot hold "
                          f"one {episode_length}-step episode")

    best_state_dict = copy.deepcopy(policy.state_dict())
    best_hpwl, best_placement = float('inf'), None
    rows = []
    buffer = RolloutBuffer(ppo_config.buffer_capacity)
    print(f"🏋️ Training {ppo_config.episodes} episodes on {len(netlist.macros)} macros "
          f"({env_config.mode.value}, alpha {env_config.alpha}, grid {env_config.n_grid})")

    with tqdm(total=ppo_config.episodes, desc="episodes", disable=not progress) as bar:
        while len(rows) < ppo_config.episodes:
            remaining = ppo_config.episodes - len(rows)
            snapshot = copy.deepcopy(policy.state_dict())
            stats = collect_rollout(env, policy, buffer, generator, initial,
                                    max_episodes=min(ppo_config.buffer_capacity // episode_length, remaining))
            for i in range(stats.episodes):
                rows.append({
                    'episode': len(rows) + 1,
                    'mean_reward': stats.episode_rewards[i],
                    'final_hpwl': stats.final_hpwl[i],
                    'final_regularity': stats.final_regularity[i],
                })
                if stats.completed[i] and stats.final_hpwl[i] < best_hpwl:
                    best_hpwl = stats.final_hpwl[i]
                    best_state_dict = snapshot
                    best_placement = stats.final_states[i]
            bar.update(stats.episodes)

            hpwl, placement = greedy_rollout(env, policy, initial)
            if placement is not None and hpwl < best_hpwl:
                best_hpwl, best_state_dict, best_placement = hpwl, snapshot, placement

            update = ppo_update(buffer, policy, optimizer, ppo_config, generator)
            bar.set_postfix(reward=f"{stats.mean_reward:.3f}", hpwl=f"{stats.mean_final_hpwl:.1f}")
            print(f"🏋️ Update after episode {len(rows)}: policy {update['policy_loss']:.4f}, "
                  f"value {update['value_loss']:.4f}, entropy {update['entropy']:.4f}")

    curve = pd.DataFrame(rows, columns=CURVE_COLUMNS)
    print(f"✅ Training finished; best final hpwl {best_hpwl:.4f}")
    return TrainResult(policy, best_state_dict, best_hpwl, best_placement, initial_hpwl, curve)


def write_curve_csv(curve: pd.DataFrame, path):
    try:
        curve.to_csv(path, index=False)
    except OSError as e:
        raise IoError(f"cannot write learning curve {path}: {e}")


def save_checkpoint(path, policy: PolicyNetwork, ppo_config: PPOConfig,
                    meta: Optional[Dict] = None, state_dict: Optional[Dict] = None):
    """torch file with a format/version header; state_dict defaults to the live params"""
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'n_grid': policy.n_grid,
        'state_dict': state_dict if state_dict is not None else policy.state_dict(),
        'ppo_config': asdict(ppo_config),
        'meta': dict(meta or {}),
    }
    try:
        torch.save(payload, Path(path))
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}")
    print(f"📂 Saved checkpoint {path}")


def load_checkpoint(path):
    """(policy, payload) from a file written by save_checkpoint"""
    path = Path(path)
    if not path.exists():
        raise IoError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location='cpu')
    if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
        raise IoError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise IoError(f"unsupported checkpoint version {payload.get('version')}")
    policy = PolicyNetwork(int(payload['n_grid']))
    policy.load_state_dict(payload['state_dict'])
    policy.eval()
    return policy, payload
