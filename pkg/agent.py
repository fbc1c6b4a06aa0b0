#!/usr/bin/env python3
"""
Agents for the regulator environment: greedy and random baselines, the policy
network, and helpers that run whole episodes or regulation passes
"""

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from bookshelf import Netlist
from errors import NoValidPosition, ShapeMismatch
from geometry import Canvas, Cell, Mode, PlacementState
from masks import blended_argmin
from regulator_env import EnvConfig, Observation, OrderRule, RegulatorEnv, StepResult, evaluate

Chooser = Callable[[Observation], Cell]


def greedy_act(observation: Observation, alpha: float) -> Cell:
    """Best blended cell: alpha * unit(wire) + (1 - alpha) * unit(regular), row-major ties"""
    cell = blended_argmin(observation.wire_raw, observation.regular_raw, alpha)
    if cell is None:
        raise NoValidPosition(observation.macro_id)
    return cell


def random_act(observation: Observation, rng: np.random.Generator) -> Cell:
    cells = np.argwhere(observation.valid())
    if len(cells) == 0:
        raise NoValidPosition(observation.macro_id)
    gx, gy = cells[int(rng.integers(len(cells)))]
    return int(gx), int(gy)


def run_episode(env: RegulatorEnv, choose: Chooser,
                initial: Optional[PlacementState] = None) -> List[StepResult]:
    """Reset and play one episode with choose; returns every step result"""
    observation = env.reset(initial)
    results = []
    while not env.done:
        cell = choose(observation)
        result = env.step(env.canvas.encode(cell))
        results.append(result)
        observation = result.observation
    return results


def _placed_or_raise(env: RegulatorEnv) -> PlacementState:
    if not env.completed():
        raise NoValidPosition(env.order[env.index])
    return env.state


def greedy_place(netlist: Netlist, n_grid: int,
                 order_rule: OrderRule = OrderRule.AREA_THEN_NETS,
                 alpha: float = 1.0) -> PlacementState:
    """Place-mode greedy rollout from an empty canvas"""
    config = EnvConfig(mode=Mode.PLACE, alpha=alpha, n_grid=n_grid, order_rule=order_rule)
    env = RegulatorEnv(config, netlist)
    run_episode(env, lambda obs: greedy_act(obs, alpha))
    return _placed_or_raise(env)


def random_place(netlist: Netlist, canvas: Canvas, seed: int,
                 order_rule: OrderRule = OrderRule.AREA_THEN_NETS) -> PlacementState:
    """Place-mode rollout choosing uniformly among valid cells"""
    rng = np.random.default_rng(seed)
    config = EnvConfig(mode=Mode.PLACE, alpha=1.0, n_grid=canvas.n_grid, order_rule=order_rule)
    env = RegulatorEnv(config, netlist)
    run_episode(env, lambda obs: random_act(obs, rng))
    return _placed_or_raise(env)


@dataclass
class PassRecord:
    index: int
    hpwl: float
    regularity: float
    status: str


def regulate_passes(netlist: Netlist, initial: PlacementState, config: EnvConfig,
                    choose: Chooser, passes: int = 1) -> Tuple[PlacementState, List[PassRecord]]:
    """Run Regulate episodes, each starting from the previous pass's output

    A pass that strands keeps the placement it started from.
    """
    config = replace(config, mode=Mode.REGULATE)
    env = RegulatorEnv(config, netlist)
    current = initial
    records = []
    for index in range(passes):
        results = run_episode(env, choose, current)
        status = results[-1].status if results else 'ok'
        if env.completed():
            current = env.state.copy()
        else:
            print(f"⚠️ Pass {index + 1} ended with status {status}; keeping its starting placement")
        hpwl, regularity = evaluate(netlist, current)
        records.append(PassRecord(index + 1, hpwl, regularity, status))
        print(f"🧭 Pass {index + 1}/{passes}: hpwl {hpwl:.4f}, regularity {regularity:.4f}")
    return current, records


# Policy network

@dataclass
class PolicyOutput:
    logits: torch.Tensor
    value: torch.Tensor


def _deconv(in_channels: int, out_channels: int, stride: int) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(in_channels, out_channels, 3, stride=stride, padding=1,
                              output_padding=stride - 1)


class PolicyNetwork(nn.Module):
    """Actor-critic over the N x N action grid

    Local path: 1x1 convolutions fuse (canvas, position, wire, regular) into one
    map. Global path: a strided conv encoder turns the canvas image into a
    784-dim embedding that a deconvolution stack decodes back to 224 x 224
    (resized to N). A 1x1 conv merges both maps into logits; the value head
    reads the embedding.

    The merge starts at zero and a learnable coefficient adds
    -(alpha * unit(wire) + (1 - alpha) * unit(regular)) to the logits, so an
    untrained policy already leans toward the greedy cell.
    """

    EMBEDDING = 784
    DECODED = 224

    def __init__(self, n_grid: int, alpha: float = 0.7, mask_prior: float = 0.0):
        super().__init__()
        self.n_grid = n_grid
        self.register_buffer('alpha', torch.tensor(float(alpha)))
        self.mask_prior = nn.Parameter(torch.tensor(float(mask_prior)))
        self.local_fusion = nn.Sequential(
            nn.Conv2d(4, 12, 1), nn.ReLU(),
            nn.Conv2d(12, 12, 1), nn.ReLU(),
            nn.Conv2d(12, 1, 1),
        )
        self.encoder = nn.Sequential(
            nn.Conv2d(1, 8, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(7),
            nn.Flatten(),
            nn.Linear(self.EMBEDDING, self.EMBEDDING), nn.ReLU(),
        )
        self.decoder = nn.Sequential(
            _deconv(4, 8, 1), nn.ReLU(),    # 14
            _deconv(8, 4, 2), nn.ReLU(),    # 28
            _deconv(4, 2, 2), nn.ReLU(),    # 56
            _deconv(2, 1, 2), nn.ReLU(),    # 112
            _deconv(1, 1, 2),               # 224
        )
        self.merge = nn.Conv2d(2, 1, 1)
        nn.init.zeros_(self.merge.weight)
        nn.init.zeros_(self.merge.bias)
        self.value_head = nn.Sequential(
            nn.Linear(self.EMBEDDING, 64), nn.ReLU(),
            nn.Linear(64, 64), nn.ReLU(),
            nn.Linear(64, 1),
        )

    def forward(self, stacks: torch.Tensor, valid: torch.Tensor) -> PolicyOutput:
        """stacks (B, 4, N, N), valid (B, N, N) -> logits (B, N*N) in action order, value (B,)"""
        if stacks.dim() != 4 or stacks.shape[1:] != (4, self.n_grid, self.n_grid):
            raise ShapeMismatch(f"expected (B, 4, {self.n_grid}, {self.n_grid}) input, "
                                f"got {tuple(stacks.shape)}")
        if valid.shape != (stacks.shape[0], self.n_grid, self.n_grid):
            raise ShapeMismatch(f"valid mask shape {tuple(valid.shape)} does not match input")

        local = self.local_fusion(stacks)
        embedding = self.encoder(stacks[:, :1])
        decoded = self.decoder(embedding.view(-1, 4, 14, 14))
        if self.n_grid != self.DECODED:
            decoded = F.interpolate(decoded, size=(self.n_grid, self.n_grid),
                                    mode='bilinear', align_corners=False)
        logits = self.merge(torch.cat([local, decoded], dim=1)).flatten(1)
        blended = (self.alpha * _unit_rows(stacks[:, 2], valid)
                   + (1 - self.alpha) * _unit_rows(stacks[:, 3], valid))
        logits = logits - self.mask_prior * blended.flatten(1)
        logits = logits.masked_fill(~valid.flatten(1), float('-inf'))
        value = self.value_head(embedding).squeeze(-1)
        return PolicyOutput(logits, value)


def _unit_rows(channel: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Per-sample min-max of (B, N, N) values over valid cells; 0 elsewhere or when flat"""
    low = torch.where(valid, channel, torch.full_like(channel, float('inf'))).amin(dim=(1, 2), keepdim=True)
    high = torch.where(valid, channel, torch.full_like(channel, float('-inf'))).amax(dim=(1, 2), keepdim=True)
    span = high - low
    spread = span > 0
    unit = (channel - torch.where(spread, low, torch.zeros_like(low))) / torch.where(spread, span, torch.ones_like(span))
    return torch.where(valid & spread, unit, torch.zeros_like(unit))


def observation_tensors(observation: Observation, dtype=torch.float32) -> Tuple[torch.Tensor, torch.Tensor]:
    stacks = torch.as_tensor(observation.stack(), dtype=dtype).unsqueeze(0)
    valid = torch.as_tensor(observation.valid()).unsqueeze(0)
    return stacks, valid


def policy_forward(observation: Observation, policy: PolicyNetwork) -> PolicyOutput:
    """Single-observation forward pass; logits come back as an (N, N) grid"""
    if observation.n_grid != policy.n_grid:
        raise ShapeMismatch(f"observation grid {observation.n_grid} != policy grid {policy.n_grid}")
    dtype = next(policy.parameters()).dtype
    output = policy(*observation_tensors(observation, dtype))
    return PolicyOutput(output.logits.view(policy.n_grid, policy.n_grid), output.value[0])


def masked_log_probs(logits: torch.Tensor, valid: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Log-probabilities (-inf on invalid cells) and entropy, both per row"""
    log_probs = torch.log_softmax(logits, dim=-1)
    probs = torch.softmax(logits, dim=-1)
    safe = torch.where(valid, log_probs, torch.zeros_like(log_probs))
    entropy = -(probs * safe).sum(dim=-1)
    return log_probs, entropy


def policy_act(observation: Observation, policy: PolicyNetwork,
               generator: Optional[torch.Generator] = None,
               greedy: bool = False) -> Tuple[int, float, float]:
    """(action, log-prob, value); greedy takes the argmax of the masked logits"""
    with torch.no_grad():
        output = policy_forward(observation, policy)
        logits = output.logits.flatten()
        log_probs = torch.log_softmax(logits, dim=-1)
        if greedy:
            action = int(torch.argmax(logits))
        else:
            action = int(torch.multinomial(log_probs.exp(), 1, generator=generator))
    return action, float(log_probs[action]), float(output.value)


def policy_chooser(policy: PolicyNetwork, canvas: Canvas) -> Chooser:
    """Deterministic chooser for regulate_passes backed by a trained policy"""
    policy.eval()

    def choose(observation: Observation) -> Cell:
        action, _, _ = policy_act(observation, policy, greedy=True)
        return canvas.decode(action)

    return choose
