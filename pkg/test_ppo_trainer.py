#!/usr/bin/env python3
"""
Tests for PPO training: returns, surrogate, rollouts, updates, checkpoints
"""

import warnings

import numpy as np
import pandas as pd
import pytest
import torch

from agent import PolicyNetwork, greedy_place, masked_log_probs, random_place
from bookshelf import gen_synthetic
from errors import ConfigError, IoError, NoValidPosition, NonFiniteLoss
from geometry import Canvas, Mode
from ppo_trainer import (
    CURVE_COLUMNS,
    PPOConfig,
    RolloutBuffer,
    Transition,
    clipped_surrogate,
    collect_rollout,
    discounted_returns,
    load_checkpoint,
    ppo_loss,
    ppo_update,
    save_checkpoint,
    train,
    write_curve_csv,
)
from regulator_env import EnvConfig, RegulatorEnv, evaluate
from regulator_fixtures import main_for, small_synthetic


def _placeable_chip():
    for seed in range(50):
        netlist = small_synthetic(seed, k=6, n=10)
        try:
            return netlist, greedy_place(netlist, 16)
        except NoValidPosition:
            continue
    raise AssertionError("no placeable chip")


def _single_step_transitions(n_grid, rewards, values, rng):
    """Independent one-step episodes on random inputs, all cells valid"""
    transitions = []
    for i, (reward, value) in enumerate(zip(rewards, values)):
        stack = rng.random((4, n_grid, n_grid)).astype(np.float32)
        valid = np.ones((n_grid, n_grid), dtype=bool)
        transitions.append(Transition(stack, valid, i, -1.0, value, reward, True))
    return transitions


def test_discounted_returns():
    assert np.allclose(discounted_returns([1.0, 0.5], [False, True], 0.95), [1.475, 0.5])
    returns = discounted_returns([1.0, 1.0, 1.0, 1.0], [False, True, False, True], 0.95)
    assert np.allclose(returns, [1.95, 1.0, 1.95, 1.0])


def test_clipped_surrogate():
    ratio = torch.tensor([1.5, 0.5, 1.5, 1.0])
    advantage = torch.tensor([2.0, -1.0, -1.0, 3.0])
    surrogate = clipped_surrogate(ratio, advantage, 0.2)
    assert torch.allclose(surrogate, torch.tensor([2.4, -0.8, -1.5, 3.0]))


def test_rollout_buffer_capacity():
    buffer = RolloutBuffer(3)
    rng = np.random.default_rng(0)
    buffer.add_episode(_single_step_transitions(8, [1.0, 1.0], [0.0, 0.0], rng))
    assert len(buffer) == 2 and buffer.can_fit(1) and not buffer.can_fit(2)
    with pytest.raises(ValueError):
        buffer.add_episode(_single_step_transitions(8, [1.0, 1.0], [0.0, 0.0], rng))
    batch = buffer.batch(0.95)
    assert batch['stacks'].shape == (2, 4, 8, 8)
    assert torch.allclose(batch['advantages'], torch.tensor([1.0, 1.0]))
    buffer.clear()
    assert len(buffer) == 0


def _rollout(netlist, initial, capacity=18, seed=0):
    torch.manual_seed(seed)
    policy = PolicyNetwork(16)
    env = RegulatorEnv(EnvConfig(mode=Mode.REGULATE, n_grid=16), netlist)
    buffer = RolloutBuffer(capacity)
    stats = collect_rollout(env, policy, buffer, torch.Generator().manual_seed(seed), initial)
    return env, buffer, stats


def test_collect_rollout_fills_whole_episodes():
    netlist, initial = _placeable_chip()
    env, buffer, stats = _rollout(netlist, initial)
    assert stats.episodes == 3 and stats.steps == 18 and len(buffer) == 18
    assert all(stats.completed)
    dones = [t.done for t in buffer.transitions]
    assert dones == ([False] * 5 + [True]) * 3
    for t in buffer.transitions:
        assert t.valid[divmod(t.action, 16)]
        assert 0.0 <= t.reward <= 1.0
    initial_hpwl, _ = evaluate(netlist, initial)
    for hpwl, state in zip(stats.final_hpwl, stats.final_states):
        assert evaluate(netlist, state)[0] == hpwl
    assert stats.mean_final_hpwl > 0 and initial_hpwl > 0


def test_rollout_is_deterministic_and_replayable():
    netlist, initial = _placeable_chip()
    env_a, buffer_a, _ = _rollout(netlist, initial)
    env_b, buffer_b, _ = _rollout(netlist, initial)
    assert [t.action for t in buffer_a.transitions] == [t.action for t in buffer_b.transitions]
    assert [t.reward for t in buffer_a.transitions] == [t.reward for t in buffer_b.transitions]
    assert env_a.transcript == env_b.transcript

    # the last episode's actions replay to the same rewards on a fresh env
    replay = RegulatorEnv(env_a.config, netlist)
    replay.reset(initial)
    for line, recorded in zip(env_a.transcript, buffer_a.transitions[-6:]):
        result = replay.step(int(line.split()[2]))
        assert result.reward == recorded.reward
    assert replay.transcript == env_a.transcript


def _params(module):
    return [p.detach().clone() for p in module.parameters()]


def test_zero_advantages_leave_policy_path_unchanged():
    torch.manual_seed(0)
    policy = PolicyNetwork(8)
    config = PPOConfig(entropy_coef=0.0, batch_size=2, update_epochs=2)
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)
    rewards = [0.25, 0.5, 0.75, 1.0]
    buffer = RolloutBuffer(8)
    buffer.add_episode(_single_step_transitions(8, rewards, rewards, np.random.default_rng(1)))

    before = {name: _params(getattr(policy, name)) for name in ('local_fusion', 'decoder', 'merge')}
    stats = ppo_update(buffer, policy, optimizer, config, torch.Generator().manual_seed(0))
    assert all(type(stats[key]) is float for key in ('policy_loss', 'value_loss', 'entropy'))
    for name, params in before.items():
        for old, new in zip(params, getattr(policy, name).parameters()):
            assert torch.equal(old, new), name
    assert len(buffer) == 0


def test_loss_parts_are_plain_floats():
    torch.manual_seed(0)
    policy = PolicyNetwork(8, alpha=0.7, mask_prior=5.0)
    buffer = RolloutBuffer(4)
    buffer.add_episode(_single_step_transitions(8, [0.2, 0.8], [0.1, 0.3], np.random.default_rng(4)))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        loss, parts = ppo_loss(policy, buffer.batch(0.95), PPOConfig())
    assert loss.requires_grad
    assert all(type(value) is float for value in parts.values())
    assert not [w for w in caught if 'requires_grad' in str(w.message)]


def test_non_finite_loss_rolls_back():
    torch.manual_seed(0)
    policy = PolicyNetwork(8)
    config = PPOConfig(batch_size=4, update_epochs=1)
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)
    buffer = RolloutBuffer(8)
    buffer.add_episode(_single_step_transitions(8, [float('nan'), 1.0], [0.0, 0.0], np.random.default_rng(2)))

    before = _params(policy)
    with pytest.raises(NonFiniteLoss):
        ppo_update(buffer, policy, optimizer, config)
    assert all(torch.equal(a, b) for a, b in zip(before, policy.parameters()))
    assert len(buffer) == 0


def test_loss_gradients_match_finite_differences():
    print("1. Central differences on 20 sampled parameters...")
    torch.manual_seed(3)
    policy = PolicyNetwork(8).double()
    rng = np.random.default_rng(3)
    config = PPOConfig()

    transitions = _single_step_transitions(8, [0.3, 0.9, 0.1], [0.2, 0.1, 0.4], rng)
    transitions[1].valid[0, :4] = False
    transitions[1].action = 20
    buffer = RolloutBuffer(3)
    buffer.add_episode(transitions)
    batch = buffer.batch(config.gamma, torch.float64)

    # old log-probs a little off the current ones keep every ratio inside the clip range
    with torch.no_grad():
        output = policy(batch['stacks'], batch['valid'])
        current, _ = masked_log_probs(output.logits, batch['valid'].flatten(1))
        chosen = current.gather(1, batch['actions'].unsqueeze(1)).squeeze(1)
    batch['old_log_probs'] = chosen + torch.tensor([0.05, -0.04, 0.03], dtype=torch.float64)

    policy.zero_grad()
    loss, _ = ppo_loss(policy, batch, config)
    loss.backward()

    params = list(policy.parameters())
    sizes = np.array([p.numel() for p in params], dtype=float)
    h = 1e-6
    for _ in range(20):
        which = int(rng.choice(len(params), p=sizes / sizes.sum()))
        param = params[which]
        flat = int(rng.integers(param.numel()))
        analytic = float(param.grad.view(-1)[flat])
        with torch.no_grad():
            original = float(param.view(-1)[flat])
            param.view(-1)[flat] = original + h
            plus = float(ppo_loss(policy, batch, config)[0])
            param.view(-1)[flat] = original - h
            minus = float(ppo_loss(policy, batch, config)[0])
            param.view(-1)[flat] = original
        numeric = (plus - minus) / (2 * h)
        assert abs(numeric - analytic) <= 1e-3 * max(abs(numeric), abs(analytic)) + 1e-7, \
            (which, flat, numeric, analytic)


def test_train_without_episodes():
    netlist, initial = _placeable_chip()
    env_config = EnvConfig(mode=Mode.REGULATE, n_grid=16)
    result = train(netlist, env_config, PPOConfig(episodes=0), initial=initial, progress=False)
    assert list(result.curve.columns) == CURVE_COLUMNS and result.curve.empty
    assert result.initial_hpwl == evaluate(netlist, initial)[0]
    assert result.best_placement is None

    with pytest.raises(ConfigError):
        train(netlist, env_config, PPOConfig(episodes=1, buffer_capacity=2), initial=initial, progress=False)
    with pytest.raises(ConfigError):
        PPOConfig(gamma=0.0)


def test_train_is_deterministic(tmp_path):
    netlist, initial = _placeable_chip()
    env_config = EnvConfig(mode=Mode.REGULATE, n_grid=16)
    ppo_config = PPOConfig(episodes=5, buffer_capacity=12, batch_size=4, update_epochs=2, seed=7)
    first = train(netlist, env_config, ppo_config, initial=initial, progress=False)
    second = train(netlist, env_config, ppo_config, initial=initial, progress=False)

    pd.testing.assert_frame_equal(first.curve, second.curve)
    assert list(first.curve['episode']) == [1, 2, 3, 4, 5]
    for key, value in first.policy.state_dict().items():
        assert torch.equal(value, second.policy.state_dict()[key]), key
    # argmax evaluation episodes also compete for the best checkpoint
    assert first.best_hpwl <= min(first.curve['final_hpwl'])
    assert evaluate(netlist, first.best_placement)[0] == first.best_hpwl

    path = tmp_path / 'curve.csv'
    write_curve_csv(first.curve, path)
    assert list(pd.read_csv(path).columns) == CURVE_COLUMNS


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(0)
    policy = PolicyNetwork(8)
    path = tmp_path / 'policy.ckpt'
    save_checkpoint(path, policy, PPOConfig(episodes=3), meta={'chip': 'toy'})
    loaded, payload = load_checkpoint(path)
    assert loaded.n_grid == 8
    assert payload['meta'] == {'chip': 'toy'} and payload['ppo_config']['episodes'] == 3
    for key, value in policy.state_dict().items():
        assert torch.equal(value, loaded.state_dict()[key])

    with pytest.raises(IoError):
        load_checkpoint(tmp_path / 'absent.ckpt')
    torch.save({'format': 'something-else'}, tmp_path / 'other.ckpt')
    with pytest.raises(IoError):
        load_checkpoint(tmp_path / 'other.ckpt')


def test_toy_training_beats_initial_and_random():
    print("1. Training 100 episodes on the toy chip, 3 seeds...")
    netlist = gen_synthetic(42, 10, 20, (320.0, 320.0))
    env_config = EnvConfig(mode=Mode.REGULATE, n_grid=32)
    finals = []
    for seed in range(3):
        ppo_config = PPOConfig(episodes=100, buffer_capacity=200, alpha=1.0, seed=seed)
        result = train(netlist, env_config, ppo_config, progress=False)
        print(f"   seed {seed}: best {result.best_hpwl:.1f}, initial {result.initial_hpwl:.1f}")
        assert result.best_placement is not None
        assert result.best_hpwl <= result.initial_hpwl * (1 + 1e-5)
        finals.append(result.best_hpwl)

    canvas = Canvas.for_netlist(netlist, 32)
    randoms = []
    for seed in range(1000):
        try:
            randoms.append(evaluate(netlist, random_place(netlist, canvas, seed))[0])
        except NoValidPosition:
            continue
        if len(randoms) == 100:
            break
    print(f"   median trained {np.median(finals):.1f} vs median random {np.median(randoms):.1f}")
    assert np.median(finals) <= 0.95 * np.median(randoms)


if __name__ == "__main__":
    print("🚀 PPO trainer tests")
    main_for(__name__)
