#!/usr/bin/env python3
"""
Tests for the placement environment: episodes, rewards, invariants
"""

from dataclasses import replace

import numpy as np
import pytest

from agent import greedy_act, greedy_place, random_act
from bookshelf import gen_synthetic, parse_bundle
from errors import InvalidAction, InvalidInitialPlacement, MissingInitial, NoValidPosition
from geometry import Canvas, Mode, PlacementState, overlap_free
from masks import Mask, MaskKind
from metrics import hpwl_total, regularity_total
from regulator_env import (
    ABLATION_PRESETS,
    EnvConfig,
    OrderRule,
    RegulatorEnv,
    ablation_config,
    macro_order,
    reset,
    reward_components,
)
from regulator_fixtures import main_for, make_netlist, small_synthetic, write_fixture_bundle


def _logical_positions(env: RegulatorEnv):
    """Current placement with the lifted macro back at its previous cell"""
    positions = dict(env.state.positions)
    if not env.done and env.state.mode == Mode.REGULATE:
        mid = env.order[env.index]
        positions[mid] = env.state.previous[mid]
    return positions


def _initial_for(netlist, n_grid):
    try:
        return greedy_place(netlist, n_grid)
    except NoValidPosition:
        return None


def _placeable(start, k=6, n=10, terminals=2):
    """First synthetic chip from seed start on that the greedy placer completes"""
    for seed in range(start, start + 50):
        netlist = small_synthetic(seed, k=k, n=n, terminals=terminals)
        initial = _initial_for(netlist, 16)
        if initial is not None:
            return netlist, initial
    raise AssertionError(f"no placeable chip from seed {start}")


def test_macro_order_rules():
    netlist = make_netlist(
        [('small', 10, 10), ('wide', 40, 10), ('tall', 10, 40), ('busy', 20, 10)],
        nets=[('n0', [('busy', 0, 0), ('small', 0, 0)]),
              ('n1', [('busy', 0, 0), ('tall', 0, 0)])],
    )
    assert macro_order(netlist, OrderRule.AREA_THEN_NETS) == ['tall', 'wide', 'busy', 'small']
    assert macro_order(netlist, OrderRule.AREA_DESC) == ['tall', 'wide', 'busy', 'small']
    assert macro_order(netlist, OrderRule.NET_COUNT_DESC) == ['busy', 'tall', 'small', 'wide']


def test_place_reset_observation(tmp_path):
    netlist = parse_bundle(write_fixture_bundle(tmp_path))
    env = RegulatorEnv(EnvConfig(mode=Mode.PLACE, n_grid=10), netlist)
    observation = env.reset()
    assert env.episode_length == 2
    assert observation.macro_id == 'A' and observation.macro_index == 0
    assert observation.macro_dims == (2, 1)
    stack = observation.stack()
    assert stack.shape == (4, 10, 10) and stack.dtype == np.float32
    assert stack[0, 6, 0] == 1.0  # terminal in the canvas image
    assert stack[1].sum() == observation.valid().sum()
    assert (stack[2][~observation.valid()] == 1.0).all()
    assert np.abs(stack[2]).max() <= 1.0


def test_regulate_reset_validates_initial(tmp_path):
    netlist = parse_bundle(write_fixture_bundle(tmp_path))
    canvas = Canvas.for_netlist(netlist, 10)
    env = RegulatorEnv(EnvConfig(mode=Mode.REGULATE, n_grid=10), netlist)

    partial = PlacementState.from_positions(netlist, canvas, {'A': (0, 0)})
    with pytest.raises(InvalidInitialPlacement):
        env.reset(partial)

    overlapping = PlacementState.from_positions(netlist, canvas, {'A': (0, 0), 'B': (1, 0)})
    with pytest.raises(InvalidInitialPlacement):
        env.reset(overlapping)

    good = PlacementState.from_microns(netlist, canvas, netlist.initial)
    observation = env.reset(good)
    assert observation.wire_raw.at((0, 0)) == 0.0
    assert env.hpwl == 130.0 and env.regularity == 80.0

    place_env = RegulatorEnv(EnvConfig(mode=Mode.PLACE, n_grid=10), netlist)
    with pytest.raises(InvalidInitialPlacement):
        place_env.reset(good)


def test_invalid_action_aborts_episode(tmp_path):
    netlist = parse_bundle(write_fixture_bundle(tmp_path))
    env = RegulatorEnv(EnvConfig(mode=Mode.PLACE, n_grid=10), netlist)
    env.reset()
    result = env.step(10 * 10 + 3)
    assert result.done and result.status == 'invalid_action' and result.reward == 0.0

    env.reset()
    blocked = env.canvas.encode((6, 0))  # terminal cell
    result = env.step(blocked)
    assert result.status == 'invalid_action'
    with pytest.raises(InvalidAction):
        env.step(0)


def test_reward_components():
    valid = np.ones((2, 2), dtype=bool)
    wire = Mask(np.array([[-4.0, 0.0], [2.0, 6.0]]), MaskKind.WIRE_RAW, valid)
    regular = Mask(np.full((2, 2), 3.0), MaskKind.REGULAR_RAW, valid)
    assert reward_components(wire, regular, (0, 0)) == (1.0, 0.0)
    assert reward_components(wire, regular, (1, 1)) == (0.0, 0.0)
    assert reward_components(wire, regular, (0, 1)) == (0.6, 0.0)


def test_unnormalized_reward_is_raw_improvement():
    netlist, initial = _placeable(2, k=4, n=6, terminals=0)
    config = ablation_config('regulate_no_norm', EnvConfig(n_grid=16, alpha=0.5))
    env = RegulatorEnv(config, netlist)
    observation = env.reset(initial)
    cell = greedy_act(observation, 0.5)
    expected = -(0.5 * observation.wire_raw.at(cell) + 0.5 * observation.regular_raw.at(cell))
    result = env.step(env.canvas.encode(cell))
    assert result.reward == pytest.approx(expected)


def test_ablation_presets():
    base = EnvConfig(n_grid=32, alpha=0.7)
    assert set(ABLATION_PRESETS) == {'regulate', 'vanilla_regulate', 'regulate_no_norm',
                                     'place', 'place_regular'}
    vanilla = ablation_config('vanilla_regulate', base)
    assert vanilla.alpha == 1.0 and not vanilla.use_regular_mask and vanilla.mode == Mode.REGULATE
    place = ablation_config('place', base)
    assert place.mode == Mode.PLACE and place.alpha == 1.0
    assert ablation_config('regulate', base) == base
    with pytest.raises(ValueError):
        ablation_config('nope', base)
    with pytest.raises(ValueError):
        EnvConfig(alpha=1.5)


def test_vanilla_observation_zeroes_regular_channel():
    netlist, initial = _placeable(4, k=4, n=6, terminals=0)
    env = RegulatorEnv(ablation_config('vanilla_regulate', EnvConfig(n_grid=16)), netlist)
    observation = env.reset(initial)
    assert (observation.stack()[3][observation.valid()] == 0.0).all()


def _check_tracked_metrics(netlist, n_grid, initial, episodes, rng, steps_limit=None):
    env = RegulatorEnv(EnvConfig(mode=Mode.REGULATE, n_grid=n_grid), netlist)
    steps = 0
    current = initial
    for _ in range(episodes):
        observation = env.reset(current)
        while not env.done:
            result = env.step(env.canvas.encode(random_act(observation, rng)))
            observation = result.observation
            steps += 1
            logical = PlacementState.from_positions(netlist, env.canvas, _logical_positions(env))
            assert env.hpwl == hpwl_total(netlist, logical)
            assert env.regularity == regularity_total(netlist, logical).total
        assert env.completed()
        current = env.state
        if steps_limit is not None and steps >= steps_limit:
            break
    return steps


def test_incremental_hpwl_equals_full_recompute():
    print("1. 1000 random regulate steps with tracked metrics...")
    netlist, initial = _placeable(11)
    steps = _check_tracked_metrics(netlist, 16, initial, 10**6, np.random.default_rng(0), steps_limit=1000)
    print(f"   {steps} steps checked")


def test_tracked_metrics_exact_on_uneven_bins():
    print("2. 20 random episodes on a 320 um canvas at 48 x 48...")
    netlist = gen_synthetic(42, 10, 20, (320.0, 320.0))
    initial = greedy_place(netlist, 48)
    steps = _check_tracked_metrics(netlist, 48, initial, 20, np.random.default_rng(5))
    assert steps == 20 * len(netlist.macros)


def test_random_episodes_never_overlap():
    print("1. Random full episodes in both modes...")
    rng = np.random.default_rng(1)
    finished = {Mode.PLACE: 0, Mode.REGULATE: 0}
    chips = [small_synthetic(seed, k=5, n=8) for seed in range(25)]
    initials = [_initial_for(netlist, 16) for netlist in chips]
    for episode in range(1000):
        netlist = chips[episode % 25]
        mode = Mode.PLACE if episode % 2 == 0 else Mode.REGULATE
        initial = None
        if mode == Mode.REGULATE:
            initial = initials[episode % 25]
            if initial is None:
                continue
        env = RegulatorEnv(EnvConfig(mode=mode, n_grid=16), netlist)
        try:
            observation = env.reset(initial)
        except NoValidPosition:
            continue
        while not env.done:
            result = env.step(env.canvas.encode(random_act(observation, rng)))
            observation = result.observation
            assert overlap_free(env.state, blocking_only=True)
            rebuilt = env.state.rebuilt()
            assert np.array_equal(rebuilt.covered, env.state.covered)
            assert np.array_equal(rebuilt.blocked, env.state.blocked)
        if env.completed():
            assert overlap_free(env.state)
            finished[mode] += 1
    print(f"   completed episodes: {finished}")
    assert finished[Mode.PLACE] > 0 and finished[Mode.REGULATE] > 0


def _greedy_regulate_steps(alpha, **changes):
    """(before, after, previous_was_valid) per step over 50 seeded instances"""
    records = []
    for seed in range(50):
        netlist = small_synthetic(100 + seed, k=6, n=10)
        initial = _initial_for(netlist, 16)
        if initial is None:
            continue
        config = EnvConfig(mode=Mode.REGULATE, n_grid=16, alpha=alpha, **changes)
        env = RegulatorEnv(config, netlist)
        observation = env.reset(initial)
        while not env.done:
            mid = observation.macro_id
            previous_valid = bool(observation.valid()[env.state.previous[mid]])
            before = (env.hpwl, env.regularity)
            result = env.step(env.canvas.encode(greedy_act(observation, alpha)))
            records.append((before, (result.hpwl, result.regularity), previous_valid))
            observation = result.observation
    return records


def test_greedy_wire_regulation_never_increases_hpwl():
    records = _greedy_regulate_steps(1.0)
    assert records
    assert all(previous_valid for _, _, previous_valid in records)
    for before, after, _ in records:
        assert after[0] <= before[0]


def test_greedy_regularity_regulation_never_increases_regularity():
    records = _greedy_regulate_steps(0.0)
    assert records
    assert all(previous_valid for _, _, previous_valid in records)
    for before, after, _ in records:
        assert after[1] <= before[1]


def test_relaxed_blocking_widens_the_first_position_mask():
    netlist, initial = _placeable(21)
    strict = RegulatorEnv(EnvConfig(n_grid=16), netlist).reset(initial).valid()
    relaxed = RegulatorEnv(EnvConfig(n_grid=16, relax_unadjusted=True), netlist).reset(initial).valid()
    assert not (strict & ~relaxed).any()
    assert relaxed.sum() >= strict.sum()


def test_module_reset_needs_an_initial_placement_in_regulate_mode():
    netlist, initial = _placeable(4, k=4, n=6, terminals=0)
    with pytest.raises(MissingInitial):
        reset(EnvConfig(n_grid=16), netlist)
    env, observation = reset(EnvConfig(n_grid=16), netlist, initial)
    assert observation.macro_id == env.order[0]
    assert env.hpwl == hpwl_total(netlist, initial)

    env, observation = reset(EnvConfig(mode=Mode.PLACE, n_grid=16), netlist)
    assert observation is not None and not env.state.positions


def test_normalized_rewards_stay_in_unit_range():
    netlist, initial = _placeable(9)
    env = RegulatorEnv(EnvConfig(mode=Mode.REGULATE, n_grid=16, alpha=0.7), netlist)
    rng = np.random.default_rng(3)
    for _ in range(5):
        observation = env.reset(initial)
        while not env.done:
            assert np.abs(observation.wire_norm.values[observation.valid()]).max() <= 1.0
            result = env.step(env.canvas.encode(random_act(observation, rng)))
            assert 0.0 <= result.r_wire <= 1.0
            assert 0.0 <= result.r_reg <= 1.0
            assert 0.0 <= result.reward <= 1.0
            observation = result.observation


def test_transcript(tmp_path):
    netlist, _ = _placeable(6, k=4, n=6, terminals=0)
    env = RegulatorEnv(EnvConfig(mode=Mode.PLACE, n_grid=16, alpha=0.5), netlist)
    observation = env.reset()
    # same choices as the greedy placer, which completes this chip
    while not env.done:
        observation = env.step(env.canvas.encode(greedy_act(observation, 1.0))).observation
    assert env.completed() and len(env.transcript) == 4
    fields = env.transcript[-1].split()
    assert fields[0] == '3' and fields[1] == env.order[-1]
    assert float(fields[5]) == env.hpwl

    path = tmp_path / 'episode.txt'
    env.write_transcript(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step macro action r_wire r_reg hpwl regularity"
    assert lines[1:] == env.transcript


def test_config_is_frozen_and_coerced():
    config = EnvConfig(mode='place', order_rule='area_desc')
    assert config.mode == Mode.PLACE and config.order_rule == OrderRule.AREA_DESC
    assert replace(config, alpha=0.2).alpha == 0.2


if __name__ == "__main__":
    print("🚀 Environment tests")
    main_for(__name__)
