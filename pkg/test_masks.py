#!/usr/bin/env python3
"""
Tests for the position, wire and regular masks
"""

import time

import numpy as np
import pytest

from errors import ShapeMismatch
from geometry import Canvas, Mode, PlacementState, footprint_span
from masks import (
    SENTINEL,
    Mask,
    MaskKind,
    NormTarget,
    blended_argmin,
    canvas_image,
    normalize_mask,
    position_mask,
    regular_mask,
    row_major_argmin,
    wire_mask,
)
from metrics import NetExtremes, hpwl_total, regularity_field
from regulator_fixtures import main_for, make_netlist, small_synthetic


def _on_grid_positions(netlist, canvas):
    """Staggered in-grid positions; overlaps do not matter to the masks under test"""
    positions = {}
    for i, macro in enumerate(netlist.macros):
        fw, fh = footprint_span(macro, canvas)
        positions[macro.id] = (min(i * 2, canvas.n_grid - fw), min(i, canvas.n_grid - fh))
    return positions


def test_position_mask_place_and_regulate():
    netlist = make_netlist([('A', 20, 20), ('B', 10, 10)], terminals=[('p', 150, 150, 5, 5)])
    canvas = Canvas(160.0, 160.0, 16)
    state = PlacementState.from_positions(netlist, canvas, {'A': (0, 0)}, Mode.PLACE)
    mask = position_mask(state, netlist.macro_by_id['B'])
    assert mask.kind == MaskKind.POSITION
    assert mask.values[0, 0] == 0 and mask.values[1, 1] == 0 and mask.values[2, 0] == 1
    assert mask.values[15, 15] == 0  # terminal
    assert mask.values.sum() == 256 - 4 - 1

    # 2 x 2 footprint cannot start on the last row or column
    big = position_mask(PlacementState(netlist, canvas), netlist.macro_by_id['A'])
    assert big.values[15, 0] == 0 and big.values[14, 0] == 1

    regulate = PlacementState.from_positions(netlist, canvas, {'A': (0, 0), 'B': (5, 5)}, Mode.REGULATE)
    regulate.lift('B')
    relaxed = position_mask(regulate, netlist.macro_by_id['B'])
    assert relaxed.values[0, 0] == 1  # A is not adjusted yet
    strict = position_mask(regulate, netlist.macro_by_id['B'], Mode.PLACE)
    assert strict.values[0, 0] == 0


def test_wire_mask_matches_full_recompute():
    print("1. Exhaustive wire-mask oracle on 100 instances...")
    started = time.time()
    checked = 0
    for seed in range(100):
        netlist = small_synthetic(seed, k=5 + seed % 4, n=8 + seed % 5, terminals=seed % 3)
        canvas = Canvas.for_netlist(netlist, 16)
        positions = _on_grid_positions(netlist, canvas)
        state = PlacementState.from_positions(netlist, canvas, positions, Mode.PLACE)
        macro = netlist.macros[seed % len(netlist.macros)]
        state.lift(macro.id)
        extremes = NetExtremes.from_state(state)
        position = position_mask(state, macro)
        mask = wire_mask(state, macro, extremes, position)
        absent = hpwl_total(netlist, state, partial=True)

        for gx, gy in np.argwhere(position.valid_cells()):
            trial = PlacementState.from_positions(
                netlist, canvas, {**state.positions, macro.id: (int(gx), int(gy))})
            assert mask.values[gx, gy] == hpwl_total(netlist, trial) - absent, (seed, gx, gy)
        assert (mask.values[~position.valid_cells()] == SENTINEL).all()
        checked += 1
    print(f"   {checked} instances checked in {time.time() - started:.1f}s")
    assert checked == 100


def test_regulate_masks_are_zero_at_previous_position():
    netlist = small_synthetic(5, terminals=0)
    canvas = Canvas.for_netlist(netlist, 16)
    positions = _on_grid_positions(netlist, canvas)
    state = PlacementState.from_positions(netlist, canvas, positions, Mode.REGULATE)
    extremes = NetExtremes.from_state(state)
    macro = netlist.macros[-1]
    previous = positions[macro.id]
    state.lift(macro.id)
    extremes.remove_macro(macro.id, previous)

    position = position_mask(state, macro)
    wire = wire_mask(state, macro, extremes, position)
    regular = regular_mask(state, macro, canvas, position)
    assert wire.at(previous) == 0.0
    assert regular.at(previous) == 0.0
    field = regularity_field(canvas)
    valid = position.valid_cells()
    assert np.array_equal(regular.values[valid], (field - field[previous])[valid])


def test_normalize_ranges():
    values = np.array([[4.0, -2.0], [0.0, SENTINEL]])
    valid = np.array([[True, True], [True, False]])
    mask = Mask(values, MaskKind.WIRE_RAW, valid)

    symmetric = normalize_mask(mask, NormTarget.SYMMETRIC_UNIT)
    assert symmetric.kind == MaskKind.WIRE_NORM
    assert symmetric.values[0, 0] == 1.0 and symmetric.values[0, 1] == -0.5
    assert symmetric.values[1, 1] == SENTINEL

    unit = normalize_mask(mask, NormTarget.UNIT)
    assert unit.values[0, 0] == 1.0 and unit.values[0, 1] == 0.0
    assert unit.values[1, 0] == 2.0 / 6.0

    flat = normalize_mask(Mask(np.zeros((2, 2)), MaskKind.REGULAR_RAW, np.ones((2, 2), bool)))
    assert (flat.values == 0).all()


def test_mask_text_format():
    values = np.array([[0.5, SENTINEL], [-1.0, 2.0]])
    mask = Mask(values, MaskKind.REGULAR_RAW, values != SENTINEL)
    text = mask.to_text()
    # row gy = 0 lists gx = 0, 1
    assert text.splitlines() == ["2 regular_raw", "0.5 -1.0", "inf 2.0"]
    back = Mask.from_text(text)
    assert np.array_equal(back.values, values)
    assert np.array_equal(back.valid, mask.valid)


def test_row_major_tiebreak():
    scores = np.full((4, 4), 5.0)
    scores[3, 1] = scores[1, 2] = 1.0
    assert row_major_argmin(scores) == (3, 1)
    assert row_major_argmin(np.zeros((3, 3))) == (0, 0)


def test_blended_argmin_alpha_extremes():
    netlist = make_netlist([('A', 10, 10)],
                           nets=[('n', [('A', 0, 0), ('p', 0, 0)])],
                           terminals=[('p', 80, 80, 1, 1)])
    canvas = Canvas(160.0, 160.0, 16)
    state = PlacementState(netlist, canvas)
    macro = netlist.macros[0]
    extremes = NetExtremes.from_state(state)
    position = position_mask(state, macro)
    wire = wire_mask(state, macro, extremes, position)
    regular = regular_mask(state, macro, canvas, position)

    assert blended_argmin(wire, regular, 0.0) == (0, 0)
    assert blended_argmin(wire, regular, 1.0) == (8, 7)

    nowhere = Mask(wire.values, MaskKind.WIRE_RAW, np.zeros((16, 16), bool))
    assert blended_argmin(nowhere, nowhere, 0.5) is None


def test_canvas_image_checks_its_grid():
    netlist = make_netlist([('A', 20, 20)], terminals=[('p', 150, 150, 5, 5)])
    canvas = Canvas(160.0, 160.0, 16)
    state = PlacementState.from_positions(netlist, canvas, {'A': (0, 0)}, Mode.PLACE)
    image = canvas_image(state, Canvas(160.0, 160.0, 16))
    assert image.kind == MaskKind.CANVAS_IMAGE
    assert image.values.sum() == 4 + 1
    assert image.values[0:2, 0:2].all() and image.values[15, 15] == 1.0
    assert np.array_equal(canvas_image(state).values, image.values)
    with pytest.raises(ShapeMismatch):
        canvas_image(state, Canvas(160.0, 160.0, 8))
    with pytest.raises(ShapeMismatch):
        canvas_image(state, Canvas(320.0, 320.0, 16))


if __name__ == "__main__":
    print("🚀 Mask tests")
    main_for(__name__)
