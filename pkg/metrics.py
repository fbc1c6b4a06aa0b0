#!/usr/bin/env python3
"""
Placement metrics: exact HPWL (full and incremental) and regularity

Pin absolute position = owner left-bottom corner + left-bottom-relative pin
offset. Regularity of a macro is measured at its left-bottom corner:
min{x, X_max - x} + min{y, Y_max - y}.
"""

from bisect import bisect_left, insort
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage

from bookshelf import Net, Netlist
from errors import IoError, UnplacedOwner
from geometry import Canvas, Cell, PlacementState


def pin_position(state: PlacementState, net: Net, pin_index: int) -> Optional[Tuple[float, float]]:
    """Absolute pin position, or None if the owner is a movable macro not placed"""
    pin = net.pins[pin_index]
    netlist = state.netlist
    dx, dy = netlist.pin_anchor(pin)
    terminal = netlist.terminal_by_id.get(pin.owner)
    if terminal is not None:
        return terminal.x + dx, terminal.y + dy
    if pin.owner not in state.positions:
        return None
    x, y = state.micron_position(pin.owner)
    return x + dx, y + dy


def hpwl_net(net: Net, state: PlacementState, partial: bool = False) -> float:
    """(max x - min x) + (max y - min y) over the net's pins"""
    xs, ys = [], []
    for i, pin in enumerate(net.pins):
        position = pin_position(state, net, i)
        if position is None:
            if partial:
                continue
            raise UnplacedOwner(pin.owner)
        xs.append(position[0])
        ys.append(position[1])
    if not xs:
        return 0.0
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def hpwl_total(netlist: Netlist, state: PlacementState, partial: bool = False) -> float:
    """Sum of net HPWL; partial=True ignores pins of unplaced macros"""
    total = 0.0
    for net in netlist.nets:
        total += hpwl_net(net, state, partial)
    return total


def hpwl_of_positions(netlist: Netlist, positions: Dict[str, Tuple[float, float]]) -> float:
    """Total HPWL of left-bottom micron positions, without snapping to a grid"""
    total = 0.0
    for net in netlist.nets:
        xs, ys = [], []
        for pin in net.pins:
            dx, dy = netlist.pin_anchor(pin)
            terminal = netlist.terminal_by_id.get(pin.owner)
            if terminal is not None:
                x, y = terminal.x, terminal.y
            elif pin.owner in positions:
                x, y = positions[pin.owner]
            else:
                raise UnplacedOwner(pin.owner)
            xs.append(x + dx)
            ys.append(y + dy)
        if xs:
            total += (max(xs) - min(xs)) + (max(ys) - min(ys))
    return total


class NetExtremes:
    """Per-net sorted pin coordinates of every currently placed owner

    Lifting a macro removes its pins so the remaining-pin bounding box of each
    net is available in O(1); the multisets support O(log p) removal.
    """

    def __init__(self, netlist: Netlist, canvas: Canvas):
        self.netlist = netlist
        self.canvas = canvas
        self.xs: List[List[float]] = []
        self.ys: List[List[float]] = []
        for fixed in netlist.fixed_pin_positions:
            self.xs.append(sorted(x for x, _ in fixed))
            self.ys.append(sorted(y for _, y in fixed))

    @classmethod
    def from_state(cls, state: PlacementState) -> 'NetExtremes':
        extremes = cls(state.netlist, state.canvas)
        for mid, pos in state.positions.items():
            extremes.add_macro(mid, pos)
        return extremes

    def _pins(self, macro_id: str, pos: Cell):
        x0, y0 = self.canvas.to_microns(pos)
        for index, dx, dy in self.netlist.macro_pins[macro_id]:
            yield index, x0 + dx, y0 + dy

    def add_macro(self, macro_id: str, pos: Cell):
        for index, x, y in self._pins(macro_id, pos):
            insort(self.xs[index], x)
            insort(self.ys[index], y)

    def remove_macro(self, macro_id: str, pos: Cell):
        for index, x, y in self._pins(macro_id, pos):
            del self.xs[index][bisect_left(self.xs[index], x)]
            del self.ys[index][bisect_left(self.ys[index], y)]

    def box(self, index: int) -> Optional[Tuple[float, float, float, float]]:
        """(min x, max x, min y, max y) of the net's present pins"""
        xs, ys = self.xs[index], self.ys[index]
        if not xs:
            return None
        return xs[0], xs[-1], ys[0], ys[-1]

    def net_hpwl(self, index: int) -> float:
        box = self.box(index)
        if box is None:
            return 0.0
        return (box[1] - box[0]) + (box[3] - box[2])

    def total(self) -> float:
        total = 0.0
        for index in range(len(self.xs)):
            total += self.net_hpwl(index)
        return total

    def macro_net_spans(self, macro_id: str) -> Dict[int, Tuple[float, float, float, float]]:
        """net index -> (min dx, max dx, min dy, max dy) of the macro's pins on it"""
        spans = {}
        for index, dx, dy in self.netlist.macro_pins[macro_id]:
            if index in spans:
                lo_x, hi_x, lo_y, hi_y = spans[index]
                spans[index] = (min(lo_x, dx), max(hi_x, dx), min(lo_y, dy), max(hi_y, dy))
            else:
                spans[index] = (dx, dx, dy, dy)
        return spans


def _axis_delta(lo, hi, moved_lo, moved_hi):
    """Growth of one axis extent when moved pins [moved_lo, moved_hi] join [lo, hi]"""
    if lo is None:
        return moved_hi - moved_lo
    return np.maximum(hi, moved_hi) - np.minimum(lo, moved_lo) - (hi - lo)


def hpwl_delta(extremes: NetExtremes, macro_id: str, new_pos: Cell) -> float:
    """HPWL with the macro at new_pos minus HPWL with its pins absent

    Only the macro's nets change. Expects the macro's pins to be removed.
    """
    x0, y0 = extremes.canvas.to_microns(new_pos)
    delta = 0.0
    for index, (lo_dx, hi_dx, lo_dy, hi_dy) in extremes.macro_net_spans(macro_id).items():
        box = extremes.box(index)
        lx, hx, ly, hy = box if box is not None else (None, None, None, None)
        delta += float(_axis_delta(lx, hx, x0 + lo_dx, x0 + hi_dx))
        delta += float(_axis_delta(ly, hy, y0 + lo_dy, y0 + hi_dy))
    return delta


def hpwl_delta_grid(extremes: NetExtremes, macro_id: str) -> np.ndarray:
    """hpwl_delta for every anchor cell at once, indexed [gx, gy]

    The per-net change separates into an x term and a y term, so the grid is
    the outer sum of two length-N vectors accumulated over the macro's nets.
    """
    canvas = extremes.canvas
    xs = np.arange(canvas.n_grid) * canvas.bin_w
    ys = np.arange(canvas.n_grid) * canvas.bin_h
    wx = np.zeros(canvas.n_grid)
    wy = np.zeros(canvas.n_grid)
    for index, (lo_dx, hi_dx, lo_dy, hi_dy) in extremes.macro_net_spans(macro_id).items():
        box = extremes.box(index)
        lx, hx, ly, hy = box if box is not None else (None, None, None, None)
        wx += _axis_delta(lx, hx, xs + lo_dx, xs + hi_dx)
        wy += _axis_delta(ly, hy, ys + lo_dy, ys + hi_dy)
    return wx[:, None] + wy[None, :]


@dataclass
class RegularityValue:
    total: float
    per_macro: Dict[str, float]

    @property
    def mean(self) -> float:
        return self.total / len(self.per_macro) if self.per_macro else 0.0


def regularity_at(x: float, y: float, width: float, height: float) -> float:
    return min(x, width - x) + min(y, height - y)


def regularity_of_grid(gx: int, gy: int, canvas: Canvas) -> float:
    return regularity_at(gx * canvas.bin_w, gy * canvas.bin_h, canvas.width, canvas.height)


def regularity_field(canvas: Canvas) -> np.ndarray:
    """regularity_of_grid for every cell, indexed [gx, gy]"""
    xs = np.arange(canvas.n_grid) * canvas.bin_w
    ys = np.arange(canvas.n_grid) * canvas.bin_h
    rx = np.minimum(xs, canvas.width - xs)
    ry = np.minimum(ys, canvas.height - ys)
    return rx[:, None] + ry[None, :]


def regularity_total(netlist: Netlist, state: PlacementState,
                     canvas: Optional[Canvas] = None, partial: bool = False) -> RegularityValue:
    canvas = canvas or state.canvas
    per_macro = {}
    total = 0.0
    for macro in netlist.macros:
        if macro.id not in state.positions:
            if partial:
                continue
            raise UnplacedOwner(macro.id)
        value = regularity_of_grid(*state.positions[macro.id], canvas)
        per_macro[macro.id] = value
        total += value
    return RegularityValue(total, per_macro)


def regularity_of_positions(netlist: Netlist, positions: Dict[str, Tuple[float, float]]) -> RegularityValue:
    """Regularity of left-bottom micron positions, off the grid"""
    per_macro = {}
    total = 0.0
    for macro in netlist.macros:
        if macro.id not in positions:
            raise UnplacedOwner(macro.id)
        x, y = positions[macro.id]
        value = regularity_at(float(x), float(y), netlist.canvas_width, netlist.canvas_height)
        per_macro[macro.id] = value
        total += value
    return RegularityValue(total, per_macro)


def free_regions(state: PlacementState) -> int:
    """Number of 4-connected components of cells not covered by any macro or terminal"""
    _, count = ndimage.label(state.covered == 0)
    return int(count)


METRIC_COLUMNS = ['instance', 'step', 'hpwl', 'regularity_total', 'regularity_mean', 'free_regions']


def metric_row(instance: str, step: int, state: PlacementState,
               positions: Optional[Dict[str, Tuple[float, float]]] = None) -> Dict[str, object]:
    """One metrics row; with micron positions, HPWL and regularity ignore the grid"""
    if positions is None:
        hpwl = hpwl_total(state.netlist, state)
        regularity = regularity_total(state.netlist, state)
    else:
        hpwl = hpwl_of_positions(state.netlist, positions)
        regularity = regularity_of_positions(state.netlist, positions)
    return {
        'instance': instance,
        'step': step,
        'hpwl': hpwl,
        'regularity_total': regularity.total,
        'regularity_mean': regularity.mean,
        'free_regions': free_regions(state),
    }


def write_metrics_csv(rows: Sequence[Dict[str, object]], path):
    try:
        pd.DataFrame(list(rows), columns=METRIC_COLUMNS).to_csv(path, index=False)
    except OSError as e:
        raise IoError(f"cannot write metrics {path}: {e}")
