#!/usr/bin/env python3
"""
Canvas discretization and the occupancy model of a placement

Macros sit on an N x N grid by their left-bottom corner. A macro claims every
bin its real rectangle touches (ceiling per axis), so grid-level disjointness
implies real-geometry disjointness. Terminals are rasterized once and always
block.
"""

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from bookshelf import Macro, Netlist
from errors import CellOccupied, MacroAlreadyPlaced, OutOfCanvas, UnknownMacro

Cell = Tuple[int, int]

# absorbs division noise such as 30 / 10 -> 3.0000000000000004
CEIL_TOLERANCE = 1e-9


class Mode(str, Enum):
    PLACE = 'place'
    REGULATE = 'regulate'


@dataclass(frozen=True)
class Canvas:
    width: float
    height: float
    n_grid: int

    def __post_init__(self):
        if self.n_grid < 2:
            raise ValueError("n_grid must be at least 2")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas dimensions must be positive")

    @property
    def bin_w(self) -> float:
        return self.width / self.n_grid

    @property
    def bin_h(self) -> float:
        return self.height / self.n_grid

    @classmethod
    def for_netlist(cls, netlist: Netlist, n_grid: int) -> 'Canvas':
        return cls(netlist.canvas_width, netlist.canvas_height, n_grid)

    def decode(self, action: int) -> Cell:
        return divmod(int(action), self.n_grid)

    def encode(self, cell: Cell) -> int:
        return int(cell[0]) * self.n_grid + int(cell[1])

    def to_microns(self, cell: Cell) -> Tuple[float, float]:
        return cell[0] * self.bin_w, cell[1] * self.bin_h

    def snap(self, x: float, y: float) -> Cell:
        """Grid cell containing a micron left-bottom corner"""
        return (int(math.floor(x / self.bin_w + CEIL_TOLERANCE)),
                int(math.floor(y / self.bin_h + CEIL_TOLERANCE)))


def _ceil_bins(length: float, bin_size: float) -> int:
    return max(1, int(math.ceil(length / bin_size - CEIL_TOLERANCE)))


def footprint_span(macro: Macro, canvas: Canvas) -> Tuple[int, int]:
    """Footprint size in bins (fw, fh)"""
    return _ceil_bins(macro.width, canvas.bin_w), _ceil_bins(macro.height, canvas.bin_h)


def footprint(macro: Macro, pos: Cell, canvas: Canvas) -> Set[Cell]:
    """Cells [gx, gx + fw) x [gy, gy + fh) claimed by macro at pos"""
    gx, gy = pos
    fw, fh = footprint_span(macro, canvas)
    if gx < 0 or gy < 0 or gx + fw > canvas.n_grid or gy + fh > canvas.n_grid:
        raise OutOfCanvas(f"macro {macro.id} at {pos} exceeds the {canvas.n_grid}x{canvas.n_grid} grid")
    return {(x, y) for x in range(gx, gx + fw) for y in range(gy, gy + fh)}


def terminal_raster(netlist: Netlist, canvas: Canvas) -> np.ndarray:
    """Bool grid of every bin a terminal rectangle touches with positive area"""
    grid = np.zeros((canvas.n_grid, canvas.n_grid), dtype=bool)
    for t in netlist.terminals:
        if t.width <= 0 or t.height <= 0:
            continue
        x0 = int(math.floor(t.x / canvas.bin_w + CEIL_TOLERANCE))
        y0 = int(math.floor(t.y / canvas.bin_h + CEIL_TOLERANCE))
        x1 = int(math.ceil((t.x + t.width) / canvas.bin_w - CEIL_TOLERANCE))
        y1 = int(math.ceil((t.y + t.height) / canvas.bin_h - CEIL_TOLERANCE))
        grid[max(0, x0):min(canvas.n_grid, x1), max(0, y0):min(canvas.n_grid, y1)] = True
    return grid


class PlacementState:
    """Grid positions, adjusted flags and occupancy of one placement

    covered counts every placed macro and terminal per cell; blocked counts
    only what blocks under the current mode (terminals, plus all placed macros
    in Place mode or adjusted macros in Regulate mode).
    """

    def __init__(self, netlist: Netlist, canvas: Canvas, mode: Mode = Mode.PLACE):
        self.netlist = netlist
        self.canvas = canvas
        self.mode = Mode(mode)
        self.positions: Dict[str, Cell] = {}
        self.previous: Dict[str, Cell] = {}
        self.adjusted: Dict[str, bool] = {m.id: False for m in netlist.macros}
        self.terminals = terminal_raster(netlist, canvas)
        self.covered = self.terminals.astype(np.int32)
        self.blocked = self.terminals.astype(np.int32)

    @classmethod
    def from_positions(cls, netlist: Netlist, canvas: Canvas, positions: Dict[str, Cell],
                       mode: Mode = Mode.PLACE,
                       adjusted: Optional[Dict[str, bool]] = None) -> 'PlacementState':
        """Build a state without the blocking checks of drop"""
        state = cls(netlist, canvas, mode)
        for mid, flag in (adjusted or {}).items():
            state._macro(mid)
            state.adjusted[mid] = bool(flag)
        for mid, pos in positions.items():
            state._claim(mid, (int(pos[0]), int(pos[1])))
        return state

    @classmethod
    def from_microns(cls, netlist: Netlist, canvas: Canvas,
                     positions: Dict[str, Tuple[float, float]],
                     mode: Mode = Mode.PLACE) -> 'PlacementState':
        cells = {mid: canvas.snap(x, y) for mid, (x, y) in positions.items()}
        return cls.from_positions(netlist, canvas, cells, mode)

    def copy(self) -> 'PlacementState':
        other = PlacementState.__new__(PlacementState)
        other.netlist = self.netlist
        other.canvas = self.canvas
        other.mode = self.mode
        other.positions = dict(self.positions)
        other.previous = dict(self.previous)
        other.adjusted = dict(self.adjusted)
        other.terminals = self.terminals
        other.covered = self.covered.copy()
        other.blocked = self.blocked.copy()
        return other

    def _macro(self, macro_id: str) -> Macro:
        macro = self.netlist.macro_by_id.get(macro_id)
        if macro is None:
            raise UnknownMacro(macro_id)
        return macro

    def is_placed(self, macro_id: str) -> bool:
        return macro_id in self.positions

    def is_blocking(self, macro_id: str) -> bool:
        if macro_id not in self.positions:
            return False
        return self.mode == Mode.PLACE or self.adjusted[macro_id]

    def is_complete(self) -> bool:
        return len(self.positions) == len(self.netlist.macros)

    def micron_position(self, macro_id: str) -> Tuple[float, float]:
        return self.canvas.to_microns(self.positions[macro_id])

    def span(self, macro_id: str) -> Tuple[int, int]:
        return footprint_span(self._macro(macro_id), self.canvas)

    def _window(self, macro_id: str, pos: Cell):
        macro = self._macro(macro_id)
        footprint(macro, pos, self.canvas)  # raises OutOfCanvas
        fw, fh = footprint_span(macro, self.canvas)
        return slice(pos[0], pos[0] + fw), slice(pos[1], pos[1] + fh)

    def _claim(self, macro_id: str, pos: Cell):
        if macro_id in self.positions:
            raise MacroAlreadyPlaced(f"macro {macro_id} is already placed")
        window = self._window(macro_id, pos)
        self.positions[macro_id] = pos
        self.covered[window] += 1
        if self.is_blocking(macro_id):
            self.blocked[window] += 1

    def lift(self, macro_id: str) -> 'PlacementState':
        """Release the macro's cells; its position becomes its previous position"""
        self._macro(macro_id)
        if macro_id not in self.positions:
            raise UnknownMacro(macro_id)
        pos = self.positions[macro_id]
        window = self._window(macro_id, pos)
        if self.is_blocking(macro_id):
            self.blocked[window] -= 1
        self.covered[window] -= 1
        del self.positions[macro_id]
        self.previous[macro_id] = pos
        return self

    def can_drop(self, macro_id: str, pos: Cell) -> bool:
        try:
            window = self._window(macro_id, pos)
        except OutOfCanvas:
            return False
        return not self.blocked[window].any()

    def drop(self, macro_id: str, pos: Cell) -> 'PlacementState':
        """Place a lifted macro at pos and mark it adjusted"""
        pos = (int(pos[0]), int(pos[1]))
        window = self._window(macro_id, pos)
        if macro_id in self.positions:
            raise MacroAlreadyPlaced(f"macro {macro_id} is already placed")
        if self.blocked[window].any():
            raise CellOccupied(f"macro {macro_id} at {pos} overlaps a blocking object")
        self.adjusted[macro_id] = True
        self._claim(macro_id, pos)
        return self

    def blocking_grid(self) -> np.ndarray:
        return self.blocked > 0

    def rebuilt(self) -> 'PlacementState':
        """Occupancy recomputed from scratch (test oracle)"""
        state = PlacementState.from_positions(self.netlist, self.canvas, self.positions,
                                              self.mode, self.adjusted)
        state.previous = dict(self.previous)
        return state


# Module-level forms of the state operations

def lift(state: PlacementState, macro_id: str) -> PlacementState:
    return state.lift(macro_id)


def drop(state: PlacementState, macro_id: str, pos: Cell) -> PlacementState:
    return state.drop(macro_id, pos)


def _intersects(a, b) -> bool:
    return min(a[3], b[3]) > max(a[1], b[1]) and min(a[4], b[4]) > max(a[2], b[2])


def overlapping_pairs(netlist: Netlist, positions: Dict[str, Tuple[float, float]]) -> List[Tuple[str, str]]:
    """Every macro/macro and macro/terminal pair whose micron rectangles share positive area"""
    rects = []
    for macro in netlist.macros:
        if macro.id in positions:
            x, y = positions[macro.id]
            rects.append((macro.id, x, y, x + macro.width, y + macro.height))
    pairs = [(a[0], b[0]) for a, b in combinations(rects, 2) if _intersects(a, b)]
    terminals = [(t.id, t.x, t.y, t.x + t.width, t.y + t.height) for t in netlist.terminals]
    for rect in rects:
        for terminal in terminals:
            if _intersects(rect, terminal):
                pairs.append((rect[0], terminal[0]))
    return pairs


def overlap_free(state: PlacementState, netlist: Optional[Netlist] = None,
                 canvas: Optional[Canvas] = None, blocking_only: bool = False) -> bool:
    """True iff no two macros and no macro/terminal pair overlap with positive area"""
    netlist = netlist or state.netlist
    ids = [m.id for m in netlist.macros if state.is_placed(m.id)]
    if blocking_only:
        ids = [mid for mid in ids if state.is_blocking(mid)]
    rects = []
    for mid in ids:
        macro = netlist.macro_by_id[mid]
        x, y = state.micron_position(mid)
        rects.append((mid, x, y, x + macro.width, y + macro.height))
    for a, b in combinations(rects, 2):
        if _intersects(a, b):
            return False
    terminals = [(t.id, t.x, t.y, t.x + t.width, t.y + t.height) for t in netlist.terminals]
    for rect in rects:
        for terminal in terminals:
            if _intersects(rect, terminal):
                return False
    return True
