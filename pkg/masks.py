#!/usr/bin/env python3
"""
Policy-input masks: PositionMask, WireMask, RegularMask and the canvas image

All masks are N x N arrays indexed [gx, gy]. Raw wire/regular masks carry
SENTINEL on position-invalid cells; normalization and argmin skip those cells.
Lower raw values are better for both masks.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from bookshelf import Macro
from errors import ShapeMismatch
from geometry import Canvas, Cell, Mode, PlacementState, footprint_span
from metrics import NetExtremes, hpwl_delta_grid, regularity_field

SENTINEL = float(np.finfo(np.float64).max)


class MaskKind(str, Enum):
    POSITION = 'position'
    WIRE_RAW = 'wire_raw'
    WIRE_NORM = 'wire_norm'
    REGULAR_RAW = 'regular_raw'
    REGULAR_NORM = 'regular_norm'
    CANVAS_IMAGE = 'canvas_image'


class NormTarget(str, Enum):
    SYMMETRIC_UNIT = 'symmetric_unit'
    UNIT = 'unit'


_NORMALIZED = {MaskKind.WIRE_RAW: MaskKind.WIRE_NORM, MaskKind.REGULAR_RAW: MaskKind.REGULAR_NORM}


@dataclass
class Mask:
    values: np.ndarray
    kind: MaskKind
    valid: Optional[np.ndarray] = None

    @property
    def n_grid(self) -> int:
        return self.values.shape[0]

    def valid_cells(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.valid

    def filled(self, fill: float) -> np.ndarray:
        """Values with invalid cells replaced by fill"""
        return np.where(self.valid_cells(), self.values, fill)

    def at(self, cell: Cell) -> float:
        return float(self.values[cell[0], cell[1]])

    def to_text(self) -> str:
        """Header 'N kind', then N rows; row gy lists gx = 0..N-1"""
        lines = [f"{self.n_grid} {self.kind.value}"]
        for gy in range(self.n_grid):
            row = []
            for gx in range(self.n_grid):
                value = float(self.values[gx, gy])
                row.append('inf' if value == SENTINEL else repr(value))
            lines.append(' '.join(row))
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'Mask':
        lines = text.strip().splitlines()
        n, kind = lines[0].split()
        n = int(n)
        values = np.zeros((n, n))
        for gy, line in enumerate(lines[1:n + 1]):
            for gx, token in enumerate(line.split()):
                values[gx, gy] = SENTINEL if token == 'inf' else float(token)
        valid = None
        if MaskKind(kind) in (MaskKind.WIRE_RAW, MaskKind.REGULAR_RAW,
                              MaskKind.WIRE_NORM, MaskKind.REGULAR_NORM):
            valid = values != SENTINEL
        return cls(values, MaskKind(kind), valid)


def _blocking_grid(state: PlacementState, mode: Mode) -> np.ndarray:
    if mode == state.mode:
        return state.blocked > 0
    grid = state.terminals.copy()
    fill = np.zeros_like(state.blocked)
    for mid, (gx, gy) in state.positions.items():
        if mode == Mode.PLACE or state.adjusted[mid]:
            fw, fh = state.span(mid)
            fill[gx:gx + fw, gy:gy + fh] += 1
    return grid | (fill > 0)


def position_mask(state: PlacementState, macro: Macro, mode: Optional[Mode] = None) -> Mask:
    """1 where the macro's footprint fits the grid and touches no blocking cell

    Place mode blocks on terminals and every placed macro; Regulate mode only
    on terminals and adjusted macros. An all-zero mask is returned, not raised.
    """
    mode = Mode(mode) if mode is not None else state.mode
    blocked = _blocking_grid(state, mode).astype(np.int64)
    n = state.canvas.n_grid
    fw, fh = footprint_span(macro, state.canvas)
    valid = np.zeros((n, n), dtype=bool)
    if fw <= n and fh <= n:
        table = np.zeros((n + 1, n + 1), dtype=np.int64)
        table[1:, 1:] = blocked.cumsum(axis=0).cumsum(axis=1)
        sums = (table[fw:, fh:] - table[:n + 1 - fw, fh:]
                - table[fw:, :n + 1 - fh] + table[:n + 1 - fw, :n + 1 - fh])
        valid[:n + 1 - fw, :n + 1 - fh] = sums == 0
    return Mask(valid.astype(np.float64), MaskKind.POSITION, valid)


def _previous(state: PlacementState, macro: Macro) -> Optional[Cell]:
    if state.mode != Mode.REGULATE:
        return None
    return state.previous.get(macro.id)


def _with_sentinel(raw: np.ndarray, valid: np.ndarray, kind: MaskKind) -> Mask:
    return Mask(np.where(valid, raw, SENTINEL), kind, valid)


def wire_mask(state: PlacementState, macro: Macro, extremes: NetExtremes,
              position: Optional[Mask] = None) -> Mask:
    """HPWL change of placing the macro at each valid cell

    Place mode measures against the macro-absent state; Regulate mode against
    the macro at its previous position, so values can be negative and the
    previous cell is exactly 0.
    """
    position = position or position_mask(state, macro)
    raw = hpwl_delta_grid(extremes, macro.id)
    previous = _previous(state, macro)
    if previous is not None:
        raw = raw - raw[previous[0], previous[1]]
    return _with_sentinel(raw, position.valid_cells(), MaskKind.WIRE_RAW)


def regular_mask(state: PlacementState, macro: Macro, canvas: Optional[Canvas] = None,
                 position: Optional[Mask] = None) -> Mask:
    """Regularity change of placing the macro at each valid cell"""
    canvas = canvas or state.canvas
    position = position or position_mask(state, macro)
    raw = regularity_field(canvas)
    previous = _previous(state, macro)
    if previous is not None:
        raw = raw - raw[previous[0], previous[1]]
    return _with_sentinel(raw, position.valid_cells(), MaskKind.REGULAR_RAW)


def normalize_mask(mask: Mask, target: NormTarget = NormTarget.SYMMETRIC_UNIT) -> Mask:
    """Scale valid cells to [-1, 1] (divide by max |v|) or [0, 1] (min-max)"""
    valid = mask.valid_cells()
    values = mask.values.copy()
    kind = _NORMALIZED.get(mask.kind, mask.kind)
    if not valid.any():
        return Mask(values, kind, valid)
    cells = mask.values[valid]
    if NormTarget(target) == NormTarget.SYMMETRIC_UNIT:
        scale = np.abs(cells).max()
        values[valid] = cells / scale if scale > 0 else 0.0
    else:
        low, high = cells.min(), cells.max()
        values[valid] = (cells - low) / (high - low) if high > low else 0.0
    return Mask(values, kind, valid)


def canvas_image(state: PlacementState, canvas: Optional[Canvas] = None) -> Mask:
    """1 on cells covered by any placed macro or terminal

    canvas, when given, must be the grid the state was built on.
    """
    if canvas is not None and canvas != state.canvas:
        raise ShapeMismatch(f"canvas image requested on {canvas.n_grid}x{canvas.n_grid} "
                            f"{canvas.width}x{canvas.height}, state is on {state.canvas.n_grid}x"
                            f"{state.canvas.n_grid} {state.canvas.width}x{state.canvas.height}")
    return Mask((state.covered > 0).astype(np.float64), MaskKind.CANVAS_IMAGE)


def unit_scores(mask: Mask) -> np.ndarray:
    """[0, 1] min-max map of valid cells; invalid cells are +inf"""
    unit = normalize_mask(mask, NormTarget.UNIT)
    return np.where(mask.valid_cells(), unit.values, np.inf)


def row_major_argmin(scores: np.ndarray) -> Cell:
    """Cell of the smallest score; ties go to smallest gy, then smallest gx"""
    gy, gx = np.unravel_index(int(np.argmin(scores.T)), scores.T.shape)
    return int(gx), int(gy)


def blended_argmin(wire_raw: Mask, regular_raw: Mask, alpha: float) -> Optional[Cell]:
    """argmin of alpha * unit(wire) + (1 - alpha) * unit(regular) over valid cells"""
    valid = wire_raw.valid_cells()
    if not valid.any():
        return None
    with np.errstate(invalid='ignore'):
        scores = alpha * unit_scores(wire_raw) + (1 - alpha) * unit_scores(regular_raw)
    scores = np.where(valid, scores, np.inf)
    return row_major_argmin(scores)
