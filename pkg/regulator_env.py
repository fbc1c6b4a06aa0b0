#!/usr/bin/env python3
"""
Macro placement MDP: Place mode builds a layout from scratch, Regulate mode
adjusts every macro of an existing layout once

Each step acts on one macro in macro_order. The reward blends normalized
wirelength and regularity improvements: r = alpha * r_wire + (1 - alpha) * r_reg.
"""

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from bookshelf import Netlist
from errors import (
    InvalidAction,
    InvalidInitialPlacement,
    IoError,
    MissingInitial,
    NoValidPosition,
    PlacementError,
)
from geometry import Canvas, Cell, Mode, PlacementState, overlap_free
from masks import (
    Mask,
    MaskKind,
    NormTarget,
    canvas_image,
    normalize_mask,
    position_mask,
    regular_mask,
    wire_mask,
)
from metrics import NetExtremes, hpwl_total, regularity_total


class OrderRule(str, Enum):
    AREA_DESC = 'area_desc'
    NET_COUNT_DESC = 'net_count_desc'
    AREA_THEN_NETS = 'area_then_nets'


@dataclass(frozen=True)
class EnvConfig:
    mode: Mode = Mode.REGULATE
    alpha: float = 0.7
    n_grid: int = 224
    seed: int = 0
    order_rule: OrderRule = OrderRule.AREA_THEN_NETS
    normalize_reward: bool = True
    use_regular_mask: bool = True
    relax_unadjusted: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, 'mode', Mode(self.mode))
        object.__setattr__(self, 'order_rule', OrderRule(self.order_rule))


ABLATION_PRESETS = {
    'regulate': {},
    'vanilla_regulate': dict(mode=Mode.REGULATE, alpha=1.0, use_regular_mask=False),
    'regulate_no_norm': dict(mode=Mode.REGULATE, normalize_reward=False),
    'place': dict(mode=Mode.PLACE, alpha=1.0, use_regular_mask=False),
    'place_regular': dict(mode=Mode.PLACE),
}


def ablation_config(name: str, base: EnvConfig) -> EnvConfig:
    if name not in ABLATION_PRESETS:
        raise ValueError(f"unknown ablation {name!r}; choose from {sorted(ABLATION_PRESETS)}")
    return replace(base, **ABLATION_PRESETS[name])


@dataclass
class Observation:
    canvas_image: Mask
    position: Mask
    wire_norm: Mask
    regular_norm: Mask
    macro_index: int
    macro_dims: Tuple[int, int]
    macro_id: str
    wire_raw: Mask
    regular_raw: Mask

    @property
    def n_grid(self) -> int:
        return self.position.n_grid

    def stack(self) -> np.ndarray:
        """(4, N, N) float32 policy input; invalid cells read as the worst value 1"""
        return np.stack([
            self.canvas_image.values,
            self.position.values,
            self.wire_norm.filled(1.0),
            self.regular_norm.filled(1.0),
        ]).astype(np.float32)

    def valid(self) -> np.ndarray:
        return self.position.valid_cells()


@dataclass
class StepResult:
    observation: Optional[Observation]
    reward: float
    r_wire: float
    r_reg: float
    done: bool
    status: str = 'ok'
    hpwl: float = 0.0
    regularity: float = 0.0


def macro_order(netlist: Netlist, rule: OrderRule = OrderRule.AREA_THEN_NETS) -> List[str]:
    """Deterministic placement order; ties always end on the id"""
    rule = OrderRule(rule)

    def key(macro):
        nets = netlist.incident_net_count(macro.id)
        if rule == OrderRule.AREA_DESC:
            return (-macro.area, macro.id)
        if rule == OrderRule.NET_COUNT_DESC:
            return (-nets, -macro.area, macro.id)
        return (-macro.area, -nets, macro.id)

    return [m.id for m in sorted(netlist.macros, key=key)]


def reward_components(wire_raw: Mask, regular_raw: Mask, chosen: Cell) -> Tuple[float, float]:
    """Per-step min-max normalization: best valid cell earns 1, worst earns 0"""
    def component(mask: Mask) -> float:
        cells = mask.values[mask.valid_cells()]
        high, low = float(cells.max()), float(cells.min())
        if high <= low:
            return 0.0
        return (high - mask.at(chosen)) / (high - low)

    return component(wire_raw), component(regular_raw)


def evaluate(netlist: Netlist, state: PlacementState) -> Tuple[float, float]:
    """(macro HPWL, total regularity) of a complete placement"""
    return hpwl_total(netlist, state), regularity_total(netlist, state).total


class RegulatorEnv:
    """One sequential episode at a time over a fixed netlist"""

    def __init__(self, config: EnvConfig, netlist: Netlist):
        self.config = config
        self.netlist = netlist
        self.canvas = Canvas.for_netlist(netlist, config.n_grid)
        self.order = macro_order(netlist, config.order_rule)
        self.state: Optional[PlacementState] = None
        self.extremes: Optional[NetExtremes] = None
        self.transcript: List[str] = []
        self.index = 0
        self.done = True
        self.hpwl = 0.0
        self.regularity = 0.0
        self._masks = None

    @property
    def episode_length(self) -> int:
        return len(self.order)

    @property
    def current_macro(self) -> Optional[str]:
        return None if self.done else self.order[self.index]

    def _validated_initial(self, initial: PlacementState) -> PlacementState:
        missing = [m.id for m in self.netlist.macros if not initial.is_placed(m.id)]
        if missing:
            raise InvalidInitialPlacement(f"initial placement misses {len(missing)} macros, e.g. {missing[0]}")
        if not overlap_free(initial, self.netlist, blocking_only=False):
            raise InvalidInitialPlacement("initial placement has overlapping macros")
        try:
            state = PlacementState.from_positions(self.netlist, self.canvas, initial.positions, Mode.REGULATE)
        except PlacementError as e:
            raise InvalidInitialPlacement(f"initial placement does not fit the grid: {e}")
        macro_cover = state.covered - state.terminals.astype(np.int32)
        if (macro_cover > 1).any() or (state.terminals & (macro_cover > 0)).any():
            raise InvalidInitialPlacement("initial placement overlaps at grid resolution")
        return state

    def reset(self, initial: Optional[PlacementState] = None) -> Optional[Observation]:
        """Start an episode; Regulate mode without initial uses the greedy placer (alpha = 1)"""
        if self.config.mode == Mode.REGULATE:
            if initial is None:
                from agent import greedy_place
                initial = greedy_place(self.netlist, self.canvas.n_grid, self.config.order_rule)
            self.state = self._validated_initial(initial)
        else:
            if initial is not None and initial.positions:
                raise InvalidInitialPlacement("Place mode starts from an empty canvas")
            self.state = PlacementState(self.netlist, self.canvas, Mode.PLACE)

        self.extremes = NetExtremes.from_state(self.state)
        self.hpwl = self.extremes.total()
        self.regularity = regularity_total(self.netlist, self.state, partial=True).total
        self.transcript = []
        self.index = 0
        self.done = not self.order
        if self.done:
            return None
        observation = self._begin_macro()
        if observation is None:
            raise NoValidPosition(self.order[0])
        return observation

    def _begin_macro(self) -> Optional[Observation]:
        """Lift (Regulate) the next macro and compute its masks; None if it has no valid cell"""
        mid = self.order[self.index]
        macro = self.netlist.macro_by_id[mid]
        if self.state.mode == Mode.REGULATE:
            pos = self.state.positions[mid]
            self.state.lift(mid)
            self.extremes.remove_macro(mid, pos)

        mask_mode = self.state.mode
        if mask_mode == Mode.REGULATE and not self.config.relax_unadjusted:
            mask_mode = Mode.PLACE
        position = position_mask(self.state, macro, mask_mode)
        wire = wire_mask(self.state, macro, self.extremes, position)
        regular = regular_mask(self.state, macro, self.canvas, position)
        self._masks = (position, wire, regular)
        if not position.valid_cells().any():
            return None

        if self.config.use_regular_mask:
            regular_norm = normalize_mask(regular, NormTarget.SYMMETRIC_UNIT)
        else:
            regular_norm = Mask(np.zeros_like(regular.values), MaskKind.REGULAR_NORM, position.valid)
        return Observation(
            canvas_image=canvas_image(self.state, self.canvas),
            position=position,
            wire_norm=normalize_mask(wire, NormTarget.SYMMETRIC_UNIT),
            regular_norm=regular_norm,
            macro_index=self.index,
            macro_dims=self.state.span(mid),
            macro_id=mid,
            wire_raw=wire,
            regular_raw=regular,
        )

    def _abort(self, status: str, message: str) -> StepResult:
        print(f"⚠️ Episode aborted ({status}): {message}")
        self.done = True
        return StepResult(None, 0.0, 0.0, 0.0, True, status, self.hpwl, self.regularity)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise InvalidAction("step called on a finished episode")
        mid = self.order[self.index]
        position, wire, regular = self._masks
        n = self.canvas.n_grid
        if not 0 <= int(action) < n * n:
            return self._abort('invalid_action', f"action {action} is off the {n}x{n} grid")
        cell = self.canvas.decode(action)
        if not position.valid_cells()[cell]:
            return self._abort('invalid_action', f"cell {cell} is not valid for {mid}")

        if self.config.normalize_reward:
            r_wire, r_reg = reward_components(wire, regular, cell)
        else:
            r_wire, r_reg = -wire.at(cell), -regular.at(cell)
        alpha = self.config.alpha
        reward = alpha * r_wire + (1 - alpha) * r_reg

        self.state.drop(mid, cell)
        self.extremes.add_macro(mid, cell)
        # every macro is placed here, so both totals are exact recomputations
        self.hpwl = self.extremes.total()
        self.regularity = regularity_total(self.netlist, self.state, partial=True).total
        self.transcript.append(
            f"{self.index} {mid} {int(action)} {r_wire!r} {r_reg!r} {self.hpwl!r} {self.regularity!r}")

        self.index += 1
        status = 'ok'
        observation = None
        if self.index == len(self.order):
            self.done = True
        else:
            observation = self._begin_macro()
            if observation is None:
                print(f"⚠️ Macro {self.order[self.index]} has no valid position; ending episode")
                self.done = True
                status = 'stranded'
        return StepResult(observation, reward, r_wire, r_reg, self.done, status,
                          self.hpwl, self.regularity)

    def completed(self) -> bool:
        """Episode ended with every macro placed"""
        return self.done and self.state is not None and self.state.is_complete()

    def write_transcript(self, path):
        header = "step macro action r_wire r_reg hpwl regularity"
        try:
            Path(path).write_text('\n'.join([header] + self.transcript) + '\n')
        except OSError as e:
            raise IoError(f"cannot write transcript {path}: {e}")


def reset(config: EnvConfig, netlist: Netlist,
          initial: Optional[PlacementState] = None) -> Tuple[RegulatorEnv, Optional[Observation]]:
    """Build an environment and start its first episode from an explicit initial placement"""
    if config.mode == Mode.REGULATE and initial is None:
        raise MissingInitial("Regulate mode needs an initial placement")
    env = RegulatorEnv(config, netlist)
    return env, env.reset(initial)
