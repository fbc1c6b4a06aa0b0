#!/usr/bin/env python3
"""
Bookshelf netlist I/O for macro placement

Reads the ISPD-2005 style subset of the Bookshelf suite (.aux/.nodes/.nets/.pl,
with .scl consumed only for canvas extents and row height), writes .pl files
and whole bundles, and generates deterministic synthetic netlists.

Pin offsets are stored center-relative, the Bookshelf convention;
Netlist.pin_anchor converts them to left-bottom-relative offsets.
Standard cells are collapsed away at parse time: they leave V, their pins leave
their nets, and nets with fewer than two remaining pins are dropped.
"""

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from errors import (
    InfeasibleAreaBudget,
    IoError,
    MalformedLine,
    MissingFile,
    NetlistInvariantError,
    UnplacedOwner,
    UnresolvedPinOwner,
)

OFFSET_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Macro:
    id: str
    width: float
    height: float
    movable: bool = True

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Terminal:
    """Fixed rectangle with an absolute left-bottom position"""

    id: str
    x: float
    y: float
    width: float
    height: float


@dataclass(frozen=True)
class Pin:
    owner: str
    offset_x: float = 0.0
    offset_y: float = 0.0


@dataclass(frozen=True)
class Net:
    id: str
    pins: Tuple[Pin, ...]


@dataclass(frozen=True)
class Netlist:
    macros: Tuple[Macro, ...]
    terminals: Tuple[Terminal, ...]
    nets: Tuple[Net, ...]
    canvas_width: float
    canvas_height: float
    # initial left-bottom micron positions of movable macros (from .pl)
    initial: Dict[str, Tuple[float, float]] = field(default_factory=dict, hash=False)

    @cached_property
    def macro_by_id(self) -> Dict[str, Macro]:
        return {m.id: m for m in self.macros}

    @cached_property
    def terminal_by_id(self) -> Dict[str, Terminal]:
        return {t.id: t for t in self.terminals}

    def owner_size(self, owner: str) -> Tuple[float, float]:
        if owner in self.macro_by_id:
            macro = self.macro_by_id[owner]
            return macro.width, macro.height
        terminal = self.terminal_by_id[owner]
        return terminal.width, terminal.height

    def pin_anchor(self, pin: Pin) -> Tuple[float, float]:
        """Pin offset relative to the owner's left-bottom corner"""
        width, height = self.owner_size(pin.owner)
        return width / 2 + pin.offset_x, height / 2 + pin.offset_y

    @cached_property
    def macro_pins(self) -> Dict[str, List[Tuple[int, float, float]]]:
        """macro id -> [(net index, dx, dy)] with left-bottom-relative offsets"""
        table = {m.id: [] for m in self.macros}
        for index, net in enumerate(self.nets):
            for pin in net.pins:
                if pin.owner in table:
                    dx, dy = self.pin_anchor(pin)
                    table[pin.owner].append((index, dx, dy))
        return table

    @cached_property
    def fixed_pin_positions(self) -> List[List[Tuple[float, float]]]:
        """Absolute positions of terminal pins, per net"""
        positions = []
        for net in self.nets:
            fixed = []
            for pin in net.pins:
                terminal = self.terminal_by_id.get(pin.owner)
                if terminal is not None:
                    dx, dy = self.pin_anchor(pin)
                    fixed.append((terminal.x + dx, terminal.y + dy))
            positions.append(fixed)
        return positions

    def incident_net_count(self, macro_id: str) -> int:
        return len({index for index, _, _ in self.macro_pins[macro_id]})


def validate(netlist: Netlist) -> Netlist:
    """Check every type invariant; returns the netlist unchanged"""
    if netlist.canvas_width <= 0 or netlist.canvas_height <= 0:
        raise NetlistInvariantError("canvas dimensions must be positive")

    seen = set()
    for macro in netlist.macros:
        if macro.width <= 0 or macro.height <= 0:
            raise NetlistInvariantError(f"macro {macro.id} has non-positive size")
        if macro.id in seen:
            raise NetlistInvariantError(f"duplicate node id {macro.id}")
        seen.add(macro.id)
    for terminal in netlist.terminals:
        if terminal.id in seen:
            raise NetlistInvariantError(f"duplicate node id {terminal.id}")
        seen.add(terminal.id)
        if (terminal.x < 0 or terminal.y < 0
                or terminal.x + terminal.width > netlist.canvas_width
                or terminal.y + terminal.height > netlist.canvas_height):
            raise NetlistInvariantError(f"terminal {terminal.id} lies outside the canvas")

    for net in netlist.nets:
        if not net.pins:
            raise NetlistInvariantError(f"net {net.id} has no pins")
        for pin in net.pins:
            if pin.owner not in seen:
                raise UnresolvedPinOwner(pin.owner)
            width, height = netlist.owner_size(pin.owner)
            if (abs(pin.offset_x) > width / 2 + OFFSET_TOLERANCE
                    or abs(pin.offset_y) > height / 2 + OFFSET_TOLERANCE):
                raise NetlistInvariantError(
                    f"pin of {pin.owner} on net {net.id} lies outside its owner")
    return netlist


# Parsing

def _tokens(path: Path) -> Iterator[Tuple[int, List[str]]]:
    """Yield (line number, tokens) for data lines; ':' becomes its own token"""
    try:
        text = path.read_text()
    except OSError:
        raise MissingFile(path)
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line or line.startswith('UCLA'):
            continue
        yield number, line.replace(':', ' : ').split()


def _number(path: Path, number: int, tokens: List[str], text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedLine(path, number, ' '.join(tokens))


def _read_aux(aux_path: Path) -> Dict[str, Path]:
    if not aux_path.exists():
        raise MissingFile(aux_path)
    files = {}
    for number, tokens in _tokens(aux_path):
        if ':' not in tokens:
            raise MalformedLine(aux_path, number, ' '.join(tokens))
        for name in tokens[tokens.index(':') + 1:]:
            files[Path(name).suffix.lower()] = aux_path.parent / name
    for suffix in ('.nodes', '.nets', '.pl'):
        if suffix not in files:
            raise MissingFile(aux_path.with_suffix(suffix))
        if not files[suffix].exists():
            raise MissingFile(files[suffix])
    return files


def _read_nodes(path: Path) -> Dict[str, Tuple[float, float, bool]]:
    nodes = {}
    for number, tokens in _tokens(path):
        if tokens[0].startswith('Num'):
            continue
        if len(tokens) < 3:
            raise MalformedLine(path, number, ' '.join(tokens))
        width = _number(path, number, tokens, tokens[1])
        height = _number(path, number, tokens, tokens[2])
        fixed = len(tokens) > 3 and tokens[3].lower().startswith('terminal')
        nodes[tokens[0]] = (width, height, fixed)
    return nodes


def _read_nets(path: Path) -> List[Tuple[str, List[Tuple[str, float, float]]]]:
    nets = []
    remaining = 0
    for number, tokens in _tokens(path):
        if tokens[0] == 'NetDegree':
            if remaining:
                raise MalformedLine(path, number, ' '.join(tokens))
            if len(tokens) < 3 or tokens[1] != ':':
                raise MalformedLine(path, number, ' '.join(tokens))
            try:
                remaining = int(tokens[2])
            except ValueError:
                raise MalformedLine(path, number, ' '.join(tokens))
            name = tokens[3] if len(tokens) > 3 else f"n{len(nets)}"
            nets.append((name, []))
            continue
        if tokens[0].startswith('Num'):
            continue
        if not remaining:
            raise MalformedLine(path, number, ' '.join(tokens))
        offset_x = offset_y = 0.0
        if ':' in tokens:
            offsets = tokens[tokens.index(':') + 1:]
            if len(offsets) != 2:
                raise MalformedLine(path, number, ' '.join(tokens))
            offset_x = _number(path, number, tokens, offsets[0])
            offset_y = _number(path, number, tokens, offsets[1])
        nets[-1][1].append((tokens[0], offset_x, offset_y))
        remaining -= 1
    if remaining:
        raise MalformedLine(path, 0, f"net {nets[-1][0]} is missing {remaining} pins")
    return nets


def _read_positions(path: Path) -> Dict[str, Tuple[float, float]]:
    positions = {}
    for number, tokens in _tokens(path):
        if len(tokens) < 3:
            raise MalformedLine(path, number, ' '.join(tokens))
        positions[tokens[0]] = (_number(path, number, tokens, tokens[1]),
                                _number(path, number, tokens, tokens[2]))
    return positions


def _read_scl(path: Path) -> Tuple[float, float, Optional[float]]:
    """Return (right extent, top extent, smallest row height)"""
    right = top = 0.0
    row_height = None
    row = {}
    for number, tokens in _tokens(path):
        key = tokens[0]
        if key == 'CoreRow':
            row = {}
        elif key == 'End':
            bottom = row.get('Coordinate', 0.0)
            height = row.get('Height', 0.0)
            spacing = row.get('Sitespacing', row.get('Sitewidth', 1.0))
            top = max(top, bottom + height)
            right = max(right, row.get('SubrowOrigin', 0.0) + row.get('NumSites', 0.0) * spacing)
            if height > 0:
                row_height = height if row_height is None else min(row_height, height)
        elif not key.startswith('Num'):
            # "SubrowOrigin : x NumSites : n" carries two pairs
            for i, token in enumerate(tokens):
                if token == ':' and 0 < i < len(tokens) - 1:
                    try:
                        row[tokens[i - 1]] = float(tokens[i + 1])
                    except ValueError:
                        pass
    return right, top, row_height


def read_pl(netlist: Netlist, path) -> Dict[str, Tuple[float, float]]:
    """Movable macro positions (microns, left-bottom) from a .pl file"""
    positions = _read_positions(Path(path))
    return {mid: xy for mid, xy in positions.items() if mid in netlist.macro_by_id}


def parse_bundle(aux_path, promote_fixed_macros: bool = False) -> Netlist:
    """Parse a Bookshelf bundle into a resolved, validated Netlist"""
    aux_path = Path(aux_path)
    files = _read_aux(aux_path)
    nodes = _read_nodes(files['.nodes'])
    raw_nets = _read_nets(files['.nets'])
    positions = _read_positions(files['.pl'])

    scl_right = scl_top = 0.0
    row_height = None
    if '.scl' in files and files['.scl'].exists():
        scl_right, scl_top, row_height = _read_scl(files['.scl'])

    macros, terminals = [], []
    for name, (width, height, fixed) in nodes.items():
        tall = row_height is None or height > row_height
        if fixed and not (promote_fixed_macros and row_height is not None and tall):
            if name not in positions:
                raise NetlistInvariantError(f"terminal {name} has no position in .pl")
            x, y = positions[name]
            terminals.append(Terminal(name, x, y, width, height))
        elif tall:
            macros.append(Macro(name, width, height, True))

    kept = {m.id for m in macros} | {t.id for t in terminals}
    nets = []
    for name, pins in raw_nets:
        resolved = []
        for owner, offset_x, offset_y in pins:
            if owner not in nodes:
                raise UnresolvedPinOwner(owner)
            if owner in kept:
                resolved.append(Pin(owner, offset_x, offset_y))
        if len(resolved) >= 2:
            nets.append(Net(name, tuple(resolved)))

    initial = {m.id: positions[m.id] for m in macros if m.id in positions}
    for name, (x, y) in positions.items():
        if name in nodes and (x < 0 or y < 0):
            raise NetlistInvariantError(f"node {name} has a negative coordinate")

    width, height = scl_right, scl_top
    for t in terminals:
        width, height = max(width, t.x + t.width), max(height, t.y + t.height)
    for m in macros:
        if m.id in initial:
            x, y = initial[m.id]
            width, height = max(width, x + m.width), max(height, y + m.height)

    netlist = validate(Netlist(tuple(macros), tuple(terminals), tuple(nets),
                               width, height, initial))
    print(f"📂 Parsed {aux_path.name}: {len(macros)} macros, {len(terminals)} terminals, "
          f"{len(nets)} nets, canvas {width:g}x{height:g}")
    return netlist


# Writing

def _fmt(value: float) -> str:
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _pl_lines(netlist: Netlist, positions: Dict[str, Tuple[float, float]]) -> List[str]:
    lines = ["UCLA pl 1.0", ""]
    for macro in netlist.macros:
        if macro.id not in positions:
            raise UnplacedOwner(macro.id)
        x, y = positions[macro.id]
        lines.append(f"{macro.id} {_fmt(x)} {_fmt(y)} : N")
    for terminal in netlist.terminals:
        lines.append(f"{terminal.id} {_fmt(terminal.x)} {_fmt(terminal.y)} : N /FIXED")
    return lines


def _write_lines(path: Path, lines: List[str]):
    try:
        path.write_text('\n'.join(lines) + '\n')
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")


def write_pl(netlist: Netlist, placement, path):
    """Write a .pl; placement is a PlacementState (grid coords mapped to microns)"""
    positions = {m.id: placement.micron_position(m.id)
                 for m in netlist.macros if placement.is_placed(m.id)}
    _write_lines(Path(path), _pl_lines(netlist, positions))


def write_bundle(netlist: Netlist, placement, directory, name: str) -> Path:
    """Write .aux/.nodes/.nets/.pl/.scl; returns the .aux path

    placement may be None, in which case netlist.initial is written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    nodes = ["UCLA nodes 1.0", "",
             f"NumNodes : {len(netlist.macros) + len(netlist.terminals)}",
             f"NumTerminals : {len(netlist.terminals)}"]
    nodes += [f"{m.id} {_fmt(m.width)} {_fmt(m.height)}" for m in netlist.macros]
    nodes += [f"{t.id} {_fmt(t.width)} {_fmt(t.height)} terminal" for t in netlist.terminals]

    nets = ["UCLA nets 1.0", "",
            f"NumNets : {len(netlist.nets)}",
            f"NumPins : {sum(len(n.pins) for n in netlist.nets)}"]
    for net in netlist.nets:
        nets.append(f"NetDegree : {len(net.pins)} {net.id}")
        nets += [f"  {p.owner} B : {_fmt(p.offset_x)} {_fmt(p.offset_y)}" for p in net.pins]

    # a bottom and a top row fix the canvas extents; the row height stays
    # below every macro height so no macro is re-read as a standard cell
    row_height = netlist.canvas_height
    if netlist.macros:
        row_height = min(row_height, min(m.height for m in netlist.macros) / 2)
    row_bottoms = [0.0]
    if netlist.canvas_height - row_height > 0:
        row_bottoms.append(netlist.canvas_height - row_height)
    scl = ["UCLA scl 1.0", "", f"NumRows : {len(row_bottoms)}", ""]
    for bottom in row_bottoms:
        scl += ["CoreRow Horizontal",
                f"  Coordinate : {_fmt(bottom)}",
                f"  Height : {_fmt(row_height)}",
                f"  Sitewidth : {_fmt(netlist.canvas_width)}",
                f"  Sitespacing : {_fmt(netlist.canvas_width)}",
                "  Siteorient : N",
                "  Sitesymmetry : Y",
                "  SubrowOrigin : 0 NumSites : 1",
                "End"]

    if placement is None:
        positions = dict(netlist.initial)
    else:
        positions = {m.id: placement.micron_position(m.id)
                     for m in netlist.macros if placement.is_placed(m.id)}

    _write_lines(directory / f"{name}.nodes", nodes)
    _write_lines(directory / f"{name}.nets", nets)
    _write_lines(directory / f"{name}.pl", _pl_lines(netlist, positions))
    _write_lines(directory / f"{name}.scl", scl)
    aux = directory / f"{name}.aux"
    _write_lines(aux, [f"RowBasedPlacement : {name}.nodes {name}.nets {name}.pl {name}.scl"])
    return aux


# Synthetic instances

def gen_synthetic(seed: int, k_macros: int, n_nets: int,
                  canvas: Tuple[float, float] = (320.0, 320.0),
                  n_terminals: int = 0) -> Netlist:
    """Deterministic synthetic netlist with integer sizes and half-integer pin offsets"""
    if k_macros < 1 or n_nets < 0 or n_terminals < 0:
        raise ValueError("need k_macros >= 1, n_nets >= 0, n_terminals >= 0")
    width, height = float(canvas[0]), float(canvas[1])
    budget = 0.5 * width * height / k_macros
    if budget < 1 or width < 1 or height < 1:
        raise InfeasibleAreaBudget(
            f"{k_macros} macros of at least 1x1 exceed half of a {width:g}x{height:g} canvas")

    rng = np.random.default_rng(seed)
    area_cap = int(budget)
    max_side = max(1, min(int(width), (math.isqrt(area_cap) * 3) // 2))

    macros = []
    for i in range(k_macros):
        w = int(rng.integers(1, max_side + 1))
        h = int(rng.integers(1, max(1, min(int(height), area_cap // w)) + 1))
        macros.append(Macro(f"m{i}", float(w), float(h), True))

    terminals = []
    for i in range(n_terminals):
        x = int(rng.integers(0, int(width)))
        y = int(rng.integers(0, int(height)))
        terminals.append(Terminal(f"p{i}", float(x), float(y), 1.0, 1.0))

    owners = [(m.id, m.width, m.height) for m in macros]
    owners += [(t.id, t.width, t.height) for t in terminals]
    if n_nets and len(owners) < 2:
        raise ValueError("nets need at least two distinct owners")

    nets = []
    for i in range(n_nets):
        degree = int(rng.integers(2, min(5, len(owners)) + 1))
        chosen = rng.choice(len(owners), size=degree, replace=False)
        pins = []
        for index in chosen:
            owner, w, h = owners[int(index)]
            offset_x = int(rng.integers(-int(w), int(w) + 1)) / 2
            offset_y = int(rng.integers(-int(h), int(h) + 1)) / 2
            pins.append(Pin(owner, offset_x, offset_y))
        nets.append(Net(f"n{i}", tuple(pins)))

    return validate(Netlist(tuple(macros), tuple(terminals), tuple(nets), width, height, {}))


def dump_netlist(netlist: Netlist) -> str:
    """Line-oriented plain-text dump used for golden tests and hashing"""
    lines = [f"canvas {_fmt(netlist.canvas_width)} {_fmt(netlist.canvas_height)}"]
    lines += [f"macro {m.id} {_fmt(m.width)} {_fmt(m.height)}" for m in netlist.macros]
    lines += [f"terminal {t.id} {_fmt(t.x)} {_fmt(t.y)} {_fmt(t.width)} {_fmt(t.height)}"
              for t in netlist.terminals]
    for net in netlist.nets:
        lines.append(f"net {net.id} {len(net.pins)}")
        lines += [f"  pin {p.owner} {_fmt(p.offset_x)} {_fmt(p.offset_y)}" for p in net.pins]
    for mid in sorted(netlist.initial):
        x, y = netlist.initial[mid]
        lines.append(f"initial {mid} {_fmt(x)} {_fmt(y)}")
    return '\n'.join(lines) + '\n'


def structural_hash(netlist: Netlist) -> str:
    return hashlib.sha256(dump_netlist(netlist).encode()).hexdigest()


def scaled(netlist: Netlist, factor: float) -> Netlist:
    """Multiply every coordinate and size by factor"""
    return Netlist(
        tuple(Macro(m.id, m.width * factor, m.height * factor, m.movable) for m in netlist.macros),
        tuple(Terminal(t.id, t.x * factor, t.y * factor, t.width * factor, t.height * factor)
              for t in netlist.terminals),
        tuple(Net(n.id, tuple(Pin(p.owner, p.offset_x * factor, p.offset_y * factor)
                              for p in n.pins)) for n in netlist.nets),
        netlist.canvas_width * factor,
        netlist.canvas_height * factor,
        {mid: (x * factor, y * factor) for mid, (x, y) in netlist.initial.items()},
    )
