#!/usr/bin/env python3
"""
SVG rendering of a placement
"""

from pathlib import Path
from typing import Dict, Optional, Tuple

import svgwrite

from bookshelf import Netlist
from errors import IoError

CANVAS_FILL = "#ffffff"
TERMINAL_FILL = "#7f8c8d"
MACRO_FILL = "#f5b041"
GRID_STROKE = "#d5d8dc"


def _num(value: float) -> float:
    value = float(value)
    return int(value) if value.is_integer() else value


def render_layout(netlist: Netlist, positions: Dict[str, Tuple[float, float]],
                  grid: Optional[int] = None, scale: float = 1.0) -> svgwrite.Drawing:
    """Drawing of the canvas, terminals and placed macros

    positions are micron left-bottom corners. The content group flips the y
    axis so every rect uses canvas coordinates directly.
    """
    width, height = netlist.canvas_width, netlist.canvas_height
    dwg = svgwrite.Drawing(size=(_num(width * scale), _num(height * scale)), profile='full')
    dwg.viewbox(0, 0, _num(width), _num(height))
    layout = dwg.g(transform=f"translate(0,{_num(height)}) scale(1,-1)")

    layout.add(dwg.rect(insert=(0, 0), size=(_num(width), _num(height)),
                        fill=CANVAS_FILL, stroke="black", class_="canvas"))

    if grid:
        lines = dwg.g(stroke=GRID_STROKE, class_="grid")
        for i in range(1, grid):
            x = _num(width * i / grid)
            y = _num(height * i / grid)
            lines.add(dwg.line(start=(x, 0), end=(x, _num(height))))
            lines.add(dwg.line(start=(0, y), end=(_num(width), y)))
        layout.add(lines)

    for terminal in netlist.terminals:
        layout.add(dwg.rect(insert=(_num(terminal.x), _num(terminal.y)),
                            size=(_num(terminal.width), _num(terminal.height)),
                            fill=TERMINAL_FILL, class_="terminal"))

    for macro in netlist.macros:
        if macro.id not in positions:
            continue
        x, y = positions[macro.id]
        rect = dwg.rect(insert=(_num(x), _num(y)), size=(_num(macro.width), _num(macro.height)),
                        fill=MACRO_FILL, stroke="black", class_="macro")
        rect.set_desc(title=macro.id)
        layout.add(rect)

    dwg.add(layout)
    return dwg


def render_svg(netlist: Netlist, positions: Dict[str, Tuple[float, float]], path,
               grid: Optional[int] = None, scale: float = 1.0) -> Path:
    path = Path(path)
    dwg = render_layout(netlist, positions, grid, scale)
    try:
        path.write_text(dwg.tostring())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")
    print(f"📂 Rendered {len(positions)} macros to {path}")
    return path
