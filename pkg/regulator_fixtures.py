#!/usr/bin/env python3
"""
Shared fixtures for the test scripts: a hand-written Bookshelf bundle, small
netlist builders and the script-mode test runner
"""

import inspect
import sys
import tempfile
import traceback
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import pytest

from bookshelf import Macro, Net, Netlist, Pin, Terminal, gen_synthetic, validate


# Canvas 100 x 100 with 2-unit rows: A and B are macros, c1/c2 are standard
# cells, p1 is a terminal. N3 only touches standard cells and is dropped.
FIXTURE_FILES = {
    'fixture.aux': "RowBasedPlacement : fixture.nodes fixture.nets fixture.pl fixture.scl\n",
    'fixture.nodes': """UCLA nodes 1.0
# hand-written fixture
NumNodes : 5
NumTerminals : 1
A 20 10
B 10 20
c1 2 2
c2 2 2
p1 2 2 terminal
""",
    'fixture.nets': """UCLA nets 1.0
NumNets : 3
NumPins : 7
NetDegree : 3 N1
  A B : 5 0
  B I : 0 -5
  c1 O
NetDegree : 2 N2
  A O : -5 0
  p1 I : 0 0
NetDegree : 2 N3
  c1 I
  c2 O
""",
    'fixture.pl': """UCLA pl 1.0
A 0 0 : N
B 40 40 : N
c1 10 50 : N
c2 12 50 : N
p1 60 0 : N /FIXED
""",
    'fixture.scl': """UCLA scl 1.0
NumRows : 2
CoreRow Horizontal
  Coordinate : 0
  Height : 2
  Sitewidth : 1
  Sitespacing : 1
  SubrowOrigin : 0 NumSites : 100
End
CoreRow Horizontal
  Coordinate : 98
  Height : 2
  Sitewidth : 1
  Sitespacing : 1
  SubrowOrigin : 0 NumSites : 100
End
""",
}

# hand-computed for the fixture's .pl: N1 = 30 + 40, N2 = 56 + 4
FIXTURE_HPWL = 130.0
FIXTURE_REGULARITY = 80.0


def write_fixture_bundle(directory, replace: dict = None) -> Path:
    """Write the hand-written bundle; replace maps file name -> new text"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = dict(FIXTURE_FILES)
    files.update(replace or {})
    for name, text in files.items():
        (directory / name).write_text(text)
    return directory / 'fixture.aux'


def make_netlist(macros: Sequence[Tuple[str, float, float]],
                 nets: Sequence[Tuple[str, Sequence[Tuple[str, float, float]]]] = (),
                 terminals: Sequence[Tuple[str, float, float, float, float]] = (),
                 canvas: Tuple[float, float] = (160.0, 160.0)) -> Netlist:
    return validate(Netlist(
        tuple(Macro(mid, float(w), float(h)) for mid, w, h in macros),
        tuple(Terminal(tid, float(x), float(y), float(w), float(h)) for tid, x, y, w, h in terminals),
        tuple(Net(nid, tuple(Pin(owner, float(dx), float(dy)) for owner, dx, dy in pins))
              for nid, pins in nets),
        float(canvas[0]), float(canvas[1]), {},
    ))


def small_synthetic(seed: int, k: int = 6, n: int = 8, terminals: int = 2,
                    side: float = 160.0) -> Netlist:
    """Synthetic chip whose canvas divides evenly into a 16 x 16 grid"""
    return gen_synthetic(seed, k, n, (side, side), terminals)


def run_as_script(tests: Iterable) -> int:
    """Run test functions without pytest; tmp_path is a fresh temp dir"""
    results = []
    for test in tests:
        name = test.__name__
        print(f"\n🧪 {name}")
        kwargs = {}
        if 'tmp_path' in inspect.signature(test).parameters:
            kwargs['tmp_path'] = Path(tempfile.mkdtemp(prefix='regulator_'))
        try:
            test(**kwargs)
            results.append((name, 'PASSED'))
            print(f"✅ {name}: PASSED")
        except pytest.skip.Exception as e:
            results.append((name, 'SKIPPED'))
            print(f"⏭️ {name}: SKIPPED - {e}")
        except Exception as e:
            results.append((name, 'FAILED'))
            print(f"❌ {name}: FAILED - {e}")
            traceback.print_exc()

    passed = sum(1 for _, status in results if status == 'PASSED')
    failed = sum(1 for _, status in results if status == 'FAILED')
    print(f"\n📊 {passed} passed, {failed} failed, {len(results) - passed - failed} skipped")
    return 1 if failed else 0


def main_for(module_name: str):
    module = sys.modules[module_name]
    tests = [obj for name, obj in vars(module).items()
             if name.startswith('test_') and callable(obj)]
    sys.exit(run_as_script(tests))
