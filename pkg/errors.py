#!/usr/bin/env python3
"""
Error types for the macro regulator.

Every error carries the exit code the CLI returns for it.
"""


class RegulatorError(Exception):
    """Base class for all regulator errors"""

    exit_code = 1


class IoError(RegulatorError):
    """Reading or writing a file failed"""

    exit_code = 1


# Parse errors (exit 2)

class ParseError(RegulatorError):
    exit_code = 2


class MissingFile(ParseError):
    def __init__(self, path):
        super().__init__(f"missing file: {path}")
        self.path = str(path)


class MalformedLine(ParseError):
    def __init__(self, path, line_number: int, text: str = ""):
        super().__init__(f"{path}:{line_number}: malformed line: {text.strip()!r}")
        self.path = str(path)
        self.line_number = line_number


class UnresolvedPinOwner(ParseError):
    def __init__(self, name: str):
        super().__init__(f"pin references undeclared node {name!r}")
        self.name = name


class NetlistInvariantError(ParseError):
    pass


class ConfigError(ParseError):
    pass


# Infeasibility (exit 3)

class InfeasibleError(RegulatorError):
    exit_code = 3


class InfeasibleAreaBudget(InfeasibleError):
    pass


class NoValidPosition(InfeasibleError):
    def __init__(self, macro_id: str):
        super().__init__(f"no valid position for macro {macro_id!r}")
        self.macro_id = macro_id


# Placement validity (exit 4)

class PlacementError(RegulatorError):
    exit_code = 4


class OutOfCanvas(PlacementError):
    pass


class CellOccupied(PlacementError):
    pass


class UnknownMacro(PlacementError):
    def __init__(self, macro_id: str):
        super().__init__(f"unknown macro {macro_id!r}")
        self.macro_id = macro_id


class MacroAlreadyPlaced(PlacementError):
    pass


class UnplacedOwner(PlacementError):
    def __init__(self, owner: str):
        super().__init__(f"pin owner {owner!r} is not placed")
        self.owner = owner


class InvalidInitialPlacement(PlacementError):
    pass


class MissingInitial(PlacementError):
    pass


class InvalidAction(PlacementError):
    pass


# Numeric errors (exit 5)

class NumericError(RegulatorError):
    exit_code = 5


class ShapeMismatch(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass
