"""Exception hierarchy shared across the toolkit.

``InputError`` subclasses indicate bad user input (CLI exit code 1);
everything else under ``SynnamonError`` is a runtime failure (exit code 2).
"""

from __future__ import annotations


class SynnamonError(Exception):
    pass


class InputError(SynnamonError, ValueError):
    pass


# --- bracketed-tree parsing; offsets are byte offsets into the input ---

class TreeParseError(InputError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnbalancedParens(TreeParseError):
    pass


class EmptyNode(TreeParseError):
    pass


class TrailingGarbage(TreeParseError):
    pass


class MixedChildren(TreeParseError):
    pass


# --- corpus filtering / splitting ---

class EmptyResult(InputError):
    pass


class InfeasibleSplit(SynnamonError):
    pass


# --- autodiff / optimizer ---

class ShapeMismatch(SynnamonError, ValueError):
    pass


class EmptyInputList(SynnamonError, ValueError):
    pass


class NotScalarLoss(SynnamonError, ValueError):
    pass


class NonFiniteLoss(SynnamonError, ArithmeticError):
    pass


# --- module registry / composition ---

class MissingModule(SynnamonError, KeyError):
    def __init__(self, rule_key: str):
        super().__init__(rule_key)
        self.rule_key = rule_key

    def __str__(self):
        return f"no module for rule {self.rule_key!r}"


class CheckpointError(InputError):
    pass


# --- dataset loading; ``line`` is the 1-based line number when known ---

class DatasetError(InputError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DatasetError):
    pass


class DimMismatch(DatasetError):
    pass


class LeafCountMismatch(DatasetError):
    pass


# --- training / evaluation ---

class TooFewRecords(InputError):
    pass


class DegenerateChance(SynnamonError, ArithmeticError):
    pass


class EmptyDataset(InputError):
    pass
