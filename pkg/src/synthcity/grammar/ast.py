"""Syntax tree for shape-grammar programs.

Nodes are frozen and hashable. Source positions are carried for error
messages but excluded from equality, so a program re-parsed from its
pretty-printed form compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

OPERATIONS = ("extrude", "split", "comp", "setback", "roof", "color", "texture")
FUNCTIONS = ("rand",)
AXES = ("x", "y", "z")
ROOF_KINDS = ("flat", "gable", "hip")
COMPONENTS = ("top", "side", "bottom")
NIL = "NIL"


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Ref, Call, Neg, BinOp]


@dataclass(frozen=True)
class Emit:
    symbol: str
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Branch:
    """One arm of split/comp. ``key`` is a size expression or a component name."""

    key: Union[Expr, str]
    body: tuple
    relative: bool = False


@dataclass(frozen=True)
class Op:
    name: str
    args: tuple
    branches: Optional[Tuple[Branch, ...]] = None
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


Item = Union[Op, Emit]


@dataclass(frozen=True)
class Alternative:
    weight: float
    body: tuple


@dataclass(frozen=True)
class Rule:
    name: str
    alternatives: tuple
    pos: tuple = field(default=(0, 0), compare=False, repr=False)

    @property
    def stochastic(self) -> bool:
        return len(self.alternatives) > 1

    @property
    def weights(self) -> tuple:
        return tuple(a.weight for a in self.alternatives)


@dataclass(frozen=True)
class Attr:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Program:
    attrs: tuple = ()
    rules: tuple = ()
    terminals: tuple = ()

    def rule(self, name) -> Optional[Rule]:
        for r in self.rules:
            if r.name == name:
                return r
        return None

    @property
    def rule_names(self) -> tuple:
        return tuple(r.name for r in self.rules)

    def emitted_symbols(self):
        """(symbol, referencing rule) for every emission in the program."""
        out = []
        for r in self.rules:
            for alt in r.alternatives:
                for sym in _emits(alt.body):
                    out.append((sym, r.name))
        return out


def _emits(body):
    for item in body:
        if isinstance(item, Emit):
            yield item.symbol
        elif item.branches:
            for br in item.branches:
                yield from _emits(br.body)
