"""
Lexer, recursive-descent parser and pretty-printer for the shape-grammar DSL.

Surface syntax (see docs/grammar.md)::

    # comment
    attr height = rand(8, 20)
    terminal Window
    Lot     --> setback(2) extrude(height) Mass
    Mass    --> comp(faces) { top: Roof | side: Facade }
    Roof    --> 30%: roof(gable, 35) 70%: roof(flat)
    Facade  --> split(y) { 3: Floor | ~1: Facade }
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..errors import GrammarError, GrammarSyntaxError, NonPositiveWeight, UndefinedSymbol, UnknownOperation
from .ast import (AXES, COMPONENTS, FUNCTIONS, NIL, OPERATIONS, ROOF_KINDS, Alternative, Attr, BinOp,
                  Branch, Call, Emit, Neg, Num, Op, Program, Ref, Rule)

WEIGHT_TOL = 1e-12
RESERVED = ("attr", "terminal")

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>-->)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(){}:,|%~+\-*/=;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | arrow | punct | eof
    text: str
    line: int
    col: int


def tokenize(text: str):
    tokens = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise GrammarSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, tok, line, m.start() - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = m.start() + tok.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, kind=None) -> bool:
        t = self.tok
        return t.text == text and (kind is None or t.kind == kind)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text) -> Token:
        if self.tok.text != text or self.tok.kind == "eof":
            self.fail(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def fail(self, msg, tok=None, cls=GrammarSyntaxError):
        t = tok or self.tok
        raise cls(msg, t.line, t.col)

    # grammar

    def program(self) -> Program:
        attrs, rules, terminals = [], [], []
        seen = {}
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind == "ident" and t.text == "attr" and self.peek().kind == "ident":
                attrs.append(self.attr())
            elif t.kind == "ident" and t.text == "terminal" and self.peek().kind == "ident":
                self.advance()
                terminals.append(self.advance().text)
                while self.at(","):
                    self.advance()
                    if self.tok.kind != "ident":
                        self.fail("expected symbol name")
                    terminals.append(self.advance().text)
                self._end_stmt()
            elif t.kind == "ident" and self.peek().kind == "arrow":
                r = self.rule()
                if r.name in seen:
                    self.fail(f"rule {r.name!r} defined twice", t)
                seen[r.name] = r
                rules.append(r)
            else:
                self.fail(f"expected a rule, found {t.text or 'end of input'!r}")
        return Program(tuple(attrs), tuple(rules), tuple(dict.fromkeys(terminals)))

    def _end_stmt(self):
        if self.at(";"):
            self.advance()

    def attr(self) -> Attr:
        self.advance()
        name = self.advance().text
        self.expect("=")
        e = self.expr()
        self._end_stmt()
        return Attr(name, e)

    def rule(self) -> Rule:
        head = self.advance()
        self.advance()  # -->
        alts = []
        if self._at_weight():
            raw = []
            while self._at_weight():
                wt = self.tok
                w = float(self.advance().text)
                if self.at("%"):
                    self.advance()
                    w /= 100.0
                self.expect(":")
                if not w > 0 or not math.isfinite(w):
                    self.fail(f"weight must be positive, got {wt.text}", wt, NonPositiveWeight)
                raw.append((w, self.body()))
            total = math.fsum(w for w, _ in raw)
            if abs(total - 1.0) > WEIGHT_TOL:
                raw = [(w / total, b) for w, b in raw]
            alts = [Alternative(w, b) for w, b in raw]
        else:
            alts = [Alternative(1.0, self.body())]
        self._end_stmt()
        return Rule(head.text, tuple(alts), (head.line, head.col))

    def _at_weight(self) -> bool:
        return self.tok.kind == "number" and self.peek().text in ("%", ":")

    def _body_ends(self) -> bool:
        t = self.tok
        if t.kind == "eof" or t.text in (";", "|", "}"):
            return True
        if self._at_weight():
            return True
        if t.kind == "ident" and self.peek().kind == "arrow":
            return True
        if t.kind == "ident" and t.text in RESERVED and self.peek().kind == "ident":
            return True
        return False

    def body(self) -> tuple:
        items = []
        while not self._body_ends():
            t = self.tok
            if t.kind != "ident" or t.text in RESERVED:
                self.fail(f"expected an operation or symbol, found {t.text!r}")
            if self.peek().text == "(":
                items.append(self.operation())
            else:
                self.advance()
                items.append(Emit(t.text, (t.line, t.col)))
        return tuple(items)

    def operation(self) -> Op:
        t = self.advance()
        name = t.text
        if name not in OPERATIONS:
            self.fail(f"unknown operation {name!r}", t, UnknownOperation)
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.expr())
            while self.at(","):
                self.advance()
                args.append(self.expr())
        self.expect(")")
        args = tuple(args)
        self._check_args(name, args, t)
        branches = None
        if name in ("split", "comp"):
            branches = self.branches(name)
        elif self.at("{"):
            self.fail(f"{name}() takes no branch block")
        return Op(name, args, branches, (t.line, t.col))

    def _check_args(self, name, args, t):
        def word(a, allowed, what):
            if not isinstance(a, Ref) or (allowed and a.name not in allowed):
                self.fail(f"{name}() expects {what}", t)

        arity = {"extrude": (1, 1), "setback": (1, 1), "split": (1, 1), "comp": (1, 1),
                 "roof": (1, 2), "color": (3, 3), "texture": (1, 1)}[name]
        if not arity[0] <= len(args) <= arity[1]:
            self.fail(f"{name}() takes {arity[0]}..{arity[1]} arguments, got {len(args)}", t)
        if name == "split":
            word(args[0], AXES, "an axis x, y or z")
        elif name == "comp":
            word(args[0], ("faces",), "'faces'")
        elif name == "roof":
            word(args[0], ROOF_KINDS, "a roof kind flat, gable or hip")
        elif name == "texture":
            word(args[0], None, "a palette name")

    def branches(self, opname) -> tuple:
        self.expect("{")
        out = [self.branch(opname)]
        while self.at("|"):
            self.advance()
            out.append(self.branch(opname))
        self.expect("}")
        return tuple(out)

    def branch(self, opname) -> Branch:
        if opname == "comp":
            t = self.tok
            if t.kind != "ident" or t.text not in COMPONENTS:
                self.fail("expected top, side or bottom")
            self.advance()
            self.expect(":")
            return Branch(t.text, self.body())
        relative = False
        if self.at("~"):
            self.advance()
            relative = True
        size = self.expr()
        self.expect(":")
        return Branch(size, self.body(), relative)

    # expressions

    def expr(self):
        left = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "punct":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.tok.text in ("*", "/") and self.tok.kind == "punct":
            op = self.advance().text
            left = BinOp(op, left, self.factor())
        return left

    def factor(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Num(float(t.text))
        if t.text == "-" and t.kind == "punct":
            self.advance()
            return Neg(self.factor())
        if t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                if t.text not in FUNCTIONS:
                    self.fail(f"unknown function {t.text!r}", t, UnknownOperation)
                self.advance()
                args = [self.expr()]
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if t.text == "rand" and len(args) != 2:
                    self.fail("rand() takes 2 arguments", t)
                return Call(t.text, tuple(args))
            return Ref(t.text, (t.line, t.col))
        self.fail(f"expected an expression, found {t.text or 'end of input'!r}")


def parse_grammar(text: str) -> Program:
    """Parse grammar source into a :class:`Program` (no symbol link check)."""
    return Parser(text).program()


def link(program: Program) -> Program:
    """Check that every emitted symbol is a rule, a declared terminal or NIL,
    and that every attribute reference resolves. Returns the program."""
    known = set(program.rule_names) | set(program.terminals) | {NIL}
    for sym, rule in program.emitted_symbols():
        if sym not in known:
            raise UndefinedSymbol(sym, rule)
    names = set()
    for a in program.attrs:
        for ref in _refs(a.expr):
            if ref not in names:
                raise UndefinedSymbol(ref, f"attr {a.name}")
        names.add(a.name)
    words = set(AXES) | set(ROOF_KINDS) | {"faces"}
    for r in program.rules:
        for alt in r.alternatives:
            for op in _ops(alt.body):
                exprs = op.args
                if op.name in ("split", "comp", "roof", "texture"):
                    exprs = op.args[1:]
                if op.branches:
                    exprs = exprs + tuple(b.key for b in op.branches if not isinstance(b.key, str))
                for e in exprs:
                    for ref in _refs(e):
                        if ref not in names and ref not in words:
                            raise UndefinedSymbol(ref, r.name)
    return program


def _ops(body):
    for item in body:
        if isinstance(item, Op):
            yield item
            for br in item.branches or ():
                yield from _ops(br.body)


def _refs(e):
    if isinstance(e, Ref):
        yield e.name
    elif isinstance(e, Call):
        for a in e.args:
            yield from _refs(a)
    elif isinstance(e, Neg):
        yield from _refs(e.operand)
    elif isinstance(e, BinOp):
        yield from _refs(e.left)
        yield from _refs(e.right)


# --------------------------------------------------------------------------
# pretty printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(e, prec=0) -> str:
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Neg):
        return f"-{format_expr(e.operand, 3)}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        # left-associative: the right operand needs parens at equal precedence
        s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    raise GrammarError(f"cannot format {e!r}")


def _num(v: float) -> str:
    if v < 0:
        # negative literals only arise from Neg nodes; keep the tree shape
        raise GrammarError("negative literal in syntax tree")
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _weight(w: float) -> str:
    pct = round(w * 100.0, 10)
    s = _num(pct)
    if float(s) / 100.0 == w:
        return f"{s}%"
    return _num(w)


def format_body(body) -> str:
    parts = []
    for item in body:
        if isinstance(item, Emit):
            parts.append(item.symbol)
            continue
        s = f"{item.name}({', '.join(format_expr(a) for a in item.args)})"
        if item.branches is not None:
            arms = []
            for br in item.branches:
                key = br.key if isinstance(br.key, str) else ("~" if br.relative else "") + format_expr(br.key)
                inner = format_body(br.body)
                arms.append(f"{key}: {inner}".rstrip())
            s += " { " + " | ".join(arms) + " }"
        parts.append(s)
    return " ".join(parts)


def format_program(program: Program) -> str:
    lines = []
    for a in program.attrs:
        lines.append(f"attr {a.name} = {format_expr(a.expr)}")
    if program.terminals:
        lines.append("terminal " + ", ".join(program.terminals))
    for r in program.rules:
        if r.stochastic:
            body = " ".join(f"{_weight(a.weight)}: {format_body(a.body)}".rstrip() for a in r.alternatives)
        else:
            body = format_body(r.alternatives[0].body)
        lines.append(f"{r.name} --> {body}".rstrip() + ";")
    return "\n".join(lines) + "\n"
