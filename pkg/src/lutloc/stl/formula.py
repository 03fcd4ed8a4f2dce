"""STL formula AST and a small recursive-descent parser.

Grammar (lowest precedence first)::

    formula  := implies
    implies  := or_ (('->' | '=>') implies)?
    or_      := and_ (('or' | '|' | '||') and_)*
    and_     := until (('and' | '&' | '&&') until)*
    until    := unary (('until' | 'U') interval? unary)?
    unary    := ('not' | '!' | '~') unary
              | ('alw' | 'always' | 'G') interval? unary
              | ('ev' | 'eventually' | 'F') interval? unary
              | 'true' | 'false'
              | 'step' '(' NAME (',' NUMBER)? ')'
              | '(' formula ')'
              | expr CMP expr
    interval := ('[' | '(') NUMBER ',' (NUMBER | 'inf') (']' | ')')
    CMP      := '<' | '<=' | '>' | '>='
    expr     := term (('+' | '-') term)*
    term     := factor (('*' | '/') factor)*
    factor   := '-' factor | NUMBER | NAME | 'abs' '(' expr ')' | '(' expr ')'

Comparisons are normalised to ``e >= 0``: ``f < c`` becomes ``c - f >= 0``
and ``f > c`` becomes ``f - c >= 0``. Open and closed interval brackets are
treated alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable


class FormulaSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int, text: str = ""):
        self.pos = pos
        super().__init__(f"{msg} at position {pos}" + (f": {text[pos:pos + 20]!r}" if text else ""))


class UnknownChannelError(ValueError):
    pass


# -- arithmetic expressions ---------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Abs:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Const | Var | Neg | Abs | BinOp


# -- formulas ------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi):
            raise ValueError(f"bad interval [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Atom:
    """expr >= 0"""
    expr: Expr


@dataclass(frozen=True)
class Step:
    """|x(t) - x(t - delta)| >= threshold, delta the local sample step."""
    channel: str
    threshold: float = 0.0


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: "Formula"
    right: "Formula"


Formula = TrueF | Atom | Step | Not | And | Or | Always | Eventually | Until


def implies(a: Formula, b: Formula) -> Formula:
    return Or(Not(a), b)


def channels_of(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Step):
        return {node.channel}
    if isinstance(node, Const | TrueF):
        return set()
    if isinstance(node, Atom):
        return channels_of(node.expr)
    if isinstance(node, Neg | Abs | Not | Always | Eventually):
        return channels_of(node.arg)
    return channels_of(node.left) | channels_of(node.right)


def horizon(f: Formula) -> float:
    """Length of signal suffix needed to evaluate ``f`` at one time point."""
    if isinstance(f, TrueF | Atom | Step):
        return 0.0
    if isinstance(f, Not):
        return horizon(f.arg)
    if isinstance(f, And | Or):
        return max(horizon(f.left), horizon(f.right))
    if isinstance(f, Always | Eventually):
        return f.interval.hi + horizon(f.arg)
    return f.interval.hi + max(horizon(f.left), horizon(f.right))


def to_text(node) -> str:
    """Render back into the parser's grammar."""
    def iv(i: Interval) -> str:
        hi = "inf" if math.isinf(i.hi) else repr(i.hi)
        return f"[{i.lo!r},{hi}]"

    if isinstance(node, Const):
        return repr(node.value) if node.value >= 0 else f"(-{-node.value!r})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Abs):
        return f"abs({to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, TrueF):
        return "true"
    if isinstance(node, Atom):
        return f"({to_text(node.expr)} >= 0)"
    if isinstance(node, Step):
        return f"step({node.channel}, {node.threshold!r})"
    if isinstance(node, Not):
        return f"!({to_text(node.arg)})"
    if isinstance(node, And):
        return f"({to_text(node.left)} & {to_text(node.right)})"
    if isinstance(node, Or):
        return f"({to_text(node.left)} | {to_text(node.right)})"
    if isinstance(node, Always):
        return f"alw{iv(node.interval)}({to_text(node.arg)})"
    if isinstance(node, Eventually):
        return f"ev{iv(node.interval)}({to_text(node.arg)})"
    if isinstance(node, Until):
        return f"({to_text(node.left)} until{iv(node.interval)} {to_text(node.right)})"
    raise TypeError(node)


# -- tokenizer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op><=|>=|->|=>|&&|\|\||[-+*/()<>\[\],!~&|]))"
)

_KEYWORDS = {
    "not": "!", "and": "&", "&&": "&", "or": "|", "||": "|", "=>": "->", "~": "!",
    "always": "alw", "G": "alw", "eventually": "ev", "F": "ev", "U": "until",
}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise FormulaSyntaxError("unexpected character", pos, text)
        kind = m.lastgroup
        s = m.group(kind)
        start = m.start(kind)
        if kind == "name" and s in _KEYWORDS:
            s, kind = _KEYWORDS[s], "op"
        elif kind == "name" and s in ("alw", "ev", "until", "abs", "step", "true", "false", "inf"):
            kind = "op"
        elif kind == "op":
            s = _KEYWORDS.get(s, s)
        toks.append(_Tok(kind, s, start))
        pos = m.end()
    toks.append(_Tok("end", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, channels: set[str] | None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.channels = channels

    # helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, *texts) -> bool:
        t = self.tok
        return t.kind == "op" and t.text in texts

    def take(self, text: str) -> _Tok:
        if not self.peek(text):
            raise FormulaSyntaxError(f"expected {text!r}", self.tok.pos, self.text)
        t = self.tok
        self.i += 1
        return t

    def number(self) -> float:
        neg = False
        if self.peek("-"):
            self.i += 1
            neg = True
        t = self.tok
        if t.kind == "num":
            self.i += 1
            v = float(t.text)
        elif self.peek("inf"):
            self.i += 1
            v = math.inf
        else:
            raise FormulaSyntaxError("expected a number", t.pos, self.text)
        return -v if neg else v

    # formulas
    def parse(self) -> Formula:
        f = self.implies()
        if self.tok.kind != "end":
            raise FormulaSyntaxError("unexpected trailing input", self.tok.pos, self.text)
        return f

    def implies(self) -> Formula:
        left = self.or_()
        if self.peek("->"):
            self.i += 1
            return implies(left, self.implies())
        return left

    def or_(self) -> Formula:
        f = self.and_()
        while self.peek("|"):
            self.i += 1
            f = Or(f, self.and_())
        return f

    def and_(self) -> Formula:
        f = self.until()
        while self.peek("&"):
            self.i += 1
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        f = self.unary()
        if self.peek("until"):
            self.i += 1
            iv = self.interval()
            f = Until(iv, f, self.unary())
        return f

    def interval(self) -> Interval:
        if not self.peek("[", "("):
            return Interval()
        pos = self.tok.pos
        self.i += 1
        lo = self.number()
        self.take(",")
        hi = self.number()
        if not self.peek("]", ")"):
            raise FormulaSyntaxError("expected ']' or ')'", self.tok.pos, self.text)
        self.i += 1
        try:
            return Interval(lo, hi)
        except ValueError as e:
            raise FormulaSyntaxError(str(e), pos, self.text) from None

    def unary(self) -> Formula:
        t = self.tok
        if self.peek("!"):
            self.i += 1
            return Not(self.unary())
        if self.peek("alw", "ev"):
            self.i += 1
            iv = self.interval()
            arg = self.unary()
            return Always(iv, arg) if t.text == "alw" else Eventually(iv, arg)
        if self.peek("true"):
            self.i += 1
            return TrueF()
        if self.peek("false"):
            self.i += 1
            return Not(TrueF())
        if self.peek("step"):
            self.i += 1
            self.take("(")
            name = self.tok
            if name.kind != "name":
                raise FormulaSyntaxError("expected a channel name", name.pos, self.text)
            self.i += 1
            self._check_channel(name)
            thr = 0.0
            if self.peek(","):
                self.i += 1
                thr = self.number()
            self.take(")")
            return Step(name.text, thr)
        if self.peek("("):
            # either a parenthesised formula or the start of an arithmetic term
            save = self.i
            first = None
            try:
                self.i += 1
                f = self.implies()
                self.take(")")
                if not self.peek("<", "<=", ">", ">=", "+", "-", "*", "/"):
                    return f
            except FormulaSyntaxError as e:
                first = e
            self.i = save
            try:
                return self.comparison()
            except FormulaSyntaxError as e:
                # report whichever reading got further into the text
                if first is not None and first.pos > e.pos:
                    raise first from None
                raise
        return self.comparison()

    def comparison(self) -> Formula:
        left = self.expr()
        if not self.peek("<", "<=", ">", ">="):
            raise FormulaSyntaxError("expected a comparison", self.tok.pos, self.text)
        op = self.tok.text
        self.i += 1
        right = self.expr()
        if op in ("<", "<="):
            e = _simplify_sub(right, left)
        else:
            e = _simplify_sub(left, right)
        return Atom(e)

    # expressions
    def expr(self) -> Expr:
        e = self.term()
        while self.peek("+", "-"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek("*", "/"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        t = self.tok
        if self.peek("-"):
            self.i += 1
            return Neg(self.factor())
        if t.kind == "num":
            self.i += 1
            return Const(float(t.text))
        if t.kind == "name":
            self.i += 1
            self._check_channel(t)
            return Var(t.text)
        if self.peek("abs"):
            self.i += 1
            self.take("(")
            e = self.expr()
            self.take(")")
            return Abs(e)
        if self.peek("("):
            self.i += 1
            e = self.expr()
            self.take(")")
            return e
        raise FormulaSyntaxError("expected an expression", t.pos, self.text)

    def _check_channel(self, t: _Tok):
        if self.channels is not None and t.text not in self.channels:
            raise UnknownChannelError(f"unknown channel {t.text!r} at position {t.pos}")


def _simplify_sub(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return BinOp("-", a, b)


def parse_formula(text: str, channels: Iterable[str] | None = None) -> Formula:
    """Parse ``text`` into a formula AST.

    If ``channels`` is given, references to any other channel raise
    :class:`UnknownChannelError`.
    """
    return _Parser(text, set(channels) if channels is not None else None).parse()


def load_formula(path, channels: Iterable[str] | None = None) -> Formula:
    """Read a formula file; ``#`` starts a comment, lines are joined."""
    from pathlib import Path

    lines = [ln.split("#", 1)[0] for ln in Path(path).read_text().splitlines()]
    return parse_formula(" ".join(lines), channels)
