"""Text syntax for polynomials and formulas.

::

    alphabet: a,b
    # comment
    (x_a + x_b)^2 - 2*x_a^2 > 0 & !(x_a = 0)

Disjunction ``|`` binds weaker than conjunction ``&``; ``!`` negates the
next literal. ``true`` and ``false`` are accepted as literals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .core import rat
from .formulas import (
    And,
    Atom,
    FormulaError,
    LinearInequality,
    Not,
    Or,
    conj,
    disj,
    to_qfpa,
)
from .polynomial import Polynomial, format_polynomial


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+)
  | (?P<var>x_[A-Za-z0-9_$@]+)
  | (?P<kw>true|false)\b
  | (?P<op>>=|<=|==|!=|[><=+\-*^/()&|!])
    """,
    re.VERBOSE,
)


def tokenize(text: str, first_line: int = 1) -> list:
    tokens = []
    line, col_start, pos = first_line, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - col_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            col_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - col_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - col_start + 1))
    return tokens


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list, variables: Sequence[str] | None):
        self.toks = tokens
        self.i = 0
        self.variables = tuple(variables) if variables is not None else None

    # token helpers
    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def at(self, *texts) -> bool:
        return self.cur.kind in ("op", "kw") and self.cur.text in texts

    def take(self) -> Token:
        t = self.cur
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.cur.text or 'end of input'!r}")
        return self.take()

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.cur
        raise FormulaSyntaxError(msg, tok.line, tok.column)

    # polynomials
    def var_index(self, tok: Token) -> int:
        name = tok.text[2:]
        if self.variables is None:
            self.error("no alphabet declared", tok)
        if name not in self.variables:
            self.error(f"unknown variable {tok.text!r} (alphabet {','.join(self.variables)})", tok)
        return self.variables.index(name)

    def poly(self) -> Polynomial:
        neg = False
        if self.at("+", "-"):
            neg = self.take().text == "-"
        p = self.term()
        if neg:
            p = -p
        while self.at("+", "-"):
            op = self.take().text
            t = self.term()
            p = p + t if op == "+" else p - t
        return p

    def term(self) -> Polynomial:
        p = self.factor()
        while True:
            if self.at("*"):
                self.take()
                p = p * self.factor()
            elif self.cur.kind in ("num", "var") or self.at("("):
                p = p * self.factor()
            else:
                return p

    def factor(self) -> Polynomial:
        base = self.base()
        if self.at("^"):
            self.take()
            tok = self.cur
            if tok.kind != "num":
                self.error("exponent must be a natural number")
            self.take()
            base = base ** int(tok.text)
        return base

    def base(self) -> Polynomial:
        tok = self.cur
        vs = self.variables or ()
        if tok.kind == "num":
            self.take()
            value = rat(int(tok.text))
            if self.at("/"):
                self.take()
                den = self.cur
                if den.kind != "num" or int(den.text) == 0:
                    self.error("denominator must be a positive integer")
                self.take()
                value = value / int(den.text)
            return Polynomial.constant(vs, value)
        if tok.kind == "var":
            self.take()
            e = [0] * len(vs)
            e[self.var_index(tok)] = 1
            return Polynomial(vs, {tuple(e): 1})
        if self.at("("):
            self.take()
            p = self.poly()
            if not self.at(")"):
                raise _Backtrack
            self.take()
            return p
        self.error(f"expected a polynomial, found {tok.text or 'end of input'!r}")

    # formulas
    def formula(self):
        parts = [self.conj()]
        while self.at("|"):
            self.take()
            parts.append(self.conj())
        return disj(*parts)

    def conj(self):
        parts = [self.lit()]
        while self.at("&"):
            self.take()
            parts.append(self.lit())
        return conj(*parts)

    def lit(self):
        if self.at("!"):
            self.take()
            return Not(self.lit())
        if self.at("true"):
            self.take()
            return And(())
        if self.at("false"):
            self.take()
            return Or(())
        start = self.i
        try:
            return self.atom()
        except (_Backtrack, FormulaSyntaxError) as exc:
            if not self.toks[start].text == "(":
                if isinstance(exc, _Backtrack):
                    self.error("unbalanced parenthesis")
                raise
            self.i = start
        self.expect("(")
        f = self.formula()
        self.expect(")")
        return f

    def atom(self) -> Atom:
        lhs = self.poly()
        tok = self.cur
        if tok.kind != "op" or tok.text not in (">", "<", ">=", "<=", "="):
            if tok.kind == "op" and tok.text in ("==", "!="):
                self.error(f"unsupported relation {tok.text!r}")
            self.error(f"expected a relation, found {tok.text or 'end of input'!r}")
        self.take()
        rhs = self.poly()
        return Atom(lhs - rhs, tok.text)

    def finish(self):
        if self.cur.kind != "eof":
            self.error(f"unexpected {self.cur.text!r}")


def split_header(text: str) -> tuple:
    """Strip an ``alphabet:`` header. Returns (alphabet or None, body, body line offset)."""
    lines = text.split("\n")
    for idx, raw in enumerate(lines):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("alphabet:"):
            letters = [a.strip() for a in s[len("alphabet:"):].split(",") if a.strip()]
            if not letters:
                raise FormulaSyntaxError("empty alphabet", idx + 1, 1)
            if len(set(letters)) != len(letters):
                raise FormulaSyntaxError("repeated letter in alphabet", idx + 1, 1)
            for a in letters:
                if not re.fullmatch(r"[A-Za-z0-9_$@]+", a):
                    raise FormulaSyntaxError(f"bad letter name {a!r}", idx + 1, 1)
            return tuple(letters), "\n".join(lines[idx + 1:]), idx + 2
        break
    return None, text, 1


def _alphabet(text: str, alphabet) -> tuple:
    header, body, first = split_header(text)
    if alphabet is not None and header is not None and tuple(alphabet) != header:
        raise FormulaSyntaxError(f"header alphabet {header} differs from {tuple(alphabet)}", 1, 1)
    return (tuple(alphabet) if alphabet is not None else header), body, first


def parse_polynomial(text: str, alphabet: Sequence[str] | None = None) -> Polynomial:
    alpha, body, first = _alphabet(text, alphabet)
    p = _Parser(tokenize(body, first), alpha)
    try:
        out = p.poly()
    except _Backtrack:
        p.error("unbalanced parenthesis")
    p.finish()
    return out


def parse_semialg(text: str, alphabet: Sequence[str] | None = None):
    """Formula with polynomial atoms ``poly rel poly`` stored as ``(lhs - rhs) rel 0``."""
    alpha, body, first = _alphabet(text, alphabet)
    p = _Parser(tokenize(body, first), alpha)
    f = p.formula()
    p.finish()
    return f


def parse_qfpa(text: str, alphabet: Sequence[str] | None = None):
    """Linear formula in negation normal form over ``c . x <= b`` atoms."""
    f = parse_semialg(text, alphabet)
    return to_qfpa(f)


def parse_alphabet(text: str) -> tuple | None:
    return split_header(text)[0]


# printing


def _fmt_rat(q) -> str:
    q = rat(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def format_atom(a) -> str:
    if isinstance(a, Atom):
        return f"{format_polynomial(a.poly)} {a.rel} 0"
    if isinstance(a, LinearInequality):
        return f"{format_polynomial(a.as_polynomial())} <= {_fmt_rat(a.bound)}"
    raise FormulaError(f"not an atom: {a!r}")


def format_formula(f) -> str:
    if isinstance(f, Or):
        if not f.args:
            return "false"
        return " | ".join(_fmt_conj_level(a) for a in f.args)
    return _fmt_conj_level(f)


def _fmt_conj_level(f) -> str:
    if isinstance(f, And):
        if not f.args:
            return "true"
        return " & ".join(_fmt_lit(a) for a in f.args)
    return _fmt_lit(f)


def _fmt_lit(f) -> str:
    if isinstance(f, Not):
        return "!" + _fmt_group(f.arg)
    if isinstance(f, And) and not f.args:
        return "true"
    if isinstance(f, Or) and not f.args:
        return "false"
    if isinstance(f, (And, Or)):
        return "(" + format_formula(f) + ")"
    return format_atom(f)


def _fmt_group(f) -> str:
    if isinstance(f, Not):
        return _fmt_lit(f)
    if isinstance(f, (And, Or)) and not f.args:
        return _fmt_lit(f)
    return "(" + format_formula(f) + ")"


def format_file(f, alphabet: Sequence[str]) -> str:
    return f"alphabet: {','.join(alphabet)}\n{format_formula(f)}\n"
