"""Reference interpreters: simplified multicounter machines and LTL with counting."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

from .core import AhatError


class BaselineError(AhatError, ValueError):
    pass


# Simplified multicounter machines

INC, DEC, RESET, KEEP = "+1", "-1", "*0", "*1"
UPDATES = (INC, DEC, RESET, KEEP)


def mask(x: Sequence[int]) -> tuple:
    return tuple(0 if v == 0 else 1 for v in x)


def _apply_update(ops: Sequence[str], x: Sequence[int]) -> tuple:
    out = []
    for op, v in zip(ops, x):
        if op == INC:
            out.append(v + 1)
        elif op == DEC:
            out.append(v - 1)
        elif op == RESET:
            out.append(0)
        else:
            out.append(v)
    return tuple(out)


@dataclass(frozen=True)
class Smcm:
    """Deterministic machine whose transitions see only which counters are zero.

    ``delta`` maps ``(state, letter, mask)`` to a state; ``updates`` maps a
    letter to one operation per counter; ``accepting`` holds
    ``(state, mask)`` pairs.
    """

    states: tuple
    alphabet: tuple
    initial: str
    delta: Mapping
    updates: Mapping
    accepting: frozenset
    dim: int

    def __post_init__(self):
        if self.initial not in self.states:
            raise BaselineError(f"initial state {self.initial!r} is not a state")
        for a in self.alphabet:
            ops = self.updates.get(a)
            if ops is None or len(ops) != self.dim or any(op not in UPDATES for op in ops):
                raise BaselineError(f"bad counter update for letter {a!r}")
        for (p, a, m), q in self.delta.items():
            if p not in self.states or q not in self.states or a not in self.alphabet:
                raise BaselineError(f"transition {(p, a, m)} -> {q} uses unknown names")
            if len(m) != self.dim or any(b not in (0, 1) for b in m):
                raise BaselineError(f"bad mask {m}")


def run_smcm(machine: Smcm, word: Sequence[str]) -> bool:
    state, x = machine.initial, (0,) * machine.dim
    for a in word:
        if a not in machine.alphabet:
            raise BaselineError(f"letter {a!r} not in alphabet")
        key = (state, a, mask(x))
        if key not in machine.delta:
            raise BaselineError(f"no transition for state {state!r}, letter {a!r}, mask {mask(x)}")
        state = machine.delta[key]
        x = _apply_update(machine.updates[a], x)
    return (state, mask(x)) in machine.accepting


def _mask_text(m) -> str:
    return "".join(str(b) for b in m)


def _mask_parse(s: str, dim: int) -> tuple:
    if not re.fullmatch(r"[01]*", s) or len(s) != dim:
        raise BaselineError(f"bad mask {s!r}")
    return tuple(int(c) for c in s)


def smcm_to_dict(machine: Smcm) -> dict:
    return {
        "states": list(machine.states),
        "alphabet": list(machine.alphabet),
        "initial": machine.initial,
        "dim": machine.dim,
        "updates": {a: list(machine.updates[a]) for a in machine.alphabet},
        "delta": [[p, a, _mask_text(m), q] for (p, a, m), q in sorted(machine.delta.items())],
        "accepting": [[q, _mask_text(m)] for q, m in sorted(machine.accepting)],
    }


def smcm_from_dict(data: dict) -> Smcm:
    try:
        dim = int(data["dim"])
        delta = {}
        for p, a, m, q in data["delta"]:
            key = (p, a, _mask_parse(m, dim))
            if key in delta and delta[key] != q:
                raise BaselineError(f"conflicting transitions for {key}")
            delta[key] = q
        return Smcm(
            states=tuple(data["states"]),
            alphabet=tuple(data["alphabet"]),
            initial=data["initial"],
            delta=delta,
            updates={a: tuple(ops) for a, ops in data["updates"].items()},
            accepting=frozenset((q, _mask_parse(m, dim)) for q, m in data["accepting"]),
            dim=dim,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, BaselineError):
            raise
        raise BaselineError(f"malformed machine description: {exc}") from None


def load_smcm(text: str) -> Smcm:
    return smcm_from_dict(json.loads(text))


def _total(states, alphabet, dim, rules: dict, sink: str) -> dict:
    """Fill every missing ``(state, letter, mask)`` with the sink state.

    ``rules`` keys may use ``None`` in a mask position as a wildcard.
    """
    delta = {}
    for (p, a, pattern), q in rules.items():
        for m in product((0, 1), repeat=dim):
            if all(c is None or c == b for c, b in zip(pattern, m)):
                delta[(p, a, m)] = q
    for p in states:
        for a in alphabet:
            for m in product((0, 1), repeat=dim):
                delta.setdefault((p, a, m), sink)
    return delta


def equal_counts_machine() -> Smcm:
    """One counter, up on ``a`` and down on ``b``; accepts when it ends at zero."""
    states, alphabet = ("q",), ("a", "b")
    delta = _total(states, alphabet, 1, {("q", "a", (None,)): "q", ("q", "b", (None,)): "q"}, "q")
    return Smcm(states, alphabet, "q", delta, {"a": (INC,), "b": (DEC,)}, frozenset({("q", (0,))}), 1)


def non_semilinear_machine() -> Smcm:
    """Accepts ``a^n ((bc)^n (de)^n)^m f^n`` for ``n, m >= 2``.

    Counter 1 holds ``n`` after the ``a`` block; each ``bc`` pair moves one
    unit to counter 2 and each ``de`` pair moves it back. Zero tests on the
    masks enforce the block boundaries.
    """
    alphabet = tuple("abcdef")
    states = ("q0", "a1", "a2", "C1", "Bn1", "E1", "Dn1", "C2", "Bn2", "E2", "Dn2", "F", "dead")
    X = None
    rules = {
        ("q0", "a", (X, X)): "a1",
        ("a1", "a", (X, X)): "a2",
        ("a2", "a", (X, X)): "a2",
        ("a2", "b", (1, X)): "C1",
        ("Dn2", "f", (1, 0)): "F",
        ("F", "f", (1, X)): "F",
    }
    for r in ("1", "2"):
        rules.update(
            {
                (f"C{r}", "c", (X, X)): f"Bn{r}",
                (f"Bn{r}", "b", (1, X)): f"C{r}",
                (f"Bn{r}", "d", (0, 1)): f"E{r}",
                (f"E{r}", "e", (X, X)): f"Dn{r}",
                (f"Dn{r}", "d", (X, 1)): f"E{r}",
                (f"Dn{r}", "b", (1, 0)): "C2",
            }
        )
    delta = _total(states, alphabet, 2, rules, "dead")
    updates = {
        "a": (INC, KEEP),
        "b": (DEC, KEEP),
        "c": (KEEP, INC),
        "d": (KEEP, DEC),
        "e": (INC, KEEP),
        "f": (DEC, KEEP),
    }
    return Smcm(states, alphabet, "q0", delta, updates, frozenset({("F", (0, 0))}), 2)


def non_semilinear_word(n: int, m: int) -> str:
    return "a" * n + ("bc" * n + "de" * n) * m + "f" * n


# LTL with counting


@dataclass(frozen=True)
class Letter:
    name: str


@dataclass(frozen=True)
class LNot:
    arg: object


@dataclass(frozen=True)
class LOr:
    left: object
    right: object


@dataclass(frozen=True)
class Next:
    arg: object


@dataclass(frozen=True)
class Until:
    left: object
    right: object


@dataclass(frozen=True)
class CountTerm:
    """``const + sum(k * count)`` where each count is ``(k, direction, formula)``.

    Direction ``"<-"`` counts strictly earlier positions, ``"->"`` counts the
    current position and everything after it.
    """

    const: int
    counts: tuple = ()


@dataclass(frozen=True)
class Leq:
    left: CountTerm
    right: CountTerm


def l_and(a, b):
    return LNot(LOr(LNot(a), LNot(b)))


LTRUE = Leq(CountTerm(0), CountTerm(0))
LFALSE = LNot(LTRUE)


def _truth(f, word: Sequence[str], memo: dict) -> list:
    hit = memo.get(f)
    if hit is not None:
        return hit
    n = len(word)
    if isinstance(f, Letter):
        out = [a == f.name for a in word]
    elif isinstance(f, LNot):
        out = [not x for x in _truth(f.arg, word, memo)]
    elif isinstance(f, LOr):
        left, right = _truth(f.left, word, memo), _truth(f.right, word, memo)
        out = [x or y for x, y in zip(left, right)]
    elif isinstance(f, Next):
        arg = _truth(f.arg, word, memo)
        out = [arg[i + 1] if i + 1 < n else False for i in range(n)]
    elif isinstance(f, Until):
        left, right = _truth(f.left, word, memo), _truth(f.right, word, memo)
        out = [False] * n
        nxt = False
        for i in range(n - 1, -1, -1):
            nxt = right[i] or (left[i] and nxt)
            out[i] = nxt
    elif isinstance(f, Leq):
        lv, rv = _term_values(f.left, word, memo), _term_values(f.right, word, memo)
        out = [x <= y for x, y in zip(lv, rv)]
    else:
        raise BaselineError(f"not an LTL formula node: {f!r}")
    memo[f] = out
    return out


def _term_values(t: CountTerm, word, memo) -> list:
    n = len(word)
    vals = [t.const] * n
    for k, direction, g in t.counts:
        truth = _truth(g, word, memo)
        if direction == "<-":
            seen = 0
            for i in range(n):
                vals[i] += k * seen
                seen += truth[i]
        else:
            seen = 0
            for i in range(n - 1, -1, -1):
                seen += truth[i]
                vals[i] += k * seen
    return vals


def eval_ltl_count(f, word: Sequence[str], position: int) -> bool:
    """Truth of ``f`` at ``position`` (1-based) of ``word``."""
    if not 1 <= position <= len(word):
        raise BaselineError(f"position {position} outside 1..{len(word)}")
    return _truth(f, list(word), {})[position - 1]


def ltl_truth_vector(f, word: Sequence[str]) -> list:
    return list(_truth(f, list(word), {}))


def ltl_count_membership(f, word: Sequence[str]) -> bool:
    """A word belongs to the language when the formula holds at its first position."""
    if not word:
        raise BaselineError("the empty word has no first position")
    return eval_ltl_count(f, word, 1)


_LTL_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<count><-#|->#)|(?P<op><=|>=|[<>=()!|&+\-*])|(?P<kw>\b(?:X|U|true|false)\b)|(?P<name>[a-z][a-z0-9_]*))"
)


class _LtlParser:
    """Grammar::

        formula := conj ('|' conj)*
        conj    := until ('&' until)*
        until   := unary ('U' until)?
        unary   := '!' unary | 'X' unary | 'true' | 'false' | letter
                 | term rel term | '(' formula ')'
        term    := summand (('+' | '-') summand)*
        summand := INT ['*' count] | count
        count   := ('<-#' | '->#') (letter | '(' formula ')')
    """

    def __init__(self, text: str, alphabet: Sequence[str] | None):
        self.toks = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _LTL_TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise BaselineError(f"unexpected character at offset {pos}: {text[pos]!r}")
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.toks.append(("eof", "", len(text)))
        self.i = 0
        self.alphabet = tuple(alphabet) if alphabet is not None else None

    def peek(self, *texts) -> bool:
        kind, text, _ = self.toks[self.i]
        return kind in ("op", "kw", "count") and text in texts

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        if not self.peek(text):
            self.fail(f"expected {text!r}")
        return self.take()

    def fail(self, msg):
        _, text, pos = self.toks[self.i]
        raise BaselineError(f"offset {pos}: {msg}, found {text or 'end of input'!r}")

    def formula(self):
        f = self.conj()
        while self.peek("|"):
            self.take()
            f = LOr(f, self.conj())
        return f

    def conj(self):
        f = self.until()
        while self.peek("&"):
            self.take()
            f = l_and(f, self.until())
        return f

    def until(self):
        f = self.unary()
        if self.peek("U"):
            self.take()
            return Until(f, self.until())
        return f

    def letter(self):
        kind, text, _ = self.toks[self.i]
        if kind != "name":
            self.fail("expected a letter")
        if self.alphabet is not None and text not in self.alphabet:
            self.fail(f"unknown letter {text!r}")
        self.take()
        return Letter(text)

    def unary(self):
        if self.peek("!"):
            self.take()
            return LNot(self.unary())
        if self.peek("X"):
            self.take()
            return Next(self.unary())
        if self.peek("true"):
            self.take()
            return LTRUE
        if self.peek("false"):
            self.take()
            return LFALSE
        if self.peek("("):
            self.take()
            f = self.formula()
            self.expect(")")
            return f
        kind = self.toks[self.i][0]
        if kind == "name":
            return self.letter()
        left = self.term()
        if not self.peek("<=", "<", ">=", ">", "="):
            self.fail("expected a comparison")
        rel = self.take()[1]
        right = self.term()
        return _compare(left, rel, right)

    def term(self):
        const, counts = 0, []
        sign = 1
        if self.peek("-"):
            self.take()
            sign = -1
        while True:
            c, cnt = self.summand()
            const += sign * c
            counts += [(sign * k, d, g) for k, d, g in cnt]
            if self.peek("+", "-"):
                sign = 1 if self.take()[1] == "+" else -1
            else:
                return CountTerm(const, tuple(counts))

    def summand(self):
        kind, text, _ = self.toks[self.i]
        if kind == "num":
            self.take()
            k = int(text)
            if self.peek("*"):
                self.take()
                return 0, [self.count(k)]
            return k, []
        if kind == "count":
            return 0, [self.count(1)]
        self.fail("expected a number or a count")

    def count(self, k):
        kind, text, _ = self.toks[self.i]
        if kind != "count":
            self.fail("expected <-# or ->#")
        self.take()
        if self.peek("("):
            self.take()
            g = self.formula()
            self.expect(")")
        else:
            g = self.letter()
        return (k, text[:2], g)


def _shift(t: CountTerm, c: int) -> CountTerm:
    return CountTerm(t.const + c, t.counts)


def _compare(left: CountTerm, rel: str, right: CountTerm):
    if rel == "<=":
        return Leq(left, right)
    if rel == ">=":
        return Leq(right, left)
    if rel == "<":
        return Leq(_shift(left, 1), right)
    if rel == ">":
        return Leq(_shift(right, 1), left)
    return l_and(Leq(left, right), Leq(right, left))


def parse_ltl_count(text: str, alphabet: Sequence[str] | None = None):
    """Parse a formula; an optional ``alphabet:`` header line fixes the letters."""
    lines = [ln for ln in text.split("\n") if not ln.strip().startswith("#")]
    body = "\n".join(lines).strip()
    if body.startswith("alphabet:"):
        head, _, body = body.partition("\n")
        letters = tuple(a.strip() for a in head[len("alphabet:"):].split(",") if a.strip())
        if alphabet is not None and tuple(alphabet) != letters:
            raise BaselineError("header alphabet differs from the given one")
        alphabet = letters
    p = _LtlParser(body, alphabet)
    f = p.formula()
    if p.toks[p.i][0] != "eof":
        p.fail("unexpected trailing input")
    return f, (tuple(alphabet) if alphabet is not None else None)


def format_ltl(f) -> str:
    if isinstance(f, Letter):
        return f.name
    if isinstance(f, LNot):
        return "!" + _ltl_group(f.arg)
    if isinstance(f, LOr):
        return f"{_ltl_group(f.left)} | {_ltl_group(f.right)}"
    if isinstance(f, Next):
        return "X " + _ltl_group(f.arg)
    if isinstance(f, Until):
        return f"{_ltl_group(f.left)} U {_ltl_group(f.right)}"
    if isinstance(f, Leq):
        return f"{_fmt_term(f.left)} <= {_fmt_term(f.right)}"
    raise BaselineError(f"not an LTL formula node: {f!r}")


def _ltl_group(f) -> str:
    if isinstance(f, Letter):
        return f.name
    return "(" + format_ltl(f) + ")"


def _fmt_term(t: CountTerm) -> str:
    parts = []
    for k, direction, g in t.counts:
        body = f"{direction}#{_ltl_group(g)}"
        parts.append(body if k == 1 else f"{k}*{body}" if k >= 0 else f"- {-k}*{body}" if k != -1 else f"- {body}")
    out = ""
    for p in parts:
        if not out:
            out = p if not p.startswith("- ") else "-" + p[2:]
        else:
            out += " " + (p if p.startswith("- ") else "+ " + p)
    if t.const or not out:
        if not out:
            out = str(t.const)
        else:
            out += f" + {t.const}" if t.const > 0 else f" - {-t.const}"
    return out
