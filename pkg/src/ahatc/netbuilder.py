"""Build feed-forward nets from symbolic ReLU circuits.

Write the computation with :class:`Expr` values (affine combinations of
inputs and ReLU nodes) and call :meth:`NetBuilder.build`. Nodes are layered
by depth. A value needed past the layer that produced it is carried through
the intermediate ReLU layers, directly when known to be nonnegative and as
the pair ``(relu(z), relu(-z))`` otherwise.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .core import IDENTITY, RELU, ZERO, AffineMap, FeedForwardNet, rat


class Expr:
    """Affine combination ``const + sum(coef * item)``.

    Items are ``("in", i)`` for inputs and ``("relu", j)`` for nodes.
    """

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict | None = None, const=ZERO):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}
        self.const = rat(const)

    @classmethod
    def lift(cls, x) -> "Expr":
        return x if isinstance(x, Expr) else cls({}, x)

    def __add__(self, other):
        other = Expr.lift(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, ZERO) + v
        return Expr(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Expr({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-Expr.lift(other))

    def __rsub__(self, other):
        return Expr.lift(other) - self

    def __mul__(self, c):
        c = rat(c)
        return Expr({k: v * c for k, v in self.terms.items()}, self.const * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1 / rat(c))


def total(exprs: Iterable) -> Expr:
    out = Expr()
    for e in exprs:
        out = out + e
    return out


class NetBuilder:
    def __init__(self, n_inputs: int, nonneg: Iterable[int] = ()):
        self.n_inputs = n_inputs
        self.nonneg_inputs = set(nonneg)
        self.nodes: list = []  # (arg Expr, level)

    def input(self, i: int) -> Expr:
        if not 0 <= i < self.n_inputs:
            raise IndexError(f"input {i} out of range")
        return Expr({("in", i): 1})

    def inputs(self, start: int = 0, stop: int | None = None) -> list:
        stop = self.n_inputs if stop is None else stop
        return [self.input(i) for i in range(start, stop)]

    def _level(self, item) -> int:
        return 0 if item[0] == "in" else self.nodes[item[1]][1]

    def _nonneg_item(self, item) -> bool:
        return item[0] == "relu" or item[1] in self.nonneg_inputs

    def is_nonneg(self, e: Expr) -> bool:
        return e.const >= 0 and all(v > 0 and self._nonneg_item(k) for k, v in e.terms.items())

    def is_nonpos(self, e: Expr) -> bool:
        return e.const <= 0 and all(v < 0 and self._nonneg_item(k) for k, v in e.terms.items())

    def relu(self, e) -> Expr:
        e = Expr.lift(e)
        if self.is_nonneg(e):
            return e
        if self.is_nonpos(e):
            return Expr()
        level = 1 + max((self._level(k) for k in e.terms), default=0)
        self.nodes.append((e, level))
        return Expr({("relu", len(self.nodes) - 1): 1})

    def min(self, x, y) -> Expr:
        """``min(x, y) = y - relu(y - x)``."""
        y = Expr.lift(y)
        return y - self.relu(y - Expr.lift(x))

    def abs(self, z) -> Expr:
        z = Expr.lift(z)
        return self.relu(z) + self.relu(-z)

    def build(self, outputs: Sequence, final_relu: bool = False) -> FeedForwardNet:
        """Net computing ``outputs`` (ReLU applied at the end if ``final_relu``)."""
        outputs = [Expr.lift(o) for o in outputs]
        if final_relu:
            outputs = [self.relu(o) for o in outputs]
        # reachable nodes
        used: set = set()
        stack = [k for o in outputs for k in o.terms if k[0] == "relu"]
        while stack:
            k = stack.pop()
            if k in used:
                continue
            used.add(k)
            stack.extend(x for x in self.nodes[k[1]][0].terms if x[0] == "relu")
        height = max((self.nodes[k[1]][1] for k in used), default=0)
        n = self.n_inputs
        if height == 0:
            return FeedForwardNet(((self._affine(outputs, None, n), IDENTITY),))

        # last layer each item must be present in (as output of that layer)
        last_needed: dict = {}

        def need(item, upto):
            if last_needed.get(item, -1) < upto:
                last_needed[item] = upto

        for k in used:
            arg, level = self.nodes[k[1]]
            for item in arg.terms:
                need(item, level - 1)
        for o in outputs:
            for item in o.terms:
                need(item, height)

        direct = all(
            len(o.terms) == 1 and o.const == 0 and next(iter(o.terms.values())) == 1
            and next(iter(o.terms))[0] == "relu" and self.nodes[next(iter(o.terms))[1]][1] == height
            for o in outputs
        ) and all(last_needed[item] < height or item[0] == "relu" and self.nodes[item[1]][1] == height
                  for item in last_needed)

        layers = []
        prev_slots = None  # None means raw inputs
        for h in range(1, height + 1):
            slots = []  # (item, sign)
            if h == height and direct:
                for o in outputs:
                    slots.append((next(iter(o.terms)), 1))
            else:
                for i in range(n):
                    item = ("in", i)
                    if last_needed.get(item, -1) >= h:
                        slots.append((item, 1))
                        if not self._nonneg_item(item):
                            slots.append((item, -1))
                for j, (_, level) in enumerate(self.nodes):
                    item = ("relu", j)
                    if item in used and level <= h and last_needed.get(item, -1) >= h:
                        slots.append((item, 1))
            rows, offset = [], []
            for item, sign in slots:
                if item[0] == "relu" and self.nodes[item[1]][1] == h:
                    src = self.nodes[item[1]][0]
                else:
                    src = Expr({item: 1})
                if sign < 0:
                    src = -src
                row, const = self._row(src, prev_slots)
                rows.append(row)
                offset.append(const)
            in_dim = n if prev_slots is None else len(prev_slots)
            layers.append((AffineMap.from_sparse(rows, offset, in_dim), RELU))
            prev_slots = slots
        if not direct:
            layers.append((self._affine(outputs, prev_slots, len(prev_slots)), IDENTITY))
        return FeedForwardNet(tuple(layers))

    def _row(self, e: Expr, slots) -> tuple:
        row: dict = {}
        if slots is None:
            for item, c in e.terms.items():
                assert item[0] == "in"
                row[item[1]] = row.get(item[1], ZERO) + c
            return row, e.const
        index = {s: i for i, s in enumerate(slots)}
        for item, c in e.terms.items():
            pos = index[(item, 1)]
            row[pos] = row.get(pos, ZERO) + c
            neg = index.get((item, -1))
            if neg is not None:
                row[neg] = row.get(neg, ZERO) - c
        return row, e.const

    def _affine(self, outputs, slots, in_dim) -> AffineMap:
        rows, offset = [], []
        for o in outputs:
            row, const = self._row(o, slots)
            rows.append(row)
            offset.append(const)
        return AffineMap.from_sparse(rows, offset, in_dim)


def embed_net(builder: NetBuilder, net: FeedForwardNet, inputs: Sequence[Expr]) -> list:
    """Express an existing net symbolically on top of ``inputs``."""
    vals = list(inputs)
    for m, act in net.layers:
        new = []
        for row, b in zip(m.rows, m.offset):
            e = Expr({}, b)
            for c, v in row:
                e = e + vals[c] * v
            new.append(builder.relu(e) if act == RELU else e)
        vals = new
    return vals
