"""Sparse multivariate polynomials with exact coefficients."""

from __future__ import annotations

from math import gcd, lcm
from typing import Iterable, Mapping, Sequence

from .core import Rational, rat


def _norm_coef(c):
    """Integers stay ints; other rationals become mpq."""
    if isinstance(c, int):
        return c
    c = rat(c)
    if c.denominator == 1:
        return int(c.numerator)
    return c


class Polynomial:
    """A polynomial over named variables.

    ``terms`` maps exponent tuples (one entry per variable) to nonzero
    coefficients. Integer coefficients are kept as ``int``.
    """

    __slots__ = ("variables", "terms", "_hash")

    def __init__(self, variables: Sequence[str], terms: Mapping[tuple, object] | None = None):
        self.variables = tuple(variables)
        if len(set(self.variables)) != len(self.variables):
            raise ValueError(f"duplicate variables in {self.variables}")
        clean = {}
        m = len(self.variables)
        for e, c in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != m or any(x < 0 for x in e):
                raise ValueError(f"bad exponent vector {e} for variables {self.variables}")
            c = _norm_coef(c)
            if c != 0:
                clean[e] = clean.get(e, 0) + c
                if clean[e] == 0:
                    del clean[e]
        self.terms = clean
        self._hash = None

    # construction helpers
    @classmethod
    def constant(cls, variables: Sequence[str], c) -> "Polynomial":
        return cls(variables, {(0,) * len(variables): c})

    @classmethod
    def var(cls, variables: Sequence[str], name: str) -> "Polynomial":
        variables = tuple(variables)
        e = [0] * len(variables)
        e[variables.index(name)] = 1
        return cls(variables, {tuple(e): 1})

    @classmethod
    def from_linear(cls, variables: Sequence[str], coeffs: Sequence, const=0) -> "Polynomial":
        m = len(variables)
        terms = {(0,) * m: const}
        for i, c in enumerate(coeffs):
            e = [0] * m
            e[i] = 1
            terms[tuple(e)] = c
        return cls(variables, terms)

    # basic properties
    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.variables == other.variables and self.terms == other.terms
        if isinstance(other, (int, Rational)):
            return self.is_constant() and self.constant_term() == other
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.variables, frozenset(self.terms.items())))
        return self._hash

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def constant_term(self):
        return self.terms.get((0,) * len(self.variables), 0)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def degree_in(self, i: int) -> int:
        return max((e[i] for e in self.terms), default=0)

    def is_homogeneous(self) -> bool:
        return len({sum(e) for e in self.terms}) <= 1

    def is_integral(self) -> bool:
        return all(isinstance(c, int) for c in self.terms.values())

    def sorted_terms(self) -> list:
        """Terms in graded order: higher total degree first, then exponent tuples descending."""
        return sorted(self.terms.items(), key=lambda t: (-sum(t[0]), tuple(-x for x in t[0])))

    def used_variables(self) -> set:
        return {self.variables[i] for e in self.terms for i, x in enumerate(e) if x}

    # arithmetic
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.variables != self.variables:
                raise ValueError(f"variable lists differ: {self.variables} vs {other.variables}")
            return other
        return Polynomial.constant(self.variables, other)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return Polynomial(self.variables, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = _norm_coef(other)
            return Polynomial(self.variables, {e: k * c for e, k in self.terms.items()})
        other = self._coerce(other)
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return Polynomial(self.variables, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self.variables, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # evaluation and rewriting
    def __call__(self, point: Sequence):
        if len(point) != len(self.variables):
            raise ValueError(f"expected {len(self.variables)} values, got {len(point)}")
        total = 0
        for e, c in self.terms.items():
            t = c
            for x, k in zip(point, e):
                if k:
                    t = t * x**k
            total = total + t
        return total

    def evaluate(self, assignment: Mapping[str, object]):
        used = self.used_variables()
        return self([assignment[v] if v in used else 0 for v in self.variables])

    def with_variables(self, variables: Sequence[str]) -> "Polynomial":
        """Re-express over a different variable list containing every used variable."""
        variables = tuple(variables)
        pos = {v: i for i, v in enumerate(variables)}
        for v in self.used_variables():
            if v not in pos:
                raise ValueError(f"variable {v!r} is used but missing from {variables}")
        terms = {}
        for e, c in self.terms.items():
            ne = [0] * len(variables)
            for i, k in enumerate(e):
                if k:
                    ne[pos[self.variables[i]]] = k
            terms[tuple(ne)] = c
        return Polynomial(variables, terms)

    def substitute(self, images: Sequence["Polynomial"]) -> "Polynomial":
        """Replace variable ``i`` by ``images[i]`` (all over one common variable list)."""
        if len(images) != len(self.variables):
            raise ValueError("one image per variable is required")
        target = images[0].variables if images else ()
        out = Polynomial(target)
        cache: dict = {}
        for e, c in self.terms.items():
            t = Polynomial.constant(target, c)
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    if key not in cache:
                        cache[key] = images[i] ** k
                    t = t * cache[key]
            out = out + t
        return out

    def content(self) -> int:
        """gcd of integer coefficients (0 for the zero polynomial)."""
        g = 0
        for c in self.terms.values():
            g = gcd(g, int(c))
        return g

    def denominator_lcm(self) -> int:
        d = 1
        for c in self.terms.values():
            if not isinstance(c, int):
                d = lcm(d, int(c.denominator))
        return d

    def primitive(self) -> tuple[int, "Polynomial"]:
        """``(s, q)`` with ``self = s * positive_multiple * q``, ``q`` integral,
        content one and leading coefficient positive, ``s`` in {-1, 0, 1}."""
        if self.is_zero():
            return 0, self
        p = self * self.denominator_lcm() if not self.is_integral() else self
        g = p.content()
        lead = p.sorted_terms()[0][1]
        s = 1 if lead > 0 else -1
        q = Polynomial(p.variables, {e: (c // g) * s for e, c in p.terms.items()})
        return s, q

    def __repr__(self):
        return f"Polynomial({format_polynomial(self)!r})"

    def __str__(self):
        return format_polynomial(self)


def _format_coef(c) -> str:
    if isinstance(c, int):
        return str(c)
    return f"{c.numerator}/{c.denominator}"


def format_polynomial(p: Polynomial) -> str:
    """Render in the formula syntax, e.g. ``x_a^2 - 2*x_a*x_b + 3``."""
    if p.is_zero():
        return "0"
    parts = []
    for e, c in p.sorted_terms():
        factors = []
        for name, k in zip(p.variables, e):
            if k == 1:
                factors.append(f"x_{name}")
            elif k > 1:
                factors.append(f"x_{name}^{k}")
        neg = c < 0
        a = -c if neg else c
        if not factors:
            body = _format_coef(a)
        elif a == 1:
            body = "*".join(factors)
        else:
            body = _format_coef(a) + "*" + "*".join(factors)
        if not parts:
            parts.append(("-" if neg else "") + body)
        else:
            parts.append(("- " if neg else "+ ") + body)
    return " ".join(parts)


def homogenize(p: Polynomial, name: str = "$") -> Polynomial:
    """``X0^d * p(X/X0)`` with ``X0`` (called ``name``) as the first variable."""
    if name in p.variables:
        raise ValueError(f"variable {name!r} already present")
    d = max(p.degree, 0)
    terms = {}
    for e, c in p.terms.items():
        terms[(d - sum(e),) + e] = c
    return Polynomial((name,) + p.variables, terms)


def rationalize_polynomial(p: Polynomial) -> Polynomial:
    """Substitute ``X_i -> y_i/z_i - u_i/v_i`` and clear denominators.

    The result is over variables ``y_i, z_i, u_i, v_i`` for each original
    variable, grouped per variable. Each ``X_i`` appears with denominator
    ``z_i v_i``, so multiplying by ``(z_i v_i)^{deg_i}`` (the degree of
    ``p`` in ``X_i``) makes everything polynomial.
    """
    names = []
    for v in p.variables:
        names += [f"y_{v}", f"z_{v}", f"u_{v}", f"v_{v}"]
    names = tuple(names)
    out = Polynomial(names)
    m = len(p.variables)
    degs = [p.degree_in(i) for i in range(m)]
    for e, c in p.terms.items():
        t = Polynomial.constant(names, c)
        for i in range(m):
            y, z, u, v = (Polynomial.var(names, f"{k}_{p.variables[i]}") for k in "yzuv")
            num = y * v - u * z
            den = z * v
            t = t * num ** e[i] * den ** (degs[i] - e[i])
        out = out + t
    return out


def linear_parts(p: Polynomial) -> tuple[list, object]:
    """Coefficients and constant term of a polynomial of degree at most one."""
    if p.degree > 1:
        raise ValueError(f"{p} is not linear")
    m = len(p.variables)
    coeffs = [0] * m
    for e, c in p.terms.items():
        if any(e):
            coeffs[e.index(1)] = c
    return coeffs, p.constant_term()


def monomial_factors(e: tuple) -> tuple:
    """Variable indices of a monomial with repetition, sorted."""
    out = []
    for i, k in enumerate(e):
        out += [i] * k
    return tuple(out)


def product(polys: Iterable[Polynomial], variables: Sequence[str]) -> Polynomial:
    out = Polynomial.constant(variables, 1)
    for q in polys:
        out = out * q
    return out
