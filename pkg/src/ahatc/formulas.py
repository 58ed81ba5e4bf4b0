"""Formula ASTs over Parikh vectors, their evaluation, and algebraic rewrites.

Two atom kinds share the Boolean connectives:

* ``Atom(poly, rel)``: ``poly rel 0`` with ``rel`` one of ``> < >= <= =``.
* ``LinearInequality``: ``c . x <= b`` with rational ``c`` and ``b``.

The integer rewrites in :func:`normalize_semialg` rely on the variables
ranging over natural numbers. They are wrong over the reals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lcm
from typing import Sequence

from .core import AhatError, Rational, rat
from .polynomial import Polynomial, linear_parts, monomial_factors

RELATIONS = (">", "<", ">=", "<=", "=")


class FormulaError(AhatError, ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    poly: Polynomial
    rel: str = ">"

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise FormulaError(f"unknown relation {self.rel!r}")

    @property
    def variables(self) -> tuple:
        return self.poly.variables


@dataclass(frozen=True)
class LinearInequality:
    """``sum(coeffs[i] * x_i) <= bound``."""

    variables: tuple
    coeffs: tuple
    bound: Rational

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "coeffs", tuple(rat(c) for c in self.coeffs))
        object.__setattr__(self, "bound", rat(self.bound))
        if len(self.coeffs) != len(self.variables):
            raise FormulaError("one coefficient per variable is required")

    def lhs(self, v: Sequence) -> Rational:
        return sum((c * x for c, x in zip(self.coeffs, v)), rat(0))

    def holds(self, v: Sequence) -> bool:
        return self.lhs(v) <= self.bound

    def as_polynomial(self) -> Polynomial:
        """``c . x`` as a polynomial (the bound is kept separately)."""
        return Polynomial.from_linear(self.variables, self.coeffs)


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class And:
    args: tuple = ()


@dataclass(frozen=True)
class Or:
    args: tuple = ()


TRUE = And(())
FALSE = Or(())


def conj(*args) -> object:
    """Flattening conjunction; a single argument is returned unchanged."""
    flat = []
    for a in args:
        if isinstance(a, And):
            flat.extend(a.args)
        else:
            flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*args) -> object:
    flat = []
    for a in args:
        if isinstance(a, Or):
            flat.extend(a.args)
        else:
            flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def atoms(f) -> list:
    """Distinct atoms in order of first appearance."""
    seen: dict = {}

    def walk(g):
        if isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, Not):
            walk(g.arg)
        else:
            seen.setdefault(g, None)

    walk(f)
    return list(seen)


def formula_variables(f, default: Sequence[str] | None = None) -> tuple:
    found = {a.variables for a in atoms(f)}
    if len(found) > 1:
        raise FormulaError(f"atoms disagree on their variables: {sorted(found)}")
    if found:
        vs = found.pop()
        if default is not None and tuple(default) != vs:
            raise FormulaError(f"formula variables {vs} differ from alphabet {tuple(default)}")
        return vs
    if default is None:
        raise FormulaError("cannot infer the alphabet of a formula without atoms")
    return tuple(default)


def is_qfpa(f) -> bool:
    return all(isinstance(a, LinearInequality) for a in atoms(f))


def _holds_atom(a, v) -> bool:
    if isinstance(a, LinearInequality):
        if len(v) != len(a.variables):
            raise FormulaError(f"expected {len(a.variables)} counts, got {len(v)}")
        return a.holds(v)
    if isinstance(a, Atom):
        if len(v) != len(a.variables):
            raise FormulaError(f"expected {len(a.variables)} counts, got {len(v)}")
        x = a.poly(v)
        if a.rel == ">":
            return x > 0
        if a.rel == "<":
            return x < 0
        if a.rel == ">=":
            return x >= 0
        if a.rel == "<=":
            return x <= 0
        return x == 0
    raise FormulaError(f"not a formula node: {a!r}")


def evaluate(f, v: Sequence) -> bool:
    """Truth of ``f`` at the count vector ``v``."""
    v = tuple(v)
    if isinstance(f, And):
        return all(evaluate(a, v) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, v) for a in f.args)
    if isinstance(f, Not):
        return not evaluate(f.arg, v)
    return _holds_atom(f, v)


def eval_semialg(f, v: Sequence) -> bool:
    return evaluate(f, v)


def eval_qfpa(f, v: Sequence) -> bool:
    return evaluate(f, v)


def _strict(p: Polynomial, rel: str, negated: bool):
    """``p rel 0`` (or its negation) as a conjunction/disjunction of ``q > 0`` atoms."""
    if negated:
        rel = {">": "<=", "<": ">=", ">=": "<", "<=": ">", "=": "!="}[rel]
    if rel == ">":
        return Atom(p, ">")
    if rel == "<":
        return Atom(-p, ">")
    if rel == ">=":
        return Atom(p + 1, ">")
    if rel == "<=":
        return Atom(-p + 1, ">")
    if rel == "=":
        return Atom(-(p * p) + 1, ">")
    return Atom(p * p, ">")


def normalize_semialg(f):
    """Equivalent negation-free formula whose atoms are all ``p > 0``.

    Valid on natural-number points only: ``p >= 0`` becomes ``p + 1 > 0``,
    ``p = 0`` becomes ``-p^2 + 1 > 0`` and so on.
    """

    def go(g, neg: bool):
        if isinstance(g, Not):
            return go(g.arg, not neg)
        if isinstance(g, And):
            parts = [go(a, neg) for a in g.args]
            return disj(*parts) if neg else conj(*parts)
        if isinstance(g, Or):
            parts = [go(a, neg) for a in g.args]
            return conj(*parts) if neg else disj(*parts)
        if isinstance(g, Atom):
            p = g.poly
            if not p.is_integral():
                p = p * p.denominator_lcm()
            return _strict(p, g.rel, neg)
        if isinstance(g, LinearInequality):
            p = g.as_polynomial() - g.bound
            return _strict(p * p.denominator_lcm(), "<=", neg)
        raise FormulaError(f"not a formula node: {g!r}")

    return go(f, False)


def qfpa_nnf(f):
    """Push negations onto linear atoms."""

    def go(g, neg: bool):
        if isinstance(g, Not):
            return go(g.arg, not neg)
        if isinstance(g, And):
            parts = [go(a, neg) for a in g.args]
            return disj(*parts) if neg else conj(*parts)
        if isinstance(g, Or):
            parts = [go(a, neg) for a in g.args]
            return conj(*parts) if neg else disj(*parts)
        if isinstance(g, LinearInequality):
            return Not(g) if neg else g
        raise FormulaError(f"not a linear formula node: {g!r}")

    return go(f, False)


def linear_atom(p: Polynomial, rel: str):
    """``p rel 0`` for a degree-one ``p`` as a formula over ``<=`` atoms."""
    coeffs, const = linear_parts(p)
    vs = p.variables
    neg = [-rat(c) for c in coeffs]
    le = LinearInequality(vs, coeffs, -rat(const))  # p <= 0
    ge = LinearInequality(vs, neg, rat(const))  # -p <= 0
    if rel == "<=":
        return le
    if rel == ">=":
        return ge
    if rel == ">":
        return Not(le)
    if rel == "<":
        return Not(ge)
    if rel == "=":
        return And((le, ge))
    raise FormulaError(f"unknown relation {rel!r}")


def to_qfpa(f):
    """Turn a formula over degree-one atoms into negation normal form over ``<=`` atoms."""

    def go(g):
        if isinstance(g, Not):
            return Not(go(g.arg))
        if isinstance(g, And):
            return conj(*(go(a) for a in g.args))
        if isinstance(g, Or):
            return disj(*(go(a) for a in g.args))
        if isinstance(g, Atom):
            if g.poly.degree > 1:
                raise FormulaError(f"atom {g.poly} {g.rel} 0 is not linear")
            return linear_atom(g.poly, g.rel)
        return g

    return qfpa_nnf(go(f))


def qfpa_denominator_lcm(f) -> int:
    d = 1
    for a in atoms(f):
        for c in a.coeffs + (a.bound,):
            d = lcm(d, int(c.denominator))
    return d


# Parikh vectors and words


def parikh(word: Sequence[str], alphabet: Sequence[str]) -> tuple:
    index = {a: i for i, a in enumerate(alphabet)}
    v = [0] * len(alphabet)
    for a in word:
        if a not in index:
            raise FormulaError(f"letter {a!r} not in alphabet {list(alphabet)}")
        v[index[a]] += 1
    return tuple(v)


def canonical_word(v: Sequence[int], alphabet: Sequence[str]) -> tuple:
    """``a1^v1 ... am^vm`` as a tuple of letters."""
    if len(v) != len(alphabet):
        raise FormulaError("vector and alphabet lengths differ")
    if any(x < 0 for x in v):
        raise FormulaError("counts must be nonnegative")
    if not any(v):
        raise FormulaError("the zero vector has no nonempty word")
    out: list = []
    for a, k in zip(alphabet, v):
        out += [a] * k
    return tuple(out)


# Reduction of one polynomial equation to strict simple quadratic inequalities


def is_simple_quadratic(q: Polynomial) -> bool:
    """Degree at most two with at most one monomial of degree two."""
    if not q.is_integral() or q.degree > 2:
        return False
    return sum(1 for e in q.terms if sum(e) == 2) <= 1


@dataclass
class QuadraticReduction:
    """Result of :func:`reduce_to_simple_quadratics`.

    ``system`` lists polynomials ``q`` meaning ``q < 0``. ``definitions``
    gives, in dependency order, each fresh variable as a polynomial in the
    original and earlier fresh variables, so the witness is computable.
    """

    source: Polynomial
    variables: tuple
    fresh: tuple
    equations: list
    system: list
    definitions: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.fresh)

    @property
    def all_variables(self) -> tuple:
        return self.variables + self.fresh

    def assignment(self, x: Sequence[int]) -> dict:
        """Fresh-variable values forced by the chain equations at ``x``."""
        env = dict(zip(self.variables, x))
        for name, expr in self.definitions:
            env[name] = expr.evaluate(env)
        return {name: env[name] for name in self.fresh}

    def satisfied(self, x: Sequence[int]) -> bool:
        """Whether ``x`` lies in the projection, using the forced witness."""
        y = self.assignment(x)
        if any(val < 0 for val in y.values()):
            return False
        point = list(x) + [y[n] for n in self.fresh]
        return all(q(point) < 0 for q in self.system)


def reduce_to_simple_quadratics(p: Polynomial) -> QuadraticReduction:
    """Equation ``p = 0`` as a system of strict simple quadratic inequalities.

    Monomials are summed by a running chain ``Z_i = Z_{i-1} +/- Y0*Y_i``
    where ``Y0 = 1`` and ``Y_i`` is the absolute monomial value, itself built
    by a chain of single multiplications. Positive monomials come first so
    every partial sum stays a natural number whenever ``p(x) = 0``.
    """
    if not p.is_integral():
        raise FormulaError("the polynomial must have integer coefficients")
    orig = p.variables
    fresh: list = []
    defs: list = []  # (name, expression over symbolic names)
    eqs_sym: list = []  # each a function of the final variable list

    monos = p.sorted_terms()
    monos = [t for t in monos if t[1] > 0] + [t for t in monos if t[1] < 0]

    def new(name):
        if name in orig or name in fresh:
            raise FormulaError(f"fresh name {name!r} clashes with a variable")
        fresh.append(name)
        return name

    # Build everything symbolically as (kind, data) then materialise once the
    # full variable list is known.
    new("Y0")
    new("Z0")
    defs.append(("Y0", ("const", 1)))
    defs.append(("Z0", ("const", 0)))
    eqs_sym.append(("lin", {"Y0": 1}, -1))
    eqs_sym.append(("lin", {"Z0": 1}, 0))
    for i, (e, c) in enumerate(monos, start=1):
        a = abs(c)
        factors = [orig[j] for j in monomial_factors(e)]
        yi = f"Y{i}"
        if len(factors) == 0:
            new(yi)
            defs.append((yi, ("const", a)))
            eqs_sym.append(("lin", {yi: 1}, -a))
        elif len(factors) == 1:
            new(yi)
            defs.append((yi, ("mul", a, factors)))
            eqs_sym.append(("lin", {yi: 1, factors[0]: -a}, 0))
        elif len(factors) == 2 and factors[0] != factors[1]:
            new(yi)
            defs.append((yi, ("mul", a, factors)))
            eqs_sym.append(("quad", a, factors[0], factors[1], {yi: -1}, 0))
        else:
            prev = new(f"C{i}_1")
            defs.append((prev, ("mul", a, factors[:1])))
            eqs_sym.append(("lin", {prev: 1, factors[0]: -a}, 0))
            for j in range(2, len(factors)):
                cur = new(f"C{i}_{j}")
                defs.append((cur, ("mul", 1, [prev, factors[j - 1]])))
                eqs_sym.append(("quad", 1, prev, factors[j - 1], {cur: -1}, 0))
                prev = cur
            new(yi)
            defs.append((yi, ("mul", 1, [prev, factors[-1]])))
            eqs_sym.append(("quad", 1, prev, factors[-1], {yi: -1}, 0))
        zi = new(f"Z{i}")
        sign = 1 if c > 0 else -1
        defs.append((zi, ("zsum", f"Z{i - 1}", sign, yi)))
        eqs_sym.append(("quad", sign, "Y0", yi, {f"Z{i - 1}": 1, zi: -1}, 0))
    eqs_sym.append(("lin", {f"Z{len(monos)}": 1}, 0))

    allv = orig + tuple(fresh)
    V = {name: Polynomial.var(allv, name) for name in allv}

    def mat(eq):
        if eq[0] == "lin":
            _, lin, const = eq
            out = Polynomial.constant(allv, const)
        else:
            _, coef, u, w, lin, const = eq
            out = V[u] * V[w] * coef + const
        for name, k in lin.items():
            out = out + V[name] * k
        return out

    equations = [mat(eq) for eq in eqs_sym]
    system = []
    for q in equations:
        system.append(q - 1)
        system.append(-q - 1)

    definitions = []
    for name, d in defs:
        if d[0] == "const":
            expr = Polynomial.constant(allv, d[1])
        elif d[0] == "mul":
            expr = Polynomial.constant(allv, d[1])
            for f_ in d[2]:
                expr = expr * V[f_]
        else:
            _, zprev, sign, y = d
            expr = V[zprev] + V["Y0"] * V[y] * sign
        definitions.append((name, expr))
    return QuadraticReduction(p, orig, tuple(fresh), equations, system, definitions)
