"""Recover formulas from NoPE models by symbolic execution.

Positions holding the same letter carry the same vector at every layer,
so a run is determined by the letter counts. For each occurrence pattern
``sigma`` (the set of letters that occur) we execute the model with the
counts as polynomial unknowns. Every value is a quotient of polynomials
whose denominator is a product of positive count sums. Whenever a ReLU
argument, an argmax set or the verdict depends on the counts, the run
forks, and the fork records a sign constraint on a polynomial. A finished
run (a branch) contributes the conjunction of its constraints.

All sign reasoning is sound over the natural numbers with ``x_i >= 1`` for
``i`` in ``sigma`` and ``x_i = 0`` otherwise. Constraints that are
unsatisfiable over the integers but not refuted by that reasoning are kept;
they only make the output longer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log2
from typing import Sequence

from .core import RELU, AhatError, AhatModel, is_uniform, rat
from .formulas import (
    And,
    Atom,
    LinearInequality,
    Not,
    Or,
    conj,
    disj,
    normalize_semialg,
)
from .polynomial import Polynomial, linear_parts

POS, ZERO_SIGN, NEG = 1, 0, -1
ALL_SIGNS = frozenset((NEG, ZERO_SIGN, POS))
DEFAULT_BUDGET = 1 << 20


class ExtractionError(AhatError, ValueError):
    pass


class BranchBudgetExceeded(ExtractionError):
    def __init__(self, budget: int, estimate_log2: float):
        super().__init__(
            f"more than {budget} branches; the naive bound is about 2^{estimate_log2:.1f}"
        )
        self.budget = budget
        self.estimate_log2 = estimate_log2


class SymbolicRational:
    """``num / prod(f^k)`` with every factor ``f`` positive on the current pattern."""

    __slots__ = ("num", "den")

    def __init__(self, num: Polynomial, den: dict | None = None):
        self.num = num
        self.den = {} if num.is_zero() else {f: k for f, k in (den or {}).items() if k}

    @classmethod
    def const(cls, variables, c) -> "SymbolicRational":
        return cls(Polynomial.constant(variables, c))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def _lift(self, den: dict) -> Polynomial:
        out = self.num
        for f, k in den.items():
            extra = k - self.den.get(f, 0)
            if extra:
                out = out * f**extra
        return out

    def __add__(self, other: "SymbolicRational") -> "SymbolicRational":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if self.den == other.den:
            return SymbolicRational(self.num + other.num, self.den)
        den = dict(self.den)
        for f, k in other.den.items():
            den[f] = max(den.get(f, 0), k)
        return SymbolicRational(self._lift(den) + other._lift(den), den)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c) -> "SymbolicRational":
        if c == 0 or self.is_zero():
            return SymbolicRational(Polynomial(self.num.variables))
        return SymbolicRational(self.num * c, self.den)

    def __mul__(self, other: "SymbolicRational") -> "SymbolicRational":
        if self.is_zero() or other.is_zero():
            return SymbolicRational(Polynomial(self.num.variables))
        den = dict(self.den)
        for f, k in other.den.items():
            den[f] = den.get(f, 0) + k
        return SymbolicRational(self.num * other.num, den)

    def divide_by(self, f: Polynomial) -> "SymbolicRational":
        if f.is_constant():
            return SymbolicRational(self.num * (1 / rat(f.constant_term())), self.den)
        den = dict(self.den)
        den[f] = den.get(f, 0) + 1
        return SymbolicRational(self.num, den)

    def evaluate(self, point: Sequence[int]):
        value = rat(self.num(point))
        for f, k in self.den.items():
            value /= rat(f(point)) ** k
        return value

    def __repr__(self):
        den = " * ".join(f"({f})^{k}" for f, k in self.den.items()) or "1"
        return f"({self.num}) / {den}"


def clear_denominators(value: SymbolicRational, relation: str) -> Atom:
    """``value rel 0`` as ``num rel 0``; valid because every factor is positive."""
    return Atom(value.num, relation)


# sign reasoning


class _SignOracle:
    """Static sign sets of integer polynomials for one occurrence pattern."""

    def __init__(self, variables: tuple, sigma_vars: frozenset):
        self.variables = variables
        self.sigma_idx = [i for i, v in enumerate(variables) if v in sigma_vars]
        self.cache: dict = {}
        self.shift_images = None

    def _shift(self, p: Polynomial) -> Polynomial:
        if self.shift_images is None:
            vs = self.variables
            self.shift_images = [
                Polynomial.var(vs, v) + 1 if i in self.sigma_idx else Polynomial.var(vs, v)
                for i, v in enumerate(vs)
            ]
        return p.substitute(self.shift_images)

    @staticmethod
    def _by_coefficients(p: Polynomial):
        coefs = list(p.terms.values())
        const = p.constant_term()
        if all(c >= 0 for c in coefs):
            return frozenset((POS,)) if const > 0 else frozenset((ZERO_SIGN, POS))
        if all(c <= 0 for c in coefs):
            return frozenset((NEG,)) if const < 0 else frozenset((NEG, ZERO_SIGN))
        return None

    def signs(self, p: Polynomial) -> frozenset:
        hit = self.cache.get(p)
        if hit is not None:
            return hit
        if p.is_zero():
            out = frozenset((ZERO_SIGN,))
        elif p.is_constant():
            c = p.constant_term()
            out = frozenset((POS if c > 0 else NEG,))
        else:
            out = self._by_coefficients(p)
            if out is None or len(out) > 1:
                shifted = self._by_coefficients(self._shift(p))
                if shifted is not None and (out is None or len(shifted) < len(out)):
                    out = shifted
            if out is None:
                out = ALL_SIGNS
        self.cache[p] = out
        return out


def _flip(signs, s: int) -> frozenset:
    return frozenset(a * s for a in signs)


class _Run:
    """One replay of the symbolic execution under a fixed decision prefix."""

    def __init__(self, oracle: _SignOracle, decisions: list):
        self.oracle = oracle
        self.decisions = decisions
        self.chosen: list = []
        self.widths: list = []
        self.known: dict = {}  # primitive polynomial -> allowed signs
        self.attention: dict = {}
        self.relu_signs: dict = {}

    def possible(self, p: Polynomial) -> frozenset:
        s, prim = p.primitive()
        if s == 0:
            return frozenset((ZERO_SIGN,))
        cur = self.known.get(prim)
        if cur is None:
            cur = self.oracle.signs(prim)
        return _flip(cur, s)

    def restrict(self, p: Polynomial, allowed, known: dict | None = None) -> bool:
        known = self.known if known is None else known
        s, prim = p.primitive()
        if s == 0:
            return ZERO_SIGN in allowed
        cur = known.get(prim)
        if cur is None:
            cur = self.oracle.signs(prim)
        new = cur & _flip(allowed, s)
        if not new:
            return False
        known[prim] = new
        return True

    def fork(self, n_options: int) -> int:
        k = len(self.chosen)
        idx = self.decisions[k] if k < len(self.decisions) else 0
        self.chosen.append(idx)
        self.widths.append(n_options)
        return idx

    def decide_positive(self, p: Polynomial) -> bool:
        """Is ``p > 0``? Forks when the current knowledge allows both answers."""
        poss = self.possible(p)
        if poss <= {POS}:
            return True
        if POS not in poss:
            return False
        if self.fork(2) == 0:
            self.restrict(p, {POS})
            return True
        self.restrict(p, {NEG, ZERO_SIGN})
        return False


@dataclass
class Branch:
    """One feasible execution path.

    ``sigma`` lists the occurring letters (end marker excluded),
    ``constraints`` pairs primitive polynomials with their allowed signs.
    """

    sigma: tuple
    constraints: list
    accept: bool
    attention: dict = field(default_factory=dict)
    relu_signs: dict = field(default_factory=dict)
    decisions: tuple = ()

    def guard_holds(self, v: Sequence[int], alphabet: Sequence[str]) -> bool:
        for a, x in zip(alphabet, v):
            if (a in self.sigma) != (x > 0):
                return False
        for p, signs in self.constraints:
            val = p(v)
            sign = POS if val > 0 else NEG if val < 0 else ZERO_SIGN
            if sign not in signs:
                return False
        return True


@dataclass
class Extraction:
    alphabet: tuple
    branches: list
    explored: int
    pruned: int

    @property
    def accepting(self) -> list:
        return [b for b in self.branches if b.accept]


def _sign_atoms(p: Polynomial, signs: frozenset) -> list:
    """Formula atoms (``q > 0`` form) stating that the sign of ``p`` lies in ``signs``."""
    s = set(signs)
    if s == {POS}:
        return [Atom(p, ">")]
    if s == {NEG}:
        return [Atom(-p, ">")]
    if s == {ZERO_SIGN}:
        return [Atom(-(p * p) + 1, ">")]
    if s == {ZERO_SIGN, POS}:
        return [Atom(p + 1, ">")]
    if s == {NEG, ZERO_SIGN}:
        return [Atom(-p + 1, ">")]
    if s == {NEG, POS}:
        return [Atom(p * p, ">")]
    return []


def _sigma_atoms(alphabet, sigma) -> list:
    out = []
    for a in alphabet:
        x = Polynomial.var(alphabet, a)
        out.append(Atom(x, ">") if a in sigma else Atom(-x + 1, ">"))
    return out


def _naive_estimate(model: AhatModel, n_symbols: int) -> float:
    relus = sum(m.out_dim for layer in model.layers for m, act in layer.net.layers if act == RELU)
    nonuni = sum(1 for layer in model.layers if not is_uniform(layer))
    per_sigma = nonuni * n_symbols * n_symbols + relus * n_symbols + 1
    return per_sigma + log2(max(1, 2 ** len(model.alphabet) - 1))


class _Explorer:
    def __init__(self, model: AhatModel, budget: int):
        self.model = model
        self.budget = budget
        self.alphabet = model.alphabet
        self.explored = 0
        self.pruned = 0

    def patterns(self):
        m = len(self.alphabet)
        # with an end marker the empty pattern is the lone marker, so the
        # formula also covers the zero vector
        first = 0 if self.model.uses_end_marker else 1
        for mask in range(first, 1 << m):
            yield tuple(a for i, a in enumerate(self.alphabet) if mask >> i & 1)

    def run_pattern(self, sigma: tuple) -> list:
        oracle = _SignOracle(self.alphabet, frozenset(sigma))
        out = []
        decisions: list = []
        while True:
            self.explored += 1
            if self.explored > self.budget:
                raise BranchBudgetExceeded(self.budget, _naive_estimate(self.model, len(self.model.symbols)))
            run = _Run(oracle, decisions)
            result = self.execute(run, sigma)
            if result is None:
                self.pruned += 1
            else:
                constraints = [
                    (p, s) for p, s in run.known.items() if s != oracle.signs(p)
                ]
                constraints.sort(key=lambda t: str(t[0]))
                out.append(
                    Branch(sigma, constraints, result, run.attention, run.relu_signs, tuple(run.chosen))
                )
            # advance to the next decision vector
            i = len(run.chosen) - 1
            while i >= 0 and run.chosen[i] + 1 >= run.widths[i]:
                i -= 1
            if i < 0:
                return out
            decisions = run.chosen[:i] + [run.chosen[i] + 1]

    def execute(self, run: _Run, sigma: tuple):
        model = self.model
        vs = self.alphabet
        classes = list(sigma)
        if model.uses_end_marker:
            classes.append(model.end_marker)
            out_class = model.end_marker
        else:
            out_class = sigma[-1]
        count = {}
        for c in classes:
            count[c] = Polynomial.var(vs, c) if c in vs else Polynomial.constant(vs, 1)
        vec = {
            c: [SymbolicRational.const(vs, x) for x in model.input_vector(c)] for c in classes
        }
        n_layers = len(model.layers)
        for li, layer in enumerate(model.layers):
            need = [out_class] if li == n_layers - 1 else classes
            values = {c: _apply(layer.value, vec[c], vs) for c in classes}
            uniform = is_uniform(layer)
            if not uniform:
                queries = {c: _apply(layer.query, vec[c], vs) for c in classes}
            new = {}
            for c in need:
                if uniform:
                    S = classes
                else:
                    S = self.choose(run, _apply(layer.key, vec[c], vs), queries, classes)
                    if S is None:
                        return None
                run.attention[(li, c)] = frozenset(S)
                den = Polynomial(vs)
                for c2 in S:
                    den = den + count[c2]
                acc = [SymbolicRational(Polynomial(vs)) for _ in range(layer.value.out_dim)]
                for c2 in S:
                    for t, val in enumerate(values[c2]):
                        if not val.is_zero():
                            acc[t] = acc[t] + SymbolicRational(val.num * count[c2], val.den)
                a = [x.divide_by(den) for x in acc]
                new[c] = self.ffn(run, layer.net, vec[c] + a, li, c)
            vec = new
        z = vec[out_class][0]
        return run.decide_positive(z.num)

    def ffn(self, run: _Run, net, x: list, li: int, c) -> list:
        vs = self.alphabet
        for fl, (m, act) in enumerate(net.layers):
            x = _apply(m, x, vs)
            if act == RELU:
                out = []
                for node, z in enumerate(x):
                    if run.decide_positive(z.num):
                        out.append(z)
                    else:
                        out.append(SymbolicRational(Polynomial(vs)))
                    run.relu_signs[(li, c, fl, node)] = run.possible(z.num)
                x = out
        return x

    def choose(self, run: _Run, key: list, queries: dict, classes: list):
        vs = self.alphabet
        scores = {}
        for c in classes:
            s = SymbolicRational(Polynomial(vs))
            for k, q in zip(key, queries[c]):
                if not k.is_zero() and not q.is_zero():
                    s = s + k * q
            scores[c] = s
        groups: list = []  # [representative score, members]
        for c in classes:
            for g in groups:
                if (g[0] - scores[c]).is_zero():
                    g[1].append(c)
                    break
            else:
                groups.append([scores[c], [c]])
        g = len(groups)
        if g == 1:
            return list(classes)
        options = []
        for mask in range(1, 1 << g):
            inside = [groups[i] for i in range(g) if mask >> i & 1]
            outside = [groups[i] for i in range(g) if not mask >> i & 1]
            known = dict(run.known)
            ok = True
            top = inside[0][0]
            for other in inside[1:]:
                if not run.restrict((top - other[0]).num, {ZERO_SIGN}, known):
                    ok = False
                    break
            if ok:
                for other in outside:
                    if not run.restrict((top - other[0]).num, {POS}, known):
                        ok = False
                        break
            if ok:
                members = [c for grp in inside for c in grp[1]]
                options.append((members, known))
        if not options:
            return None
        idx = 0 if len(options) == 1 else run.fork(len(options))
        members, known = options[idx]
        run.known = known
        order = {c: i for i, c in enumerate(classes)}
        return sorted(members, key=order.__getitem__)


def _apply(m, x: list, vs) -> list:
    out = []
    for row, b in zip(m.rows, m.offset):
        acc = SymbolicRational.const(vs, b)
        for col, coef in row:
            xc = x[col]
            if not xc.is_zero():
                acc = acc + xc.scale(coef)
        out.append(acc)
    return out


def explore(model: AhatModel, branch_budget: int = DEFAULT_BUDGET) -> Extraction:
    """Enumerate every feasible branch of ``model``."""
    ex = _Explorer(model, branch_budget)
    branches = []
    for sigma in ex.patterns():
        branches += ex.run_pattern(sigma)
    return Extraction(model.alphabet, branches, ex.explored, ex.pruned)


def branches_to_semialg(ext: Extraction):
    parts = []
    for b in ext.accepting:
        guard = _sigma_atoms(ext.alphabet, b.sigma)
        for p, signs in b.constraints:
            guard += _sign_atoms(p, signs)
        parts.append(conj(*guard))
    return normalize_semialg(disj(*parts)) if parts else Or(())


def extract_semialg(model: AhatModel, branch_budget: int = DEFAULT_BUDGET):
    """Semi-algebraic formula over the alphabet counts equivalent to ``model``."""
    return branches_to_semialg(explore(model, branch_budget))


def _linear_sign_formula(p: Polynomial, signs: frozenset):
    coeffs, const = linear_parts(p)
    vs = p.variables
    le = LinearInequality(vs, coeffs, -const)  # p <= 0
    ge = LinearInequality(vs, [-c for c in coeffs], const)  # p >= 0
    s = set(signs)
    if s == {POS}:
        return Not(le)
    if s == {NEG}:
        return Not(ge)
    if s == {ZERO_SIGN}:
        return And((le, ge))
    if s == {ZERO_SIGN, POS}:
        return ge
    if s == {NEG, ZERO_SIGN}:
        return le
    if s == {NEG, POS}:
        return Or((Not(le), Not(ge)))
    return And(())


def extract_qfpa_one_layer(model: AhatModel, branch_budget: int = DEFAULT_BUDGET):
    """Quantifier-free Presburger formula for a one-layer end-marker model."""
    check_one_layer(model)
    return branches_to_qfpa(explore(model, branch_budget))


def check_one_layer(model: AhatModel) -> None:
    if len(model.layers) != 1:
        raise ExtractionError(f"expected exactly one attention layer, found {len(model.layers)}")
    if not model.uses_end_marker:
        raise ExtractionError("the model must use an end marker")


def branches_to_qfpa(ext: Extraction):
    vs = ext.alphabet
    parts = []
    for b in ext.accepting:
        guard = []
        for a in vs:
            le = LinearInequality(vs, [1 if x == a else 0 for x in vs], 0)
            guard.append(Not(le) if a in b.sigma else le)
        for p, signs in b.constraints:
            if p.degree > 1:
                raise ExtractionError(f"nonlinear constraint {p} in a one-layer model")
            guard.append(_linear_sign_formula(p, signs))
        parts.append(conj(*guard))
    return disj(*parts) if parts else Or(())
