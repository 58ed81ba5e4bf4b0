"""Compilers from counting formulas to exact AHAT models.

Every compiled model with ``nonneg_output`` set outputs a first coordinate
that is never negative and is strictly positive exactly on accepted words.
The closure operations rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as cartesian
from typing import Sequence

from . import __version__
from .core import (
    IDENTITY,
    ONE,
    RELU,
    ZERO,
    AffineMap,
    AhaLayer,
    AhatError,
    AhatModel,
    FeedForwardNet,
    accepts_counts,
    rat,
)
from .formulas import (
    And,
    Atom,
    LinearInequality,
    Not,
    Or,
    QuadraticReduction,
    atoms,
    formula_variables,
    is_simple_quadratic,
    normalize_semialg,
    qfpa_denominator_lcm,
    qfpa_nnf,
    reduce_to_simple_quadratics,
)
from .netbuilder import Expr, NetBuilder, embed_net, total
from .polynomial import Polynomial, homogenize, monomial_factors


class CompileError(AhatError, ValueError):
    pass


END = "$"


def _source(mode: str, text: str | None) -> dict:
    return {"mode": mode, "formula": text, "version": __version__}


def _one_hot(letters: Sequence[str]) -> dict:
    n = len(letters)
    return {a: tuple(ONE if j == i else ZERO for j in range(n)) for i, a in enumerate(letters)}


def _uniform_layer(d: int, value: AffineMap, net: FeedForwardNet) -> AhaLayer:
    """Attention with constant scores, so every position averages over all."""
    return AhaLayer(AffineMap.zero(d, 1), AffineMap.zero(d, 1), value, net)


# Polynomial threshold languages


def build_omult_gadget(level: int, i: int, j: int, num_initial: int) -> list:
    """Two layers appending ``x_i * y_j / (n+1)`` as a new last component.

    The input has ``num_initial`` one-hot components followed by ``level``
    uniform components; ``j`` indexes the uniform ones. The first layer
    forms the product ``relu(u_i + y_j - 1)`` at each position, the second
    averages it uniformly and drops the temporary.
    """
    d = num_initial + level
    if not 0 <= i < num_initial or not 0 <= j < level:
        raise CompileError("gadget component index out of range")
    b = NetBuilder(d, nonneg=range(d))
    xs = b.inputs()
    prod = b.relu(xs[i] + xs[num_initial + j] - 1)
    first = AhaLayer(
        AffineMap.zero(d, 1), AffineMap.zero(d, 1), AffineMap.zero(d, 0), b.build(xs + [prod])
    )
    b2 = NetBuilder(d + 2, nonneg=range(d + 2))
    ys = b2.inputs()
    second = _uniform_layer(d + 1, AffineMap.select(d + 1, [d]), b2.build(ys[:d] + [ys[d + 1]]))
    return [first, second]


def _prepare_poly(p: Polynomial, alphabet) -> tuple:
    alphabet = tuple(alphabet) if alphabet is not None else p.variables
    if END in alphabet:
        raise CompileError(f"{END!r} is reserved for the end marker")
    p = p.with_variables(alphabet)
    if not p.is_integral():
        p = p * p.denominator_lcm()
    q = homogenize(p, END)
    monos = sorted(
        ((monomial_factors(e), c) for e, c in q.terms.items()), key=lambda t: t[0]
    )
    return alphabet, q, monos


def compile_poly_gt0(p: Polynomial, alphabet: Sequence[str] | None = None, fused: bool = True) -> AhatModel:
    """Model accepting exactly the words whose counts satisfy ``p > 0``.

    The end-marker count homogenizes ``p``; attention is uniform throughout,
    so each position ends with ``q(1, x) / (n+1)^d`` where ``q`` is the
    homogenization of degree ``d``. With ``fused`` all products of one depth
    share a layer; otherwise one two-layer gadget is emitted per product.
    """
    alphabet, q, monos = _prepare_poly(p, alphabet)
    letters = (END,) + alphabet
    D = len(letters)
    embedding = _one_hot(letters)
    deg = max(q.degree, 0)
    build = _poly_layers_fused if fused else _poly_layers_gadgets
    layers = build(D, monos, deg)
    return AhatModel(
        alphabet=alphabet,
        embedding={a: embedding[a] for a in letters},
        layers=tuple(layers),
        nonneg_output=True,
        source=_source("poly" if fused else "poly-gadgets", f"{p.with_variables(alphabet)} > 0"),
    )


def _readout(b: NetBuilder, monos, value_of) -> Expr:
    return b.relu(total(value_of(f) * c for f, c in monos))


def _poly_layers_fused(D: int, monos: list, deg: int) -> list:
    layers = []
    # layer 1: frequencies of every letter and the end marker
    b = NetBuilder(2 * D, nonneg=range(2 * D))
    xs = b.inputs()
    u, freq = xs[:D], xs[D:]
    uniform = {(i,): freq[i] for i in range(D)}
    order = [(i,) for i in range(D)]
    if deg <= 1:
        out = [_readout(b, monos, lambda f: uniform[f] if f else Expr({}, 1))]
        return [_uniform_layer(D, AffineMap.identity(D), b.build(out))]
    temps = sorted({f[:2] for f, _ in monos})
    prods = [b.relu(u[t[-1]] + uniform[t[:-1]] - 1) for t in temps]
    layers.append(_uniform_layer(D, AffineMap.identity(D), b.build(u + [uniform[o] for o in order] + prods)))
    for level in range(2, deg + 1):
        width = D + len(order) + len(temps)
        b = NetBuilder(width + len(temps), nonneg=range(width + len(temps)))
        xs = b.inputs()
        u = xs[:D]
        uniform = {o: xs[D + k] for k, o in enumerate(order)}
        for k, t in enumerate(temps):
            uniform[t] = xs[width + k]
        value = AffineMap.select(width, list(range(D + len(order), width)))
        order = order + temps
        if level == deg:
            layers.append(_uniform_layer(width, value, b.build([_readout(b, monos, uniform.__getitem__)])))
            break
        temps = sorted({f[: level + 1] for f, _ in monos})
        prods = [b.relu(u[t[-1]] + uniform[t[:-1]] - 1) for t in temps]
        layers.append(_uniform_layer(width, value, b.build(u + [uniform[o] for o in order] + prods)))
    return layers


def _poly_layers_gadgets(D: int, monos: list, deg: int) -> list:
    b = NetBuilder(2 * D, nonneg=range(2 * D))
    xs = b.inputs()
    layers = [_uniform_layer(D, AffineMap.identity(D), b.build(xs))]
    order = [(i,) for i in range(D)]
    prefixes = sorted({f[:k] for f, _ in monos for k in range(2, len(f) + 1)}, key=lambda t: (len(t), t))
    for t in prefixes:
        j = order.index(t[:-1])
        layers += build_omult_gadget(len(order), t[-1], j, D)
        order.append(t)
    width = D + len(order)
    b = NetBuilder(width, nonneg=range(width))
    xs = b.inputs()
    index = {o: xs[D + k] for k, o in enumerate(order)}
    out = _readout(b, monos, lambda f: index[f] if f else Expr({}, 1))
    layers.append(AhaLayer(AffineMap.zero(width, 1), AffineMap.zero(width, 1), AffineMap.zero(width, 0), b.build([out])))
    return layers


def normalize_output(model: AhatModel) -> AhatModel:
    """Append a ReLU so the model satisfies the nonnegative-output contract."""
    if model.nonneg_output:
        return model
    if not model.layers:
        raise CompileError("a model without layers cannot be normalized")
    last = model.layers[-1]
    e = last.out_dim
    net = FeedForwardNet(last.net.layers + ((AffineMap.identity(e), RELU),))
    layers = model.layers[:-1] + (AhaLayer(last.query, last.key, last.value, net),)
    return _replace(model, layers=layers, nonneg_output=True)


def _replace(model: AhatModel, **changes) -> AhatModel:
    fields = dict(
        alphabet=model.alphabet,
        embedding=model.embedding,
        layers=model.layers,
        uses_end_marker=model.uses_end_marker,
        end_marker=model.end_marker,
        constant_pe=model.constant_pe,
        projection_deleted=model.projection_deleted,
        nonneg_output=model.nonneg_output,
        source=model.source,
    )
    fields.update(changes)
    return AhatModel(**fields)


# Boolean closure


def _shift(m: AffineMap, offset: int, in_dim: int) -> AffineMap:
    rows = tuple(tuple((c + offset, v) for c, v in row) for row in m.rows)
    return AffineMap(rows, m.offset, in_dim)


def _combine(a: AhatModel, b: AhatModel, op: str) -> AhatModel:
    if a.alphabet != b.alphabet:
        raise CompileError(f"alphabets differ: {a.alphabet} vs {b.alphabet}")
    if a.uses_end_marker != b.uses_end_marker or a.end_marker != b.end_marker:
        raise CompileError("operands disagree on the end-marker convention")
    for name, m in (("first", a), ("second", b)):
        if not m.nonneg_output:
            raise CompileError(f"{name} operand lacks the nonnegative-output contract (see normalize_output)")
        if not m.layers:
            raise CompileError(f"{name} operand has no layers")
    symbols = a.symbols
    embedding = {s: tuple(a.embedding[s]) + tuple(b.embedding[s]) for s in symbols}
    pe = None
    if a.constant_pe is not None or b.constant_pe is not None:
        pa = a.constant_pe or (ZERO,) * a.dim
        pb = b.constant_pe or (ZERO,) * b.dim
        pe = tuple(pa) + tuple(pb)
    dB = b.dim
    b_nonneg = [all(b.input_vector(s)[k] >= 0 for s in symbols) for k in range(dB)]

    layers = []
    dA = a.dim
    last_a = len(a.layers) - 1
    for t, layer in enumerate(a.layers):
        d = dA + dB
        k = layer.value.out_dim
        nb = NetBuilder(d + k, nonneg=[dA + j for j in range(dB) if b_nonneg[j]])
        xs = nb.inputs()
        out = embed_net(nb, layer.net, xs[:dA] + xs[d:])
        if t == last_a:
            out = out[:1]
        net = nb.build(out + xs[dA:d])
        layers.append(
            AhaLayer(_shift(layer.query, 0, d), _shift(layer.key, 0, d), _shift(layer.value, 0, d), net)
        )
        dA = len(out)
        b_nonneg = b_nonneg  # the carried block is unchanged
    # dA is now 1: the first block holds the first operand's verdict value
    dY = b.dim
    last_b = len(b.layers) - 1
    for t, layer in enumerate(b.layers):
        d = 1 + dY
        k = layer.value.out_dim
        nb = NetBuilder(d + k, nonneg=[0])
        xs = nb.inputs()
        out = embed_net(nb, layer.net, xs[1:d] + xs[d:])
        if t == last_b:
            x, y = xs[0], out[0]
            if op == "union":
                final = [x + y]
            else:
                final = [nb.min(x, y)]
            net = nb.build(final)
        else:
            net = nb.build([xs[0]] + out)
        layers.append(
            AhaLayer(_shift(layer.query, 1, d), _shift(layer.key, 1, d), _shift(layer.value, 1, d), net)
        )
        dY = len(out)
    return AhatModel(
        alphabet=a.alphabet,
        embedding=embedding,
        layers=tuple(layers),
        uses_end_marker=a.uses_end_marker,
        end_marker=a.end_marker,
        constant_pe=pe,
        nonneg_output=True,
        source={"mode": op, "operands": [a.source, b.source], "version": __version__},
    )


def union(a: AhatModel, b: AhatModel) -> AhatModel:
    """Accepts ``L(a) | L(b)``: the final value is the sum of both verdict values."""
    return _combine(a, b, "union")


def intersection(a: AhatModel, b: AhatModel) -> AhatModel:
    """Accepts ``L(a) & L(b)``: the final value is ``min`` of both verdict values."""
    return _combine(a, b, "intersection")


def compile_semialg(f, alphabet: Sequence[str] | None = None) -> AhatModel:
    """Model for a Boolean combination of polynomial inequalities."""
    alphabet = formula_variables(f, alphabet)
    g = normalize_semialg(f)

    def go(h):
        if isinstance(h, Atom):
            return compile_poly_gt0(h.poly, alphabet)
        if isinstance(h, (And, Or)):
            if not h.args:
                const = 1 if isinstance(h, And) else 0
                return compile_poly_gt0(Polynomial.constant(alphabet, const), alphabet)
            models = [go(x) for x in h.args]
            out = models[0]
            for m in models[1:]:
                out = intersection(out, m) if isinstance(h, And) else union(out, m)
            return out
        raise CompileError(f"unexpected node after normalization: {h!r}")

    from .dsl import format_formula

    return _replace(go(g), source=_source("semialg", format_formula(f)))


# One-layer Presburger compiler


def qfpa_margin(f) -> object:
    """``1/L`` where ``L`` is the lcm of every coefficient and bound denominator.

    Any violated atom ``c.x <= b`` then has ``c.x - b >= 1/L``.
    """
    return rat(1) / qfpa_denominator_lcm(f)


def compile_qfpa_one_layer(f, alphabet: Sequence[str] | None = None) -> AhatModel:
    """Single uniform layer deciding a quantifier-free Presburger formula.

    The end marker carries the atom bounds and a margin ``o``. After
    averaging, each atom yields ``o/(n+1)`` when its literal holds and 0
    otherwise, and the connectives combine those values exactly.
    """
    alphabet = formula_variables(f, alphabet)
    if END in alphabet:
        raise CompileError(f"{END!r} is reserved for the end marker")
    f = qfpa_nnf(f)
    lin = atoms(f)
    m, k = len(alphabet), len(lin)
    D = m + k + 1
    o = qfpa_margin(f)
    embedding = {}
    for i, a in enumerate(alphabet):
        embedding[a] = tuple(ONE if j == i else ZERO for j in range(D))
    embedding[END] = (ZERO,) * m + tuple(x.bound for x in lin) + (o,)
    nb = NetBuilder(2 * D, nonneg=list(range(m)) + list(range(D, D + m)) + [2 * D - 1])
    xs = nb.inputs()
    ax, ab, ao = xs[D:D + m], xs[D + m:D + m + k], xs[2 * D - 1]
    index = {x: j for j, x in enumerate(lin)}

    def lhs(x: LinearInequality) -> Expr:
        return total(ax[i] * c for i, c in enumerate(x.coeffs)) - ab[index[x]]

    def go(g) -> Expr:
        if isinstance(g, LinearInequality):
            return nb.min(ao, nb.relu(ao - lhs(g)))
        if isinstance(g, Not):
            return nb.min(ao, nb.relu(lhs(g.arg)))
        parts = [go(h) for h in g.args]
        if isinstance(g, Or):
            return nb.min(ao, total(parts))
        return nb.relu(total(parts) - ao * (len(parts) - 1))

    from .dsl import format_formula

    layer = _uniform_layer(D, AffineMap.identity(D), nb.build([go(f)]))
    return AhatModel(
        alphabet=alphabet,
        embedding=embedding,
        layers=(layer,),
        nonneg_output=True,
        source=_source("qfpa", format_formula(f)),
    )


# Models without end marker


def compile_homogeneous_qfpa_nem(f, alphabet: Sequence[str] | None = None) -> AhatModel:
    """One uniform layer, no end marker, for homogeneous linear formulas.

    Literals ``c.x > 0`` become ``relu(c.f)`` on the frequency vector ``f``.
    A non-strict literal ``c.x <= 0`` is only accepted when it is constant
    on nonempty words (all ``c_i <= 0``, or all ``c_i > 0``).
    """
    alphabet = formula_variables(f, alphabet)
    f = qfpa_nnf(f)
    for x in atoms(f):
        if x.bound != 0:
            raise CompileError(f"atom with bound {x.bound} is not homogeneous")
    m = len(alphabet)
    nb = NetBuilder(2 * m, nonneg=range(2 * m))
    xs = nb.inputs()
    freq = xs[m:]

    def go(g) -> Expr:
        if isinstance(g, Not):
            return nb.relu(total(freq[i] * c for i, c in enumerate(g.arg.coeffs)))
        if isinstance(g, LinearInequality):
            if all(c <= 0 for c in g.coeffs):
                return Expr({}, 1)
            if all(c > 0 for c in g.coeffs):
                return Expr()
            raise CompileError(
                "a non-strict homogeneous atom with mixed signs cannot be decided without an end marker"
            )
        if isinstance(g, Or):
            return total(go(h) for h in g.args)
        if not g.args:
            return Expr({}, 1)
        parts = [go(h) for h in g.args]
        out = parts[0]
        for p in parts[1:]:
            out = nb.min(out, p)
        return out

    from .dsl import format_formula

    layer = _uniform_layer(m, AffineMap.identity(m), nb.build([go(f)]))
    return AhatModel(
        alphabet=alphabet,
        embedding=_one_hot(alphabet),
        layers=(layer,),
        uses_end_marker=False,
        end_marker=None,
        nonneg_output=True,
        source=_source("homogeneous-nem", format_formula(f)),
    )


def compile_sqrt_two_layer_nem() -> AhatModel:
    """Fixed model for ``2|w|_a^2 < |w|^2`` over ``{a, b}`` without end marker.

    Layer 1 lets ``a`` positions average over everything and ``b``
    positions over ``b`` only, leaving ``f_a`` on ``a`` and 0 on ``b``.
    Layer 2 averages that uniformly to ``f_a^2`` and outputs ``1/2 - f_a^2``.
    """
    ident = AffineMap.identity(2)
    query = AffineMap.from_dense([[1, 1], [0, 1]], [0, 0])
    net1 = FeedForwardNet(((AffineMap.from_dense([[0, -1, 1, 0]], [0]), RELU),))
    layer1 = AhaLayer(query, ident, ident, net1)
    net2 = FeedForwardNet(((AffineMap.from_dense([[0, -1]], [rat("1/2")]), IDENTITY),))
    layer2 = AhaLayer(AffineMap.zero(1, 1), AffineMap.zero(1, 1), AffineMap.identity(1), net2)
    return AhatModel(
        alphabet=("a", "b"),
        embedding={"a": (ONE, ZERO), "b": (ZERO, ONE)},
        layers=(layer1, layer2),
        uses_end_marker=False,
        end_marker=None,
        source=_source("sqrt-nem", "x_a^2 + 2*x_a*x_b + x_b^2 - 2*x_a^2 > 0"),
    )


# Two-layer compiler for strict simple quadratic systems


@dataclass
class CompiledLanguage:
    """A model plus the bookkeeping needed to read its language back.

    ``variable_letters`` carry the user-visible counts; ``fresh_letters``
    carry witness counts; each of ``marker_letters`` must occur exactly
    once. Membership deletes markers and fresh letters.
    """

    model: AhatModel
    source: dict
    variable_letters: tuple
    marker_letters: tuple
    fresh_letters: tuple = ()
    reduction: QuadraticReduction | None = None
    system: list = field(default_factory=list)

    @property
    def projection_deleted(self) -> frozenset:
        return frozenset(self.marker_letters) | frozenset(self.fresh_letters)


def compile_quadratic_system_two_layers(
    system: Sequence[Polynomial], marker_prefix: str = "#"
) -> CompiledLanguage:
    """Two attention layers accepting ``q_i(x) < 0`` for all ``i``.

    Letters: one per variable, one marker per inequality, and the end
    marker. Layer 1 averages uniformly and prepares, at each marker's
    position, the vector whose inner product with the variable frequencies
    is the inequality's value over ``(n+1)^2``. Layer 2 uses those as
    scores, so any violated inequality pulls the average of the marker
    indicator up to at least ``1/(n+1)``. The output is
    ``relu(f_$ - g - sum_i |f_marker_i - f_$|)``.
    """
    system = list(system)
    if not system:
        raise CompileError("the system must contain at least one inequality")
    variables = system[0].variables
    for q in system:
        if q.variables != variables:
            raise CompileError("all inequalities must share one variable list")
        if not is_simple_quadratic(q):
            raise CompileError(f"{q} is not a simple quadratic polynomial")
    m, t = len(variables), len(system)
    markers = tuple(f"{marker_prefix}{i + 1}" for i in range(t))
    clash = set(markers) & set(variables)
    if clash or END in variables:
        raise CompileError(f"letter names clash: {sorted(clash) or END}")
    letters = variables + markers + (END,)
    D = m + t + 1
    ENDI = D - 1
    nb = NetBuilder(2 * D, nonneg=range(2 * D))
    xs = nb.inputs()
    u, f = xs[:D], xs[D:]
    v = [Expr() for _ in range(m + 1)]
    for i, q in enumerate(system):
        mark = u[m + i]

        def gated(s: int) -> Expr:
            return nb.relu(f[s] + mark - 1)

        for e, c in q.terms.items():
            fac = monomial_factors(e)
            if len(fac) == 2:
                v[fac[0]] = v[fac[0]] + gated(fac[1]) * c
            elif len(fac) == 1:
                v[m] = v[m] + gated(fac[0]) * c
            else:
                v[m] = v[m] + gated(ENDI) * c
    width = 2 * D + m + 1
    layer1 = _uniform_layer(D, AffineMap.identity(D), nb.build(u + f + v))

    key = AffineMap.select(width, [D + j for j in range(m)] + [D + ENDI])
    query = AffineMap.select(width, list(range(2 * D, width)))
    value = AffineMap.from_sparse([{m + i: 1 for i in range(t)}], [0], width)
    nb2 = NetBuilder(width + 1, nonneg=range(2 * D))
    ys = nb2.inputs()
    f2, g = ys[D:2 * D], ys[width]
    y = f2[ENDI] - g - total(nb2.abs(f2[m + i] - f2[ENDI]) for i in range(t))
    layer2 = AhaLayer(query, key, value, nb2.build([nb2.relu(y)]))
    model = AhatModel(
        alphabet=variables + markers,
        embedding=_one_hot(letters),
        layers=(layer1, layer2),
        projection_deleted=frozenset(markers),
        nonneg_output=True,
        source=_source("quad2", " & ".join(f"{q} < 0" for q in system)),
    )
    return CompiledLanguage(model, dict(model.source), variables, markers, (), None, system)


def compile_diophantine(p: Polynomial) -> CompiledLanguage:
    """Language of counts with ``p(x) = 0``, with chain witnesses as extra letters."""
    red = reduce_to_simple_quadratics(p)
    system = [q for q in red.system]
    c = compile_quadratic_system_two_layers(system)
    deleted = frozenset(c.marker_letters) | frozenset(red.fresh)
    model = _replace(c.model, projection_deleted=deleted, source=_source("quad2", f"{p} = 0"))
    return CompiledLanguage(model, dict(model.source), red.variables, c.marker_letters, red.fresh, red, system)


def _counts(c: CompiledLanguage, x: Sequence[int], fresh: Sequence[int]) -> dict:
    counts = dict(zip(c.variable_letters, x))
    counts.update(zip(c.fresh_letters, fresh))
    for mk in c.marker_letters:
        counts[mk] = 1
    counts[END] = 1
    return counts


def membership_via_projection(
    c: CompiledLanguage, v: Sequence[int], witness_bound: int | None = None
) -> bool:
    """Is ``v`` (over the variable letters) in the projected language?

    Chain-determined fresh counts are computed from ``v``; a negative
    forced value means no natural witness exists. Otherwise every fresh
    count vector with entries up to ``witness_bound`` is tried.
    """
    v = tuple(int(x) for x in v)
    if len(v) != len(c.variable_letters):
        raise CompileError(f"expected {len(c.variable_letters)} counts, got {len(v)}")
    if any(x < 0 for x in v):
        raise CompileError("counts must be nonnegative")
    if not c.fresh_letters:
        return accepts_counts(c.model, _counts(c, v, ()))
    if c.reduction is not None:
        forced = c.reduction.assignment(v)
        ys = [forced[name] for name in c.fresh_letters]
        if any(y < 0 for y in ys):
            return False
        return accepts_counts(c.model, _counts(c, v, ys))
    if witness_bound is None:
        raise CompileError("fresh letters are not chain-determined; give a witness bound")
    for ys in cartesian(range(witness_bound + 1), repeat=len(c.fresh_letters)):
        if accepts_counts(c.model, _counts(c, v, ys)):
            return True
    return False
