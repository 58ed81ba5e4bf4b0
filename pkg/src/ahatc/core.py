"""Exact data model and evaluation for average hard attention transformers.

Every weight, activation and score is a ``gmpy2.mpq``. Floats are refused
at the boundary so nothing inexact can leak in.

Scores are oriented as ``<key(x_i), query(x_j)>``: position ``i`` attends
using its own key against the queries of the other positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from gmpy2 import mpq

Rational = type(mpq(0))
Vector = tuple  # tuple of Rational

ZERO = mpq(0)
ONE = mpq(1)

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)


class AhatError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(AhatError, ValueError):
    pass


class AlphabetError(AhatError, ValueError):
    pass


class EmptyWordError(AhatError, ValueError):
    pass


def rat(x) -> Rational:
    """Convert ints, Fractions, mpq values and ``"num/den"`` strings to mpq."""
    if isinstance(x, Rational):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return mpq(x)
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, str):
        return parse_rational(x, strict=False)
    if type(x).__name__ == "mpz":
        return mpq(x)
    raise TypeError(f"cannot use {type(x).__name__} as an exact rational")


def parse_rational(text: str, strict: bool = True) -> Rational:
    """Parse ``"num/den"``. With ``strict`` only the canonical form is accepted."""
    s = text if strict else text.strip()
    if "/" in s:
        num_s, den_s = s.split("/", 1)
    else:
        if strict:
            raise ValueError(f"rational {text!r} is not in canonical num/den form")
        num_s, den_s = s, "1"
    try:
        num, den = int(num_s), int(den_s)
    except ValueError:
        raise ValueError(f"malformed rational {text!r}") from None
    if den == 0:
        raise ValueError(f"zero denominator in {text!r}")
    value = mpq(num, den)
    if strict and format_rational(value) != s:
        raise ValueError(f"rational {text!r} is not in canonical num/den form")
    return value


def format_rational(q) -> str:
    q = rat(q)
    return f"{q.numerator}/{q.denominator}"


def rat_vector(values: Iterable) -> Vector:
    return tuple(rat(v) for v in values)


@dataclass(frozen=True)
class AffineMap:
    """``x -> M x + b``. Rows are stored sparsely as ``((col, coef), ...)``."""

    rows: tuple
    offset: Vector
    in_dim: int

    def __post_init__(self):
        if len(self.rows) != len(self.offset):
            raise DimensionError(
                f"affine map has {len(self.rows)} rows but offset of length {len(self.offset)}"
            )
        for r, row in enumerate(self.rows):
            for col, _ in row:
                if not 0 <= col < self.in_dim:
                    raise DimensionError(f"row {r} references column {col} outside input dimension {self.in_dim}")

    @classmethod
    def from_dense(cls, matrix: Sequence[Sequence], offset: Sequence, in_dim: int | None = None) -> "AffineMap":
        matrix = [list(r) for r in matrix]
        if in_dim is None:
            if not matrix:
                raise DimensionError("input dimension of an empty matrix must be given")
            in_dim = len(matrix[0])
        rows = []
        for r, row in enumerate(matrix):
            if len(row) != in_dim:
                raise DimensionError(f"matrix row {r} has {len(row)} columns, expected {in_dim}")
            rows.append(tuple((c, rat(v)) for c, v in enumerate(row) if rat(v) != 0))
        return cls(tuple(rows), rat_vector(offset), in_dim)

    @classmethod
    def from_sparse(cls, rows: Sequence[Mapping[int, object]], offset: Sequence, in_dim: int) -> "AffineMap":
        out = []
        for row in rows:
            items = sorted((c, rat(v)) for c, v in row.items())
            out.append(tuple((c, v) for c, v in items if v != 0))
        return cls(tuple(out), rat_vector(offset), in_dim)

    @classmethod
    def zero(cls, in_dim: int, out_dim: int, offset: Sequence | None = None) -> "AffineMap":
        off = rat_vector(offset) if offset is not None else (ZERO,) * out_dim
        return cls(((),) * out_dim, off, in_dim)

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(tuple(((i, ONE),) for i in range(dim)), (ZERO,) * dim, dim)

    @classmethod
    def select(cls, in_dim: int, columns: Sequence[int]) -> "AffineMap":
        return cls(tuple(((c, ONE),) for c in columns), (ZERO,) * len(columns), in_dim)

    @property
    def out_dim(self) -> int:
        return len(self.offset)

    @property
    def matrix(self) -> list:
        dense = []
        for row in self.rows:
            line = [ZERO] * self.in_dim
            for c, v in row:
                line[c] = v
            dense.append(line)
        return dense

    def is_constant(self) -> bool:
        return all(not row for row in self.rows)

    def apply(self, x: Sequence) -> Vector:
        if len(x) != self.in_dim:
            raise DimensionError(f"affine map expects dimension {self.in_dim}, got {len(x)}")
        out = []
        for row, b in zip(self.rows, self.offset):
            acc = b
            for c, v in row:
                xc = x[c]
                if xc:
                    acc = acc + v * xc
            out.append(acc)
        return tuple(out)


@dataclass(frozen=True)
class FeedForwardNet:
    layers: tuple  # of (AffineMap, activation)

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("a feed-forward net needs at least one layer")
        for i, (m, act) in enumerate(self.layers):
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {act!r}")
            if i and m.in_dim != self.layers[i - 1][0].out_dim:
                raise DimensionError(
                    f"layer {i} expects dimension {m.in_dim} but layer {i - 1} produces {self.layers[i - 1][0].out_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].out_dim


def eval_ffn(net: FeedForwardNet, x: Sequence, record: list | None = None) -> Vector:
    """Evaluate ``net`` on ``x``. Pre-activation vectors are appended to ``record`` if given."""
    v = tuple(x)
    for i, (m, act) in enumerate(net.layers):
        if len(v) != m.in_dim:
            raise DimensionError(f"feed-forward layer {i} expects dimension {m.in_dim}, got {len(v)}")
        v = m.apply(v)
        if record is not None:
            record.append(v)
        if act == RELU:
            v = tuple(z if z > 0 else ZERO for z in v)
    return v


@dataclass(frozen=True)
class AhaLayer:
    query: AffineMap
    key: AffineMap
    value: AffineMap
    net: FeedForwardNet

    def __post_init__(self):
        d = self.query.in_dim
        if self.key.in_dim != d or self.value.in_dim != d:
            raise DimensionError("query, key and value must read the same input dimension")
        if self.key.out_dim != self.query.out_dim:
            raise DimensionError("query and key must share their output dimension")
        if self.net.in_dim != d + self.value.out_dim:
            raise DimensionError(
                f"net input dimension {self.net.in_dim} differs from {d} + {self.value.out_dim}"
            )

    @property
    def in_dim(self) -> int:
        return self.query.in_dim

    @property
    def out_dim(self) -> int:
        return self.net.out_dim


def is_uniform(layer: AhaLayer) -> bool:
    """True when the attention scores cannot depend on the input."""
    return layer.key.is_constant() and layer.query.is_constant()


@dataclass(frozen=True, eq=False)
class AhatModel:
    alphabet: tuple
    embedding: Mapping  # letter -> Vector
    layers: tuple
    uses_end_marker: bool = True
    end_marker: str | None = "$"
    constant_pe: Vector | None = None
    projection_deleted: frozenset = frozenset()
    nonneg_output: bool = False
    source: Mapping | None = None

    def __post_init__(self):
        if len(set(self.alphabet)) != len(self.alphabet) or not self.alphabet:
            raise AlphabetError("alphabet must be a nonempty list of distinct letters")
        if self.uses_end_marker:
            if self.end_marker is None:
                raise AlphabetError("a model using an end marker must name it")
            if self.end_marker in self.alphabet:
                raise AlphabetError(f"end marker {self.end_marker!r} is also an alphabet letter")
        elif self.end_marker is not None:
            raise AlphabetError("end_marker must be absent when the model uses none")
        letters = self.symbols
        missing = [a for a in letters if a not in self.embedding]
        if missing:
            raise AlphabetError(f"no embedding for {missing}")
        extra = [a for a in self.embedding if a not in letters]
        if extra:
            raise AlphabetError(f"embedding for unknown letters {extra}")
        dims = {len(self.embedding[a]) for a in letters}
        if len(dims) != 1:
            raise DimensionError("all embeddings must share one dimension")
        d = dims.pop()
        if self.constant_pe is not None and len(self.constant_pe) != d:
            raise DimensionError("constant positional vector has the wrong dimension")
        for i, layer in enumerate(self.layers):
            if layer.in_dim != d:
                raise DimensionError(f"layer {i} expects dimension {layer.in_dim}, previous dimension is {d}")
            d = layer.out_dim
        if d < 1:
            raise DimensionError("the output dimension must be at least one")
        if not set(self.projection_deleted) <= set(self.alphabet):
            raise AlphabetError("projection deletes letters outside the alphabet")

    @property
    def symbols(self) -> tuple:
        """Alphabet letters plus the end marker, if any."""
        return self.alphabet + ((self.end_marker,) if self.uses_end_marker else ())

    @property
    def dim(self) -> int:
        return len(self.embedding[self.alphabet[0]])

    def input_vector(self, letter: str) -> Vector:
        v = self.embedding[letter]
        if self.constant_pe is not None:
            v = tuple(a + b for a, b in zip(v, self.constant_pe))
        return v

    def __eq__(self, other):
        if not isinstance(other, AhatModel):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and dict(self.embedding) == dict(other.embedding)
            and self.layers == other.layers
            and self.uses_end_marker == other.uses_end_marker
            and self.end_marker == other.end_marker
            and self.constant_pe == other.constant_pe
            and frozenset(self.projection_deleted) == frozenset(other.projection_deleted)
        )

    __hash__ = None


@dataclass
class EvalTrace:
    """Activations and argmax sets of one run.

    ``activations[0]`` holds the input vectors, ``activations[l]`` the output
    of layer ``l``. ``argmax[l-1][i]`` is the set of positions that position
    ``i`` attends to in layer ``l``. ``ffn_pre[l-1][i]`` lists the
    pre-activation vectors of every feed-forward layer at position ``i``.
    Positions holding equal vectors share the same objects.
    """

    word: tuple
    activations: list
    argmax: list
    ffn_pre: list = field(default_factory=list)

    @property
    def output(self) -> Vector:
        return self.activations[-1][-1]


def _layer_on_classes(layer: AhaLayer, vecs: list, counts: list, record: bool):
    """Apply ``layer`` to distinct vectors ``vecs`` with multiplicities ``counts``.

    Returns (outputs, argmax class index lists, pre-activations or None).
    """
    keys = [layer.key.apply(v) for v in vecs]
    queries = [layer.query.apply(v) for v in vecs]
    values = [layer.value.apply(v) for v in vecs]
    n = len(vecs)
    outs, picks, pres = [], [], []
    uniform = is_uniform(layer)
    for i in range(n):
        if uniform:
            best = list(range(n))
        else:
            k = keys[i]
            scores = [sum((a * b for a, b in zip(k, q)), ZERO) for q in queries]
            top = max(scores)
            best = [j for j in range(n) if scores[j] == top]
        total = sum(counts[j] for j in best)
        a = [ZERO] * layer.value.out_dim
        for j in best:
            c = counts[j]
            for t, val in enumerate(values[j]):
                if val:
                    a[t] += c * val
        a = tuple(x / total for x in a)
        rec = [] if record else None
        outs.append(eval_ffn(layer.net, vecs[i] + a, rec))
        picks.append(best)
        pres.append(tuple(rec) if record else None)
    return outs, picks, pres


def _check_word(model: AhatModel, word: Sequence[str]) -> tuple:
    word = tuple(word)
    if not word:
        raise EmptyWordError("the empty word has no defined verdict")
    for a in word:
        if a not in model.alphabet:
            raise AlphabetError(f"letter {a!r} is not in the alphabet {list(model.alphabet)}")
    if model.uses_end_marker:
        word = word + (model.end_marker,)
    return word


def _merge(vecs: list, groups: list) -> tuple[list, list]:
    """Merge classes whose vectors became equal."""
    index: dict = {}
    new_vecs, new_groups = [], []
    for v, g in zip(vecs, groups):
        j = index.get(v)
        if j is None:
            index[v] = len(new_vecs)
            new_vecs.append(v)
            new_groups.append(list(g))
        else:
            new_groups[j].extend(g)
    return new_vecs, new_groups


def run_ahat(model: AhatModel, word: Sequence[str]) -> tuple[bool, EvalTrace]:
    """Run ``model`` on ``word`` (end marker appended internally)."""
    full = _check_word(model, word)
    n = len(full)
    groups_by_letter: dict = {}
    for pos, a in enumerate(full):
        groups_by_letter.setdefault(a, []).append(pos)
    vecs = [model.input_vector(a) for a in groups_by_letter]
    groups = list(groups_by_letter.values())
    vecs, groups = _merge(vecs, groups)

    def expand(per_class):
        out = [None] * n
        for val, g in zip(per_class, groups):
            for pos in g:
                out[pos] = val
        return out

    trace = EvalTrace(full, [expand(vecs)], [], [])
    for layer in model.layers:
        counts = [len(g) for g in groups]
        outs, picks, pres = _layer_on_classes(layer, vecs, counts, True)
        sets = [frozenset(p for j in best for p in groups[j]) for best in picks]
        trace.argmax.append(expand(sets))
        trace.ffn_pre.append(expand(pres))
        trace.activations.append(expand(outs))
        vecs, groups = _merge(outs, groups)
    return trace.output[0] > 0, trace


def accepts(model: AhatModel, word: Sequence[str]) -> bool:
    """Verdict only; skips building the trace."""
    return accepts_counts(model, _counts_of(_check_word(model, word)))


def _counts_of(full: tuple) -> dict:
    counts: dict = {}
    for a in full:
        counts[a] = counts.get(a, 0) + 1
    return counts


def accepts_counts(model: AhatModel, counts: Mapping[str, int], last: str | None = None) -> bool:
    """Verdict for a word with the given letter counts.

    ``counts`` must include the end marker when the model uses one. ``last``
    names the letter in the final position (the end marker by default, or
    the last letter of the canonical word when there is none). Because the
    model has no positional information, order is otherwise irrelevant.
    """
    letters = [a for a in counts if counts[a] > 0]
    if not letters:
        raise EmptyWordError("the empty word has no defined verdict")
    if last is None:
        if model.uses_end_marker:
            last = model.end_marker
        else:
            order = {a: i for i, a in enumerate(model.symbols)}
            last = max(letters, key=order.__getitem__)
    vecs = [model.input_vector(a) for a in letters]
    groups = [[a] for a in letters]
    weights = {a: counts[a] for a in letters}
    vecs, groups = _merge(vecs, groups)
    for layer in model.layers:
        cnt = [sum(weights[a] for a in g) for g in groups]
        outs, _, _ = _layer_on_classes(layer, vecs, cnt, False)
        vecs, groups = _merge(outs, groups)
    for v, g in zip(vecs, groups):
        if last in g:
            return v[0] > 0
    raise AlphabetError(f"letter {last!r} does not occur")


def tie_report(model: AhatModel, word: Sequence[str]) -> list:
    """``|P_i|`` for every layer (outer) and position (inner)."""
    _, trace = run_ahat(model, word)
    return [[len(p) for p in layer] for layer in trace.argmax]


def eval_aha_layer(layer: AhaLayer, seq: Sequence[Sequence]) -> tuple[list, list]:
    """Apply one layer to a sequence. Returns outputs and argmax position sets."""
    seq = [tuple(x) for x in seq]
    if not seq:
        raise EmptyWordError("a layer needs at least one position")
    for x in seq:
        if len(x) != layer.in_dim:
            raise DimensionError(f"layer expects dimension {layer.in_dim}, got {len(x)}")
    groups_by_vec: dict = {}
    for pos, x in enumerate(seq):
        groups_by_vec.setdefault(x, []).append(pos)
    vecs = list(groups_by_vec)
    groups = list(groups_by_vec.values())
    outs, picks, _ = _layer_on_classes(layer, vecs, [len(g) for g in groups], False)
    out_seq = [None] * len(seq)
    sets = [None] * len(seq)
    for v, best, g in zip(outs, picks, groups):
        chosen = frozenset(p for j in best for p in groups[j])
        for pos in g:
            out_seq[pos] = v
            sets[pos] = chosen
    return out_seq, sets


def run_positions(model: AhatModel, word: Sequence[str]) -> Vector:
    """Reference evaluator: every position and every score, no sharing.

    Quadratic in the word length. Returns the final vector of the last
    position. Used to cross-check the class-sharing evaluator.
    """
    full = _check_word(model, word)
    seq = [model.input_vector(a) for a in full]
    for layer in model.layers:
        keys = [layer.key.apply(x) for x in seq]
        queries = [layer.query.apply(x) for x in seq]
        values = [layer.value.apply(x) for x in seq]
        out = []
        for i, x in enumerate(seq):
            scores = [sum((a * b for a, b in zip(keys[i], q)), ZERO) for q in queries]
            top = max(scores)
            chosen = [j for j, s in enumerate(scores) if s == top]
            a = tuple(
                sum((values[j][t] for j in chosen), ZERO) / len(chosen) for t in range(layer.value.out_dim)
            )
            out.append(eval_ffn(layer.net, x + a))
        seq = out
    return seq[-1]
