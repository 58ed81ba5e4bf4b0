"""Brute-force certification of models against formulas."""

from __future__ import annotations

import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

from .compiler import CompiledLanguage, _counts, membership_via_projection
from .core import AhatModel, accepts, accepts_counts, run_ahat, run_positions
from .formulas import canonical_word, evaluate


def enumerate_parikh(m: int, max_sum: int, min_sum: int = 1) -> Iterator[tuple]:
    """Vectors in ``N^m`` with ``min_sum <= sum <= max_sum``.

    Ordered by sum, then lexicographically descending, e.g. for ``m = 2``:
    ``(1,0), (0,1), (2,0), (1,1), (0,2)``.
    """
    if m < 1:
        raise ValueError("need at least one letter")
    for s in range(min_sum, max_sum + 1):
        yield from _compositions(m, s)


def _compositions(m: int, s: int) -> Iterator[tuple]:
    if m == 1:
        yield (s,)
        return
    for first in range(s, -1, -1):
        for rest in _compositions(m - 1, s - first):
            yield (first,) + rest


def thread_count() -> int:
    try:
        n = int(os.environ.get("AHATC_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, min(n, os.cpu_count() or 1))


def _letters(target) -> tuple:
    if isinstance(target, CompiledLanguage):
        return tuple(target.variable_letters)
    return tuple(target.alphabet)


def verdict(target, v: Sequence[int]) -> bool:
    """Membership of the count vector ``v`` in the target's language."""
    if isinstance(target, CompiledLanguage):
        return membership_via_projection(target, v)
    return accepts(target, canonical_word(v, target.alphabet))


def _chunk_verdicts(args) -> list:
    target, vectors = args
    return [verdict(target, v) for v in vectors]


def _verdicts(target, vectors: list) -> list:
    n = thread_count()
    if n == 1 or len(vectors) < 64:
        return [verdict(target, v) for v in vectors]
    size = (len(vectors) + n - 1) // n
    chunks = [(target, vectors[i:i + size]) for i in range(0, len(vectors), size)]
    with ProcessPoolExecutor(max_workers=n) as pool:
        parts = list(pool.map(_chunk_verdicts, chunks))
    return [x for part in parts for x in part]


def _full_word(target, v) -> list | None:
    """Word realizing ``v`` (with markers and forced witnesses for compiled languages)."""
    if isinstance(target, CompiledLanguage):
        ys = ()
        if target.fresh_letters:
            if target.reduction is None:
                return None
            forced = target.reduction.assignment(v)
            ys = [forced[n] for n in target.fresh_letters]
            if any(y < 0 for y in ys):
                return None
        counts = _counts(target, v, ys)
        counts.pop(target.model.end_marker, None)
        word = []
        for a in target.model.alphabet:
            word += [a] * counts.get(a, 0)
        return word
    if not any(v):
        return None
    return list(canonical_word(v, target.alphabet))


def _model(target) -> AhatModel:
    return target.model if isinstance(target, CompiledLanguage) else target


@dataclass
class EquivalenceReport:
    bound: int
    vectors_checked: int
    mismatches: list = field(default_factory=list)  # (vector, model verdict, formula verdict)
    permutation_trials: int = 0
    permutation_failures: list = field(default_factory=list)  # (word, permuted word)
    seed: int = 0

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.permutation_failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mismatches"] = [list(m) for m in self.mismatches]
        d["permutation_failures"] = [[" ".join(a), " ".join(b)] for a, b in self.permutation_failures]
        d["ok"] = self.ok
        return d


def check_equivalence(
    target,
    formula,
    max_sum: int,
    permutation_trials: int = 0,
    seed: int = 0,
    samples: int = 10,
    include_zero: bool = False,
) -> EquivalenceReport:
    """Compare the target with ``formula`` on every vector up to ``max_sum``.

    ``permutation_trials`` random reorderings of the realizing word are
    additionally run for ``samples`` randomly chosen vectors, using the
    position-level reference evaluator.
    """
    if max_sum < 1:
        raise ValueError("max_sum must be at least 1")
    m = len(_letters(target))
    vectors = list(enumerate_parikh(m, max_sum, 0 if include_zero else 1))
    got = _verdicts(target, vectors)
    report = EquivalenceReport(max_sum, len(vectors), seed=seed)
    for v, g in zip(vectors, got):
        want = evaluate(formula, v)
        if g != want:
            report.mismatches.append((v, g, want))
    if permutation_trials:
        rng = random.Random(seed)
        pool = [v for v in vectors if any(v)]
        chosen = rng.sample(pool, min(samples, len(pool)))
        for v in chosen:
            word = _full_word(target, v)
            if word is None:
                continue
            _permutation_trials(_model(target), word, permutation_trials, rng, report)
    return report


def _permutation_trials(model: AhatModel, word: list, k: int, rng: random.Random, report) -> None:
    base = run_positions(model, word)[0] > 0
    for _ in range(k):
        perm = list(word)
        rng.shuffle(perm)
        report.permutation_trials += 1
        if (run_positions(model, perm)[0] > 0) != base:
            report.permutation_failures.append((tuple(word), tuple(perm)))


@dataclass
class PermutationReport:
    max_len: int
    words: int
    trials: int
    failures: list
    seed: int

    @property
    def ok(self) -> bool:
        return not self.failures


def check_permutation_invariance(
    model: AhatModel, max_len: int, trials: int, seed: int = 0, words_per_length: int = 1
) -> PermutationReport:
    """Random words of every length up to ``max_len``, each reordered ``trials`` times."""
    rng = random.Random(seed)
    report = EquivalenceReport(0, 0, seed=seed)
    words = 0
    for n in range(1, max_len + 1):
        for _ in range(words_per_length):
            word = [rng.choice(model.alphabet) for _ in range(n)]
            words += 1
            _permutation_trials(model, word, trials, rng, report)
    return PermutationReport(max_len, words, report.permutation_trials, report.permutation_failures, seed)


@dataclass
class EmptinessReport:
    max_sum: int
    witness: tuple | None
    zero_vector_accepted: bool | None
    conclusive: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def bounded_emptiness(target, max_sum: int, min_component: int = 0) -> EmptinessReport:
    """Least accepted vector (by sum, then descending lexicographic order).

    Only vectors whose components are all at least ``min_component`` are
    considered. Finding nothing says nothing about larger vectors, so the
    report is never conclusive. A witness is re-checked with the full
    evaluator before it is returned.
    """
    if max_sum < 1:
        raise ValueError("max_sum must be at least 1")
    m = len(_letters(target))
    witness = None
    for v in enumerate_parikh(m, max_sum):
        if min(v) < min_component:
            continue
        if verdict(target, v):
            word = _full_word(target, v)
            if word is None or not run_ahat(_model(target), word)[0]:
                raise AssertionError(f"witness {v} failed re-verification")
            witness = v
            break
    zero = None
    if isinstance(target, CompiledLanguage):
        zero = membership_via_projection(target, (0,) * m)
    elif target.uses_end_marker:
        counts = {target.end_marker: 1}
        zero = accepts_counts(target, counts)
    if witness is None:
        note = f"no accepted vector with sum <= {max_sum}; larger vectors were not examined"
    else:
        note = "witness found by bounded search"
    return EmptinessReport(max_sum, witness, zero, False, note)
