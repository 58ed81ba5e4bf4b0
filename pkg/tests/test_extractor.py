import pytest
from hypothesis import HealthCheck, assume, given, settings

from ahatc.compiler import compile_poly_gt0, compile_qfpa_one_layer, compile_semialg
from ahatc.core import RELU, accepts, accepts_counts, run_ahat
from ahatc.dsl import parse_polynomial
from ahatc.extractor import (
    POS,
    BranchBudgetExceeded,
    ExtractionError,
    SymbolicRational,
    clear_denominators,
    explore,
    extract_qfpa_one_layer,
    extract_semialg,
)
from ahatc.formulas import And, Atom, Or, canonical_word, evaluate, is_qfpa, normalize_semialg
from ahatc.polynomial import Polynomial
from ahatc.verifier import check_equivalence, enumerate_parikh

from conftest import AB, qfpa, semialg
from test_core import random_models


def P(text, alphabet=AB):
    return parse_polynomial(text, alphabet)


def model_verdict(model, v):
    if model.uses_end_marker:
        return accepts_counts(model, dict(zip(model.alphabet, v), **{model.end_marker: 1}))
    return accepts(model, canonical_word(v, model.alphabet))


def test_maj_round_trip(maj_sal):
    f = extract_semialg(maj_sal)
    rep = check_equivalence(maj_sal, semialg("x_a - x_b > 0"), 20)
    assert rep.ok
    for v in enumerate_parikh(2, 20):
        assert evaluate(f, v) == (v[0] > v[1])


def test_sqrt_round_trip(sqrt_sal, sqrt_nem):
    for model in (sqrt_sal, sqrt_nem):
        f = extract_semialg(model)
        for v in enumerate_parikh(2, 20):
            assert evaluate(f, v) == (2 * v[0] ** 2 < sum(v) ** 2)


def test_constant_models():
    reject = compile_poly_gt0(P("-1"))
    f = extract_semialg(reject)
    assert f == Or(())
    accept = compile_qfpa_one_layer(qfpa("true"), AB)
    g = extract_qfpa_one_layer(accept)
    assert all(evaluate(g, v) for v in enumerate_parikh(2, 10, min_sum=0))


@pytest.mark.parametrize(
    "text",
    ["x_a <= 3", "x_b + 1 <= x_a", "2*x_a - 3*x_b <= 1/2 | x_a = 4", "!(x_a <= 2) & x_b <= 5", "false"],
)
def test_qfpa_round_trip(text):
    f = qfpa(text)
    g = extract_qfpa_one_layer(compile_qfpa_one_layer(f, AB))
    assert is_qfpa(g)
    for v in enumerate_parikh(2, 20):
        assert evaluate(g, v) == evaluate(f, v)


def test_zero_vector_is_covered():
    # with an end marker the lone marker is a valid input, so the formula speaks about it too
    m = compile_qfpa_one_layer(qfpa("x_a <= 3"), AB)
    assert evaluate(extract_qfpa_one_layer(m), (0, 0)) is True


def test_qfpa_extraction_needs_one_layer(sqrt_sal, maj_nem):
    with pytest.raises(ExtractionError):
        extract_qfpa_one_layer(sqrt_sal)
    with pytest.raises(ExtractionError):
        extract_qfpa_one_layer(maj_nem)


def test_budget(sqrt_nem):
    with pytest.raises(BranchBudgetExceeded) as info:
        extract_semialg(sqrt_nem, branch_budget=1)
    assert info.value.budget == 1
    assert info.value.estimate_log2 > 0


def test_clear_denominators():
    vs = AB
    x, y = Polynomial.var(vs, "a"), Polynomial.var(vs, "b")
    q = SymbolicRational(x - y, {}).divide_by(x + y)
    assert clear_denominators(q, ">") == Atom(x - y, ">")
    r = SymbolicRational(2 * x, {}).divide_by(x + 1)
    diff = q - r
    atom = clear_denominators(diff, "=")
    # the sign of p/q - r/s matches that of the cross product
    for v in enumerate_parikh(2, 8):
        assert (atom.poly(v) == 0) == (diff.evaluate(v) == 0)
        assert (atom.poly(v) > 0) == (diff.evaluate(v) > 0)
    ge = normalize_semialg(Atom(x - y, ">="))
    for v in enumerate_parikh(2, 8):
        assert evaluate(ge, v) == (v[0] >= v[1])


def _check_branches(model, bound):
    ext = explore(model)
    vs = model.alphabet
    if model.uses_end_marker:
        zero = (0,) * len(vs)
        covering = [b for b in ext.branches if b.guard_holds(zero, vs)]
        assert covering and all(b.accept == accepts_counts(model, {model.end_marker: 1}) for b in covering)
    for v in enumerate_parikh(len(vs), bound):
        matching = [b for b in ext.branches if b.guard_holds(v, vs)]
        assert matching, f"no branch covers {v}"
        if model.uses_end_marker:
            word = [a for a, n in zip(vs, v) for _ in range(n)]
        else:
            word = list(canonical_word(v, vs))
        ok, trace = run_ahat(model, word)
        full = trace.word
        where = {}
        for i, a in enumerate(full):
            where.setdefault(a, i)
        for b in matching:
            assert b.accept == ok
            for (li, c), letters in b.attention.items():
                got = trace.argmax[li][where[c]]
                assert got == frozenset(i for i, a in enumerate(full) if a in letters)
            for (li, c, fl, node), signs in b.relu_signs.items():
                z = trace.ffn_pre[li][where[c]][fl][node]
                sign = 1 if z > 0 else -1 if z < 0 else 0
                assert sign in signs
                # the branch fixed the ReLU regime
                assert signs <= {POS} or POS not in signs
    return ext


def test_branch_soundness_and_completeness(maj_sal, sqrt_sal, sqrt_nem, maj_nem, bound_q1):
    for model in (maj_sal, sqrt_sal, sqrt_nem, maj_nem, bound_q1):
        ext = _check_branches(model, 12)
        assert ext.explored >= len(ext.branches)


def test_relu_nodes_are_recorded(sqrt_nem):
    ext = explore(sqrt_nem)
    n_relu = sum(m.out_dim for layer in sqrt_nem.layers for m, act in layer.net.layers if act == RELU)
    assert n_relu == 1
    assert all(b.relu_signs for b in ext.branches)
    assert any(len(b.attention) > 0 for b in ext.branches)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_models())
def test_random_model_round_trip(model):
    try:
        f = extract_semialg(model, branch_budget=4000)
    except BranchBudgetExceeded:
        assume(False)
    for v in enumerate_parikh(len(model.alphabet), 6, min_sum=1):
        assert evaluate(f, v) == model_verdict(model, v), v


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_models())
def test_random_model_branches(model):
    try:
        _check_branches(model, 5)
    except BranchBudgetExceeded:
        assume(False)


@pytest.mark.parametrize(
    "text",
    ["x_a*x_b - 2 > 0 | x_a - 3*x_b > 0", "(x_a - x_b)^2 - 1 > 0 & x_b > 0", "!(x_a^2 - x_b > 0)"],
)
def test_semialg_round_trip(text):
    f = semialg(text)
    g = extract_semialg(compile_semialg(f, AB))
    assert isinstance(g, (And, Or, Atom))
    for v in enumerate_parikh(2, 15):
        assert evaluate(g, v) == evaluate(f, v)
