import json
from math import comb

import pytest

from ahatc.compiler import compile_poly_gt0, compile_qfpa_one_layer, compile_semialg
from ahatc.core import accepts
from ahatc.dsl import parse_polynomial
from ahatc.verifier import (
    bounded_emptiness,
    check_equivalence,
    check_permutation_invariance,
    enumerate_parikh,
)

from conftest import AB, qfpa, semialg


def test_enumeration_order():
    assert list(enumerate_parikh(2, 2)) == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert list(enumerate_parikh(1, 3)) == [(1,), (2,), (3,)]
    assert list(enumerate_parikh(3, 1)) == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert list(enumerate_parikh(2, 1, min_sum=0))[0] == (0, 0)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_enumeration_count(m):
    for n in (1, 5, 17, 30):
        vs = list(enumerate_parikh(m, n))
        assert len(vs) == comb(n + m, m) - 1
        assert len(set(vs)) == len(vs)
        assert all(1 <= sum(v) <= n and min(v) >= 0 for v in vs)


def test_enumeration_needs_letters():
    with pytest.raises(ValueError):
        list(enumerate_parikh(0, 3))


def test_maj_equivalence(maj_sal):
    rep = check_equivalence(maj_sal, semialg("x_a - x_b > 0"), 20)
    assert rep.ok and rep.vectors_checked == comb(22, 2) - 1


def test_maj_boundary_mismatches(maj_sal):
    rep = check_equivalence(maj_sal, semialg("x_a - x_b + 1 > 0"), 20)
    assert rep.mismatches
    assert all(v[0] == v[1] and got is False and want is True for v, got, want in rep.mismatches)
    assert len(rep.mismatches) == 10


def test_equivalence_is_deterministic(sqrt_sal):
    f = semialg("(x_a + x_b)^2 - 2*x_a^2 > 0")
    r1 = check_equivalence(sqrt_sal, f, 8, permutation_trials=5, seed=3)
    r2 = check_equivalence(sqrt_sal, f, 8, permutation_trials=5, seed=3)
    assert r1.to_dict() == r2.to_dict()
    assert r1.permutation_trials == 50 and r1.ok


def test_report_dict_is_json(maj_sal):
    rep = check_equivalence(maj_sal, semialg("x_a - x_b >= 0"), 4, permutation_trials=2, seed=9)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["ok"] is False and d["seed"] == 9 and d["bound"] == 4
    assert [1, 1] in [m[0] for m in d["mismatches"]]


def test_equivalence_needs_positive_bound(maj_sal):
    with pytest.raises(ValueError):
        check_equivalence(maj_sal, semialg("true"), 0)


def test_emptiness_witness():
    rep = bounded_emptiness(compile_qfpa_one_layer(qfpa("x_a > 2"), AB), 10)
    assert rep.witness == (3, 0)
    assert rep.conclusive is False


def test_emptiness_none():
    rep = bounded_emptiness(compile_poly_gt0(parse_polynomial("-1", AB)), 10)
    assert rep.witness is None
    assert rep.conclusive is False
    assert "not examined" in rep.note
    assert rep.to_dict()["witness"] is None


def test_emptiness_below_bound():
    rep = bounded_emptiness(compile_qfpa_one_layer(qfpa("x_a > 2"), AB), 2)
    assert rep.witness is None


def test_pythagorean_emptiness(pyth):
    rep = bounded_emptiness(pyth, 12)
    # least by graded order; the trivial triples come first
    assert rep.witness == (1, 0, 1)
    assert rep.zero_vector_accepted is True
    strict = bounded_emptiness(pyth, 12, min_component=1)
    assert strict.witness in {(3, 4, 5), (4, 3, 5)}
    assert strict.witness == (4, 3, 5)


def test_sqrt_permutation_invariance(sqrt_nem, sqrt_sal):
    for model in (sqrt_nem, sqrt_sal):
        rep = check_permutation_invariance(model, 10, 100, seed=0)
        assert rep.ok and rep.trials == 1000 and rep.words == 10


def test_maj_same_parikh_same_verdict(maj_sal, maj_nem):
    for model in (maj_sal, maj_nem):
        assert accepts(model, "aab") == accepts(model, "aba") == accepts(model, "baa") is True


def test_permutation_check_on_three_letters():
    m = compile_semialg(semialg("x_a*x_c - x_b > 0", ("a", "b", "c")), ("a", "b", "c"))
    rep = check_permutation_invariance(m, 8, 20, seed=5, words_per_length=2)
    assert rep.ok and rep.words == 16
