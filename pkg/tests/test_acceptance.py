"""End-to-end checks, one per acceptance criterion; each records a PASS/FAIL line."""

import random
from itertools import product

from ahatc.baselines import (
    LNot,
    LOr,
    Next,
    Until,
    equal_counts_machine,
    l_and,
    ltl_count_membership,
    ltl_truth_vector,
    non_semilinear_machine,
    non_semilinear_word,
    parse_ltl_count,
    run_smcm,
)
from ahatc.compiler import (
    compile_diophantine,
    compile_poly_gt0,
    compile_qfpa_one_layer,
    compile_semialg,
    intersection,
    membership_via_projection,
    union,
)
from ahatc.core import accepts, accepts_counts, is_uniform, rat
from ahatc.dsl import parse_polynomial
from ahatc.extractor import extract_qfpa_one_layer, extract_semialg
from ahatc.formulas import evaluate, normalize_semialg, reduce_to_simple_quadratics
from ahatc.polynomial import homogenize, rationalize_polynomial
from ahatc.verifier import bounded_emptiness, check_equivalence, check_permutation_invariance, enumerate_parikh

from conftest import AB, maj_count, qfpa, report_line, semialg, words_up_to
from test_baselines import in_family, perturb
from test_extractor import _check_branches

ABC = ("a", "b", "c")

SEMIALG = [
    ("(x_a + x_b)^2 - 2*x_a^2 > 0", AB),
    ("x_a - x_b > 0", AB),
    ("x_a^2 - 3*x_b > 0 | x_b^4 - x_a^3 > 0", AB),
    ("x_a*x_b - 6 >= 0 & !(x_a - x_b = 0)", AB),
    ("(x_a - 2*x_b)^2 - x_a < 0", AB),
    ("x_a^3*x_b - 2*x_b^2 + 1 > 0 & x_a <= 7", AB),
    ("x_a - x_b = 0", AB),
    ("x_a*x_c - x_b^2 > 0 | x_c = 0", ABC),
    ("x_a + x_b - 2*x_c > 0 & x_a^2 - x_b^2 + x_c < 0", ABC),
    ("!(x_a*x_b*x_c - 2 > 0) | x_a^2*x_b^2 - x_c^3 > 0", ABC),
]

QFPA = [
    "x_a <= 3",
    "x_a > 2",
    "x_b + 1 <= x_a",
    "2*x_a - 3*x_b <= 1/2 | x_a = 4",
    "!(x_a <= 2) & x_b <= 5",
    "x_a = x_b",
    "3*x_a + 2*x_b >= 11 & x_a - x_b < 3",
    "x_a - 5 <= 0 | 7 <= x_b",
    "true",
    "false",
    "1/3*x_a + 1/4*x_b > 2 & !(x_b = 3)",
    "x_a < 1",
]

PAIRS = [
    ("x_a - x_b > 0", "(x_a + x_b)^2 - 2*x_a^2 > 0"),
    ("x_a > 2", "x_b > 2"),
    ("x_a*x_b - 4 > 0", "x_a - 2*x_b > 0"),
    ("x_a = x_b", "x_a + x_b > 5"),
    ("x_a^2 - x_b > 0", "x_b^2 - x_a > 0"),
    ("x_a <= 3", "x_b <= 3"),
    ("x_a - 2*x_b >= 0", "!(x_a > 6)"),
    ("x_a*x_b = 0", "x_a + x_b > 4"),
    ("(x_a - x_b)^2 - 4 > 0", "x_a - x_b > 0"),
    ("x_a^3 - x_b^2 < 0", "x_a >= 1"),
]


def counts(v, letters=AB):
    return dict(zip(letters, v), **{"$": 1})


def test_criterion_1_semialg_compiler():
    failures = []
    for text, letters in SEMIALG:
        f = semialg(text, letters)
        m = compile_semialg(f, letters)
        rep = check_equivalence(m, f, 30)
        if not rep.ok or not all(is_uniform(layer) for layer in m.layers):
            failures.append(text)
    ok = not failures
    report_line(1, ok, f"{len(SEMIALG)} formulas agree to sum 30, all layers uniform" + (f"; failed {failures}" if failures else ""))
    assert ok


def test_criterion_2_sqrt_two_layer(sqrt_nem):
    rep = check_equivalence(sqrt_nem, semialg("(x_a + x_b)^2 - 2*x_a^2 > 0"), 30)
    ok = rep.ok and len(sqrt_nem.layers) == 2 and not sqrt_nem.uses_end_marker
    report_line(2, ok, f"hand-built SQRT model, {rep.vectors_checked} vectors, {len(rep.mismatches)} mismatches")
    assert ok


def test_criterion_3_one_layer_round_trip():
    failures = []
    for text in QFPA:
        f = qfpa(text)
        m = compile_qfpa_one_layer(f, AB)
        g = extract_qfpa_one_layer(m)
        if len(m.layers) != 1 or any(evaluate(g, v) != evaluate(f, v) for v in enumerate_parikh(2, 20)):
            failures.append(text)
    ok = not failures
    report_line(3, ok, f"{len(QFPA)} QFPA formulas round-trip to sum 20" + (f"; failed {failures}" if failures else ""))
    assert ok


def test_criterion_4_multi_layer_extraction(maj_sal, sqrt_sal):
    ok = True
    for model, src in ((maj_sal, "x_a - x_b > 0"), (sqrt_sal, "(x_a + x_b)^2 - 2*x_a^2 > 0")):
        g, f = extract_semialg(model), semialg(src)
        ok &= all(evaluate(g, v) == evaluate(f, v) for v in enumerate_parikh(2, 15))
        _check_branches(model, 12)
    report_line(4, ok, "MAJ and SQRT extractions match to sum 15; branch invariants hold to sum 12")
    assert ok


def test_criterion_5_quadratic_pipeline():
    p = parse_polynomial("x_a^2 + x_b^2 - x_c^2", ABC)
    red = reduce_to_simple_quadratics(p)
    c = compile_diophantine(p)
    assert c.system == list(red.system)
    bad = [v for v in enumerate_parikh(3, 25, min_sum=0)
           if membership_via_projection(c, v) != (v[0] ** 2 + v[1] ** 2 == v[2] ** 2)]
    word = [a for a in c.model.alphabet if a != "$"
            for _ in range({**dict(zip(ABC, (3, 4, 5))), **red.assignment((3, 4, 5)),
                            **{mk: 1 for mk in c.marker_letters}}.get(a, 0))]
    dup = all(not accepts(c.model, word + [mk]) for mk in c.marker_letters)
    ok = (not bad and len(c.model.layers) == 2 and membership_via_projection(c, (3, 4, 5))
          and not membership_via_projection(c, (3, 4, 6)) and accepts(c.model, word) and dup)
    report_line(5, ok, f"Pythagorean language exact to sum 25 ({len(bad)} mismatches), 2 layers, duplicated markers rejected")
    assert ok


def test_criterion_6_closure():
    failures = 0
    for fa, fb in PAIRS:
        A, B = semialg(fa), semialg(fb)
        ma, mb = compile_semialg(A, AB), compile_semialg(B, AB)
        u, i = union(ma, mb), intersection(ma, mb)
        for v in enumerate_parikh(2, 20):
            a, b = evaluate(A, v), evaluate(B, v)
            failures += accepts_counts(u, counts(v)) != (a or b)
            failures += accepts_counts(i, counts(v)) != (a and b)
    ok = failures == 0
    report_line(6, ok, f"{len(PAIRS)} pairs, union and intersection to sum 20, {failures} mismatches")
    assert ok


def test_criterion_7_permutation_invariance(maj_sal, sqrt_sal, maj_nem, sqrt_nem, bound_q1, pyth):
    models = [maj_sal, sqrt_sal, maj_nem, sqrt_nem, bound_q1, pyth.model,
              compile_poly_gt0(parse_polynomial("x_a*x_b - 3", AB)),
              compile_semialg(semialg(SEMIALG[9][0], ABC), ABC),
              union(maj_sal, bound_q1)]
    failures, trials = 0, 0
    for seed, m in enumerate(models):
        rep = check_permutation_invariance(m, 10, 100, seed=seed)
        failures += len(rep.failures)
        trials += rep.trials
    ok = failures == 0
    report_line(7, ok, f"{len(models)} models, {trials} seeded reorderings of words up to length 10, {failures} verdict changes")
    assert ok


def test_criterion_8_bounded_emptiness():
    found = bounded_emptiness(compile_qfpa_one_layer(qfpa("x_a > 2"), AB), 10)
    none = bounded_emptiness(compile_poly_gt0(parse_polynomial("-1", AB)), 10)
    ok = found.witness == (3, 0) and none.witness is None and not found.conclusive and not none.conclusive
    report_line(8, ok, f"witness {found.witness} for x_a > 2; none for -1 > 0 to sum 10; reports non-conclusive")
    assert ok


def test_criterion_9_baselines(maj_sal):
    eq = equal_counts_machine()
    eq_ok = all(run_smcm(eq, w) == (w.count("a") == w.count("b")) for w in words_up_to("ab", 10, min_len=0))
    ns = non_semilinear_machine()
    fam_ok = all(run_smcm(ns, "a" * n + ("bc" * p + "de" * q) * m + "f" * r)
                 == in_family("a" * n + ("bc" * p + "de" * q) * m + "f" * r)
                 for n, p, q, r, m in product(range(5), repeat=5))
    fam_ok &= all(run_smcm(ns, non_semilinear_word(n, m)) for n in range(2, 5) for m in range(2, 5))
    rng = random.Random(1)
    family = [non_semilinear_word(n, m) for n in range(2, 5) for m in range(2, 5)]
    rejected = 0
    while rejected < 1000:
        w = perturb(rng.choice(family), rng)
        if in_family(w):
            continue
        fam_ok &= not run_smcm(ns, w)
        rejected += 1
    maj = parse_ltl_count("->#b + 1 <= ->#a", AB)[0]
    ltl_ok = all(ltl_count_membership(maj, w) == accepts(maj_sal, w) == maj_count(w) for w in words_up_to("ab", 10))
    phi, psi = parse_ltl_count("a | <-#b >= 2", AB)[0], parse_ltl_count("X b & ->#a <= 2", AB)[0]
    u = Until(phi, psi)
    unfold = LOr(psi, l_and(phi, Next(u)))
    for _ in range(300):
        w = [rng.choice(AB) for _ in range(rng.randint(1, 8))]
        ltl_ok &= ltl_truth_vector(u, w) == ltl_truth_vector(unfold, w)
        ltl_ok &= ltl_truth_vector(LNot(LNot(phi)), w) == ltl_truth_vector(phi, w)
    ok = eq_ok and fam_ok and ltl_ok
    report_line(9, ok, f"equal counts {eq_ok}, non-semilinear family and 1000 perturbations {fam_ok}, LTL[Count] {ltl_ok}")
    assert ok


def test_criterion_10_normalization_algebra():
    failures = 0
    for text in [t for t, letters in SEMIALG if letters == AB] + ["!(x_a - x_b <= 1 & !(x_b >= x_a))"]:
        f = semialg(text)
        g = normalize_semialg(f)
        failures += sum(evaluate(g, v) != evaluate(f, v) for v in enumerate_parikh(2, 20, min_sum=0))
    polys = ["x_a^2 - x_b", "3*x_a*x_b - x_b^2 + 2", "x_a^3 - 1/2*x_b + 4", "x_a - x_b", "-7"]
    for text in polys:
        p = parse_polynomial(text, AB)
        q = homogenize(p)
        failures += not q.is_homogeneous()
        failures += sum(q((1,) + x) != p(x) for x in product(range(7), repeat=2))
        r = rationalize_polynomial(p)
        da, db = p.degree_in(0), p.degree_in(1)
        for pt in product(range(1, 7), repeat=4):
            y, z, s, t = pt
            # same quadruple for both variables: p(y/z - s/t) scaled by (zt)^deg
            x = rat(y) / z - rat(s) / t
            val = p((x, x)) * (z * t) ** (da + db)
            failures += r(pt * 2) != val
    ok = failures == 0
    report_line(10, ok, f"normalize, homogenize and rationalize grids, {failures} failures")
    assert ok

