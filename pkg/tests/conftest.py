from itertools import product

import pytest

from ahatc.compiler import (
    compile_diophantine,
    compile_homogeneous_qfpa_nem,
    compile_qfpa_one_layer,
    compile_semialg,
    compile_sqrt_two_layer_nem,
)
from ahatc.dsl import parse_polynomial, parse_qfpa, parse_semialg

AB = ("a", "b")


def words_up_to(alphabet, n, min_len=1):
    for k in range(min_len, n + 1):
        for w in product(alphabet, repeat=k):
            yield w


def semialg(text, alphabet=AB):
    return parse_semialg(text, alphabet)


def qfpa(text, alphabet=AB):
    return parse_qfpa(text, alphabet)


def maj_count(w):
    return w.count("a") > w.count("b")


def sqrt_count(w):
    a, b = w.count("a"), w.count("b")
    return 2 * a * a < (a + b) ** 2


@pytest.fixture(scope="session")
def maj_sal():
    return compile_semialg(semialg("x_a - x_b > 0"), AB)


@pytest.fixture(scope="session")
def sqrt_sal():
    return compile_semialg(semialg("(x_a + x_b)^2 - 2*x_a^2 > 0"), AB)


@pytest.fixture(scope="session")
def maj_nem():
    return compile_homogeneous_qfpa_nem(qfpa("x_b - x_a < 0"), AB)


@pytest.fixture(scope="session")
def sqrt_nem():
    return compile_sqrt_two_layer_nem()


@pytest.fixture(scope="session")
def bound_q1():
    return compile_qfpa_one_layer(qfpa("x_a <= 3"), AB)


@pytest.fixture(scope="session")
def pyth():
    return compile_diophantine(parse_polynomial("x_a^2 + x_b^2 - x_c^2", ("a", "b", "c")))


SUMMARY = []


def report_line(n, ok, text):
    SUMMARY.append((n, f"{'PASS' if ok else 'FAIL'} criterion {n}: {text}"))


def pytest_terminal_summary(terminalreporter):
    if SUMMARY:
        terminalreporter.section("acceptance summary")
        for _, line in sorted(SUMMARY):
            terminalreporter.write_line(line)
