"""Exact checks of the Weyl algebra.

The product is cross-checked against a word-rewriting oracle that knows
nothing about the recursive reordering table: it repeatedly replaces the
first adjacent ``p x`` in a word by ``x p - i hbar`` until the word is sorted.
"""
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from moment_lab.errors import ConfigError
from moment_lab.weyl import (
    HBAR,
    ONE,
    P,
    X,
    ZERO,
    GaussianRational,
    SL2Triple,
    WeylElement,
    casimir,
    commutator,
    expand_in_weyl_basis,
    multiply,
    verify_ladder,
    weyl_monomial,
)

I = GaussianRational(Fraction(0), Fraction(1))
IH = WeylElement.scalar(I, 1)


# --- word-rewriting oracle -------------------------------------------------

def _normal_order_words(words):
    """words: dict[(word tuple, hbar power)] -> GaussianRational."""
    done = {}
    todo = list(words.items())
    while todo:
        (w, k), c = todo.pop()
        for i in range(len(w) - 1):
            if w[i] == "p" and w[i + 1] == "x":
                todo.append(((w[:i] + ("x", "p") + w[i + 2:], k), c))
                todo.append(((w[:i] + w[i + 2:], k + 1), c * GaussianRational(Fraction(0), Fraction(-1))))
                break
        else:
            key = (w.count("x"), w.count("p"), k)
            done[key] = done.get(key, GaussianRational()) + c
    return WeylElement({k: v for k, v in done.items() if v})


def _as_words(E):
    return {(("x",) * a + ("p",) * b, k): c for (a, b, k), c in E}


def _oracle_product(A, B):
    words = {}
    for (wa, ka), ca in _as_words(A).items():
        for (wb, kb), cb in _as_words(B).items():
            key = (wa + wb, ka + kb)
            words[key] = words.get(key, GaussianRational()) + ca * cb
    return _normal_order_words(words)


small_coeff = st.builds(lambda a, b: GaussianRational(Fraction(a), Fraction(b)),
                        st.integers(-3, 3), st.integers(-3, 3))
term = st.tuples(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 1)), small_coeff)
elements = st.lists(term, max_size=4).map(WeylElement)


@settings(max_examples=60, deadline=None)
@given(elements, elements)
def test_multiply_matches_word_rewriting(A, B):
    assert multiply(A, B) == _oracle_product(A, B)


@settings(max_examples=40, deadline=None)
@given(elements, elements, elements)
def test_associative_and_distributive(A, B, C):
    assert (A * B) * C == A * (B * C)
    assert A * (B + C) == A * B + A * C


# --- spec examples ---------------------------------------------------------

def test_product_examples():
    assert P * X == X * P - IH
    assert X * X == WeylElement({(2, 0, 0): 1})
    expected = WeylElement({(2, 2, 0): 1, (1, 1, 1): -4 * I, (0, 0, 2): -2})
    assert (P * P) * (X * X) == expected


def test_commutator_examples():
    t = SL2Triple.standard()
    assert commutator(X, P) == IH
    assert commutator(t.D, t.x2) == -2 * IH * t.x2
    assert commutator(t.D, t.p2) == 2 * IH * t.p2
    assert commutator(t.x2, t.p2) == 4 * IH * t.D


def test_weyl_monomial_examples():
    assert weyl_monomial(1, 0) == X
    assert weyl_monomial(2, 1) == X * P - IH * Fraction(1, 2)
    assert weyl_monomial(2, 1) == SL2Triple.standard().D
    assert weyl_monomial(3, 2) == X * P * P - IH * P
    with pytest.raises(ConfigError):
        weyl_monomial(2, 3)


def test_casimir_examples():
    value = WeylElement.scalar(Fraction(-3, 4), 2)
    t = SL2Triple.standard()
    assert casimir(t) == value
    assert casimir(t.relabel()) == value
    assert casimir(t).at_hbar(0) == ZERO
    assert casimir(t).at_hbar(2) == -3


def test_relabel_is_canonical():
    # x -> p, p -> -x preserves [x, p] = i hbar
    assert commutator(P, -X) == IH
    t = SL2Triple.standard().relabel()
    assert t.x2 == P * P and t.p2 == X * X
    assert t.D == -SL2Triple.standard().D


def test_triple_self_adjoint():
    assert SL2Triple.standard().is_self_adjoint()
    assert (X * P).adjoint() == P * X
    assert not (X * P) == (X * P).adjoint()


@pytest.mark.parametrize("n,l", [(2, 0), (1, 1), (6, 3)])
def test_ladder_examples(n, l):
    rep = verify_ladder(n, l)
    assert rep.passed, rep.failures()


def test_ladder_named_cases():
    D = SL2Triple.standard().D
    assert commutator(P * P, X * X) == -4 * IH * D
    assert commutator(X * X, P) == 2 * IH * X


def test_ladder_all_up_to_eight():
    assert all(verify_ladder(n, l).passed for n in range(9) for l in range(n + 1))


def test_ladder_reports_residual_on_bad_identity():
    # a broken identity leaves a nonzero residual element
    o = weyl_monomial(3, 1)
    D = SL2Triple.standard().D
    wrong = commutator(D, o) - IH * (2 * 1 - 3 + 1) * o
    assert wrong == -IH * o and wrong


def test_jacobi_random_triples():
    rng = random.Random(20240611)

    def draw():
        terms = {}
        for _ in range(rng.randint(1, 4)):
            a = rng.randint(0, 4)
            b = rng.randint(0, 4 - a)
            terms[(a, b, 0)] = rng.randint(-3, 3)
        return WeylElement(terms)

    for _ in range(100):
        A, B, C = draw(), draw(), draw()
        total = (commutator(A, commutator(B, C)) + commutator(B, commutator(C, A))
                 + commutator(C, commutator(A, B)))
        assert total == ZERO


@pytest.mark.parametrize("n", range(9))
def test_weyl_monomials_self_adjoint(n):
    for l in range(n + 1):
        o = weyl_monomial(n, l)
        assert o == o.adjoint()


@pytest.mark.parametrize("n", range(9))
def test_degree_grading(n):
    """Commutators with x^2, p^2, D keep span{O_{n,l}} and raise/lower l by one."""
    t = SL2Triple.standard()
    for l in range(n + 1):
        o = weyl_monomial(n, l)
        for g, shift, factor in ((t.D, 0, 2 * l - n), (t.p2, 1, -2 * (n - l)), (t.x2, -1, 2 * l)):
            coeffs, rem = expand_in_weyl_basis(commutator(g, o), n)
            assert rem == ZERO
            for j, c in enumerate(coeffs):
                want = IH * factor if j == l + shift else ZERO
                assert c == want


def test_expand_detects_outside_module():
    coeffs, rem = expand_in_weyl_basis(X * X * X, 2)
    assert rem == X * X * X


def test_hierarchy_coefficients_from_commutators():
    """Heisenberg equation of O_{n,l} under p^2/2m + m w^2 x^2/2.

    i hbar d/dt O = [O, H] gives d/dt O_{n,l} = (n-l)/m O_{n,l+1} - m w^2 l O_{n,l-1}.
    """
    for n in range(7):
        for l in range(n + 1):
            o = weyl_monomial(n, l)
            kin, _ = expand_in_weyl_basis(commutator(o, P * P), n)
            pot, _ = expand_in_weyl_basis(commutator(o, X * X), n)
            # [O, p^2] / (2 i hbar) and [O, x^2] / (2 i hbar)
            for j in range(n + 1):
                assert kin[j] == (IH * 2 * (n - l) if j == l + 1 else ZERO)
                assert pot[j] == (IH * (-2 * l) if j == l - 1 else ZERO)


def test_powers_and_scalars():
    assert X ** 0 == ONE
    assert (X + P) ** 2 == X * X + X * P + P * X + P * P
    assert HBAR * X == X * HBAR
    assert ONE == 1 and ZERO == 0
    assert (HBAR * 3).is_scalar()
    assert (X * P * P).degree == 3
    with pytest.raises(ConfigError):
        X ** -1
    with pytest.raises(TypeError):
        X * 0.5


def test_string_rendering():
    assert str(ZERO) == "0"
    assert str(WeylElement({(2, 1, 1): Fraction(3, 2)})) == "x^2 p^1 * (3/2) h^1"
    s = str(weyl_monomial(2, 1))
    assert s == "x^1 p^1 * (1) h^0 + x^0 p^0 * (-1/2*i) h^1"


def test_substitution_homomorphism():
    # the canonical map x -> p, p -> -x applied twice is x -> -x, p -> -p
    o = weyl_monomial(5, 2)
    twice = o.substitute(P, -X).substitute(P, -X)
    assert twice == -o
