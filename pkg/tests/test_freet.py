import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thetabar import freet
from thetabar.freet import (
    augment,
    bare,
    generator,
    monomial_parity,
    monomial_weight,
    multiply,
    substitute,
    t_basis,
)
from thetabar.errors import ThetabarError

X1, X2 = generator(0), generator(1)


def sym(i, b):
    """theta^i(b) as a level-1 monomial."""
    return (((i, b), 1),)


def letter(j, i=0):
    return (((i, ((j, 1),)), 1),)


def count_oracle(n, k, p):
    # coefficient of z^k in prod_i (1 + y z^(p^i))^n at y = 1
    heights = []
    i = 0
    while p ** i <= k:
        heights.append(p ** i)
        i += 1
    factors = [h for h in heights for _ in range(n)]
    total = 0
    for r in range(len(factors) + 1):
        for combo in itertools.combinations(range(len(factors)), r):
            if sum(factors[c] for c in combo) == k:
                total += 1
    return total


def test_t_basis_examples():
    assert t_basis(1, 1, 3) == [bare(X1)]
    assert t_basis(1, 3, 3) == [sym(1, X1)]
    assert t_basis(2, 2, 3) == [((((0, X1), 1), ((0, X2), 1)))]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 10), st.sampled_from([3, 5]))
def test_t_basis_count_matches_generating_function(n, k, p):
    basis = t_basis(n, k, p)
    assert len(basis) == count_oracle(n, k, p)
    assert all(monomial_weight(m, p) == k for m in basis)
    assert basis == sorted(set(basis))


def test_multiply_signs_and_squares():
    a = {bare(X1): 1}
    b = {bare(X2): 1}
    assert multiply(a, a) == {}
    ab = multiply(a, b)
    assert multiply(b, a) == {m: -c for m, c in ab.items()}


def test_multiply_weights_add():
    p = 3
    v = {bare(X1): 1, sym(1, X1): 1}
    prod = multiply(v, {bare(X2): 1})
    assert sorted(monomial_weight(m, p) for m in prod) == [2, p + 1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=2, max_size=2, unique=True))
def test_multiply_is_graded_commutative(symbols):
    # every theta^i x_j is odd, so distinct symbols anticommute
    (i1, j1), (i2, j2) = symbols
    u = {sym(i1, generator(j1)): 1}
    v = {sym(i2, generator(j2)): 1}
    uv = multiply(u, v)
    assert uv == {m: -c for m, c in multiply(v, u).items()}
    assert all(monomial_parity(m) == 0 for m in uv)


def test_substitute_theta_letter():
    p = 3
    out = substitute({letter(0, 1): 1}, [{bare(X2): 1}], p, strict=True)
    assert out == {sym(1, X2): 1}


def test_substitute_unit_and_product():
    p = 3
    v = {bare(X1): 2, sym(1, X2): -1}
    assert substitute({letter(0): 1}, [v], p) == v
    a1a2 = ((((0, ((0, 1),)), 1), ((0, ((1, 1),)), 1)),)
    prod = substitute({a1a2[0]: 1}, [{bare(X1): 1}, {bare(X2): 1}], p)
    assert prod == multiply({bare(X1): 1}, {bare(X2): 1})


def test_substitute_rejects_nonlinear_theta_when_strict():
    inner = multiply({bare(X1): 1}, {bare(X2): 1})
    with pytest.raises(ThetabarError) as exc:
        substitute({letter(0, 1): 1}, [inner], 3, strict=True)
    assert exc.value.code == "NONLINEAR_THETA_SUBSTITUTION"


def test_substitute_weight_is_multiplicative():
    p = 3
    inner = [{sym(1, X1): 1}]
    out = substitute({letter(0, 1): 1}, inner, p, strict=True)
    # theta (weight p) of a weight-p symbol has weight p^2
    assert {monomial_weight(m, p) for m in out} == {p * p}


def test_substitute_associative_on_monomials():
    p = 3
    # theta(a1) o [theta(b1)] o [x1] computed in both orders
    inner = substitute({letter(0, 1): 1}, [{bare(X1): 1}], p, strict=True)
    left = substitute({letter(0, 1): 1}, [inner], p, strict=True)
    middle = substitute({letter(0, 1): 1}, [{letter(0, 1): 1}], p, strict=True)
    right = substitute(middle, [{bare(X1): 1}], p, strict=True)
    assert left == right == {sym(2, X1): 1}


def test_augment_examples():
    assert augment({bare(X1): 1, sym(1, X1): 1}) == {bare(X1): 1}
    assert augment({sym(1, X1): 1}) == {}
    assert augment({bare(X2): 3}) == {bare(X2): 3}


def test_free_theta_on_even_product_uses_cartan_rule():
    # u, v odd: psi^p(uv) = (p theta u)(p theta v) and (uv)^p = 0, so theta(uv) = p theta(u) theta(v)
    p = 3
    uv = multiply({bare(X1): 1}, {bare(X2): 1})
    tt = multiply({sym(1, X1): 1}, {sym(1, X2): 1})
    assert freet.free_theta(uv, p) == {m: p * c for m, c in tt.items()}
