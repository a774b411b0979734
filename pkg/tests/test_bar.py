import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thetabar import bar
from thetabar.algebra import catalog_presentation
from thetabar.errors import ThetabarError
from thetabar.freet import _symbol_monomials, bare, generator, symbols_over

X1, X2 = generator(0), generator(1)


def word(*levels):
    """Nest level-0 monomial under theta^i / bare symbols: word(x, 1) = [theta(a1)|x]."""
    m = levels[0]
    for i in levels[1:]:
        m = (((i, m), 1),)
    return m


def pair(u, v):
    """[a1 a2 | u, v] one level above u and v."""
    return tuple(sorted((((0, u), 1), ((0, v), 1))))


def complex_for(theta, p, K, S=None, trivial=False):
    g = len(theta)
    data = bar.AlgebraData(p, g, tuple(tuple(r) for r in theta), trivial)
    return bar.BarComplex(data, K, S)


def test_weight_one_has_single_generator():
    c = complex_for([[3]], 3, 1)
    assert c.words[0] == [X1]
    assert all(not c.words[s] for s in range(1, c.s_cap + 1))


def test_theta_word_boundary_nontrivial():
    for lam in (3, 9, -6):
        c = complex_for([[lam]], 3, 3, 2)
        assert c.d({word(X1, 1): 1}) == {X1: -lam}


def test_theta_word_is_cycle_under_trivial_action():
    c = complex_for([[1]], 3, 3, 2, trivial=True)
    assert word(X1, 1) in c.index[1]
    assert c.d({word(X1, 1): 1}) == {}


def test_theta_vee_examples():
    assert bar.theta_vee({word(X1, 1): 1}) == {X1: -1}
    assert bar.theta_vee({word(X2, 1): 1}) == {X2: -1}
    assert bar.theta_vee({pair(X1, X2): 1}) == {}


def test_bracket_vee_examples():
    assert bar.bracket_vee({pair(X1, X2): 1}, X2) == {X1: 1}
    assert bar.bracket_vee({word(X1, 1): 1}, X1) == {}


def test_cap_errors():
    data = bar.AlgebraData(3, 1, ((3,),), False)
    with pytest.raises(ThetabarError) as exc:
        bar.BarComplex(data, 3, 0)
    assert exc.value.code == "CAP_TOO_SMALL"
    with pytest.raises(ThetabarError) as exc:
        bar.BarComplex(data, 0)
    assert exc.value.code == "WEIGHT_WINDOW"
    big = bar.AlgebraData(3, 2, ((1, 0), (0, 1)), False)
    with pytest.raises(ThetabarError) as exc:
        bar.BarComplex(big, 9, budget=1000)
    assert exc.value.code == "CAPS_TOO_LARGE"


theta_entries = st.integers(-9, 9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2).flatmap(lambda g: st.lists(st.lists(theta_entries, min_size=g, max_size=g), min_size=g, max_size=g)))
def test_d_squared_vanishes_on_random_theta(theta):
    K = 6 if len(theta) == 1 else 4
    c = complex_for(theta, 3, K)
    assert c.check_d_squared() == []


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2).flatmap(lambda g: st.lists(st.lists(theta_entries, min_size=g, max_size=g), min_size=g, max_size=g)))
def test_dual_operations_commute_with_d(theta):
    K = 6 if len(theta) == 1 else 4
    c = complex_for(theta, 3, K)
    assert all(not v for v in c.chain_map_defects().values())


def test_trivial_action_is_block_diagonal():
    c = complex_for([[1, 0], [0, 1]], 3, 4, trivial=True)
    assert c.is_block_diagonal()
    assert not complex_for([[3]], 3, 3).is_block_diagonal()


def naive_words(level0, p, K, S):
    """All nested monomials of weight <= K, minus the degenerate ones."""
    out = {0: set(level0)}
    basis = {1: list(level0)}
    for s in range(1, S + 1):
        basis = _symbol_monomials(symbols_over(basis, p, K), K)
        out[s] = {m for ms in basis.values() for m in ms if not bar.is_degenerate(m)}
    return out


@pytest.mark.parametrize("g,p,K", [(1, 3, 7), (1, 5, 10), (2, 3, 4), (2, 5, 5)])
def test_pruned_enumeration_matches_naive(g, p, K):
    data = bar.AlgebraData(p, g, tuple(tuple(int(i == j) for j in range(g)) for i in range(g)), False)
    c = bar.BarComplex(data, K, K)
    naive = naive_words(data.basis(), p, K, K)
    for s in range(0, K + 1):
        assert set(c.words[s]) == naive[s]


def test_su3_to_su2_restriction_is_chain_map():
    # SU(2) in SU(3): beta(lambda^1), beta(lambda^2) both restrict to beta(lambda^1)
    p, K = 3, 4
    src = catalog_presentation("su3", p)
    dst = catalog_presentation("su2", p)
    R = [[1, 1]]
    T3, T2 = src.theta.tolist(), dst.theta.tolist()
    assert [[sum(R[0][i] * T3[i][j] for i in range(2)) for j in range(2)]] == [[T2[0][0] * R[0][j] for j in range(2)]]
    c3 = bar.BarComplex(bar.AlgebraData.from_presentation(src), K)
    c2 = bar.BarComplex(bar.AlgebraData.from_presentation(dst), K)
    phi = bar.algebra_map(R)
    cache = {}

    def image(chain):
        out = {}
        for m, c in chain.items():
            bar.add_into(out, c2.normalized(bar.map_word(m, phi, p, cache)), c)
        return out

    for s in range(1, c3.s_cap + 1):
        for m in c3.words[s]:
            assert c2.d(image({m: 1})) == image(c3.d({m: 1}))


def test_dump_contains_theta_word_and_is_stable():
    pres = catalog_presentation("sphere3", 3)
    c = bar.BarComplex(bar.AlgebraData.from_presentation(pres), 3, 2)
    dump = c.dump()
    labels = [g for e in dump["strata"] for g in e["generators"]]
    assert "th{x1}" in labels
    again = bar.BarComplex(bar.AlgebraData.from_presentation(pres), 3, 2)
    assert again.dump_text() == c.dump_text()


def test_level_zero_basis_is_exterior_algebra():
    data = bar.AlgebraData(3, 2, ((1, 0), (0, 1)), False)
    assert sorted(data.basis()) == sorted([X1, X2, ((0, 1), (1, 1))])
    trivial = bar.AlgebraData(3, 2, ((1, 0), (0, 1)), True)
    assert sorted(trivial.basis()) == [X1, X2]
    assert bare(X1) != X1
