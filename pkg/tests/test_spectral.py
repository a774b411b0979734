import itertools
from math import factorial

import pytest
from sympy import divisors, mobius

from thetabar import bar, spectral
from thetabar.algebra import catalog_presentation, make_presentation
from thetabar.arith import FiniteAbelianPGroup
from thetabar.errors import ThetabarError


def witt(n, g):
    # necklace count: dimension of the weight-n part of the free Lie algebra on g letters
    return sum(mobius(d) * g ** (n // d) for d in divisors(n)) // n


def trivial_complex(g, p, K):
    data = bar.AlgebraData(p, g, tuple(tuple(int(i == j) for j in range(g)) for i in range(g)), True)
    return bar.BarComplex(data, K)


# -- oracle ----------------------------------------------------------------------


def test_lie_sign_character_at_identity():
    # Lie(n) has dimension (n-1)!
    for n in range(1, 8):
        chi = spectral._lie_sign_character(n)
        assert abs(chi[(1,) * n]) == factorial(n - 1)


@pytest.mark.parametrize("n", range(1, 9))
@pytest.mark.parametrize("g", [1, 2, 3])
def test_odd_alphabet_gives_witt_numbers(n, g):
    # shifted Lie on odd letters has the ranks of Lie on even letters: necklace numbers
    assert spectral.lie_dp_rank(n, g) == witt(n, g)


def test_odd_alphabet_values():
    # frozen oracle values for two odd letters
    assert [spectral.lie_dp_rank(n, 2) for n in range(1, 10)] == [2, 1, 2, 3, 6, 9, 18, 30, 56]
    # one odd letter: nothing beyond weight 1
    assert [spectral.lie_dp_rank(n, 1) for n in range(1, 10)] == [1] + [0] * 8


def test_koszul_oracle_examples():
    assert spectral.koszul_rank_oracle(1, 1, 3) == {0: 1}
    assert spectral.koszul_rank_oracle(2, 1, 3) == {}
    assert spectral.koszul_rank_oracle(3, 1, 3) == {1: 1}
    assert spectral.koszul_rank_oracle(3, 2, 3) == {2: 2, 1: 2}
    with pytest.raises(ThetabarError) as exc:
        spectral.koszul_rank_oracle(10, 1)
    assert exc.value.code == "ARITY_CAP"


def brute_force_sign_character(n, perm):
    """(-1)^(n-1) mu(0, 1) on the partitions fixed by perm, straight from the definition."""
    fixed = []
    for labels in spectral._set_partitions(n):
        B = frozenset(frozenset(i for i in range(n) if labels[i] == b) for b in set(labels))
        if frozenset(frozenset(perm[x] for x in b) for b in B) == B:
            fixed.append(B)
    finer = lambda A, B: all(any(a <= b for b in B) for a in A)
    fixed.sort(key=len, reverse=True)
    bottom, top = fixed[0], fixed[-1]
    mu = {}
    for Y in fixed:
        mu[Y] = 1 if Y == bottom else -sum(mu[Z] for Z in mu if Z != Y and finer(Z, Y))
    return (-1) ** (n - 1) * mu[top]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_character_matches_brute_force_mobius(n):
    chi = spectral._lie_sign_character(n)
    for perm in itertools.permutations(range(n)):
        ctype = spectral._cycle_type(perm, range(n))
        assert chi[ctype] == brute_force_sign_character(n, perm)


# -- E_1 of trivial-action complexes ---------------------------------------------


@pytest.mark.parametrize("g,K", [(1, 9), (2, 6)])
def test_trivial_e1_matches_oracle(g, K):
    ranks = spectral.trivial_e1_ranks(trivial_complex(g, 3, K))
    for k in range(1, K + 1):
        found = {s: r for (w, s), (r, _) in ranks.items() if w == k and r}
        assert found == spectral.koszul_rank_oracle(k, g, 3)


def test_trivial_pages_have_no_differentials():
    pages = spectral.compute_pages(trivial_complex(1, 3, 6))
    assert pages.nonzero_differentials() == []
    for k, s in pages.inner_keys:
        assert pages.spot(1, k, s).group == pages.spot(None, k, s).group


def test_trivial_e1_rejects_filtered_complex():
    pres = catalog_presentation("sphere3", 3)
    c = bar.BarComplex(bar.AlgebraData.from_presentation(pres), 3)
    with pytest.raises(ThetabarError):
        spectral.trivial_e1_ranks(c)


# -- pages of the catalog ----------------------------------------------------------


@pytest.fixture(scope="module")
def sphere3_pages():
    pres = catalog_presentation("sphere3", 3)
    return pres, spectral.run_verification(pres, weight_cap=9)


def test_sphere3_d2_is_minus_theta(sphere3_pages):
    _, (pages, report) = sphere3_pages
    pg = pages[0]
    assert pg.differential(2, 1, 0) == [[-3]]
    assert pg.nonzero_differentials() == [(2, 1, 0)]
    assert report.clean
    assert report.residuals == []


def test_sphere3_pages_consistent(sphere3_pages):
    _, (pages, _) = sphere3_pages
    pg = pages[0]
    assert pg.check_homology() == []
    assert pg.check_d_squared() == []
    # nothing happens after the filtration is exhausted
    assert pg.differential(pg.K, 1, 0) is None


def test_sphere3_e_infinity(sphere3_pages):
    _, (_, report) = sphere3_pages
    assert report.e_infinity["total"] == FiniteAbelianPGroup(3, (1,), 0).as_dict()
    assert report.e_infinity["spots"] == [{"weight": 3, "degree": 1, "group": {"prime": 3, "exponents": [1], "free_rank": 0}}]


def test_sphere5_d2_scales_with_theta():
    pres = catalog_presentation("sphere5", 3)
    pages, report = spectral.run_verification(pres)
    assert pages[0].differential(2, 1, 0) == [[-9]]
    assert report.e_infinity["total"]["exponents"] == [2]


def test_p5_sphere_uses_page_p_minus_1():
    pres = catalog_presentation("sphere3", 5)
    pages, report = spectral.run_verification(pres)
    assert pages[0].differential(4, 1, 0) == [[-5]]
    assert report.clean


def test_expected_e2_table():
    pres = catalog_presentation("su3", 3)
    assert spectral.expected_e2(pres, 1, 0) == 2
    # theta-bar on the weight-1 classes of the exterior algebra (x1, x2 odd, x1x2 even)
    assert spectral.expected_e2(pres, 3, 1) == spectral.lie_dp_rank(1, 2, 1) == 3
    assert spectral.expected_e2(pres, 2, 1) == 0


def test_scalar_theta_one_generator():
    for lam in (3, 6, 9, 27):
        pres = make_presentation(3, [{"name": "x", "degree": 3}], {}, [[lam]])
        pages, report = spectral.run_verification(pres)
        assert pages[0].differential(2, 1, 0) == [[-lam]]
        assert report.clean
        assert report.e_infinity["total"] == report.e_infinity["coker_theta_transpose"]


def test_windows_split_when_large():
    pres = catalog_presentation("su3", 5)
    wins = spectral.windows_for(pres)
    assert [(c.weight_cap, c.s_cap) for c in wins] == [(6, 7), (10, 2)]
    small = spectral.windows_for(catalog_presentation("sphere3", 5))
    assert [(c.weight_cap, c.s_cap) for c in small] == [(10, 11)]
