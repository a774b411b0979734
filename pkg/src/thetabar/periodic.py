"""v1-periodic homotopy from Q/im(theta) and psi^l.

``N = Z_p^n / theta Z_p^n`` with psi^l descended to it, and for each m

    W^m   = coker(psi^l - l^(m + OFFSET))
    W^m_1 = ker(psi^l - l^(m + OFFSET))

give the periodic groups in degrees 2m and 2m - 1 (up to Pontryagin duality,
i.e. abstractly). Stored psi matrices are the raw action on K^{-1}, which is
one Bott twist away from the normalized action; OFFSET = 1 absorbs it, so a
sphere S^(2n+1) has its nonzero groups at m = n mod (p - 1).

Route B rebuilds the same table from the E_infinity page of the bar spectral
sequence, with psi^l acting by functoriality of the bar construction.
"""

from dataclasses import dataclass, field

from thetabar import bar as barmod
from thetabar import spectral
from thetabar.algebra import default_ell, is_topological_generator, verify_hypotheses
from thetabar.arith import (
    FiniteAbelianPGroup,
    IntMatrix,
    LatticeQuotient,
    cokernel_p_part,
    kernel_of_rows,
    smith_normal_form,
    valuation,
)
from thetabar.errors import ThetabarError

OFFSET = 1


@dataclass
class PeriodicModule:
    """A finitely generated Z_p-module Z^n / span(relations) with an endomorphism."""

    prime: int
    relations: list
    psi_l: list
    ell: int
    degrees: tuple = ()
    underlying: FiniteAbelianPGroup = None
    psi_snf: list = field(default_factory=list)

    def __post_init__(self):
        if self.underlying is None:
            n = len(self.psi_l)
            M = IntMatrix.from_columns(self.relations, n) if self.relations else IntMatrix(n, 0)
            self.underlying = cokernel_p_part(M, self.prime)

    @property
    def rank(self):
        return len(self.psi_l)


def endomorphism_groups(relations, F, c, p):
    """(coker, ker) of F - c on Z^n / span(relations), p-locally."""
    n = len(F)
    G = [[F[i][j] - (c if i == j else 0) for j in range(n)] for i in range(n)]
    gcols = [[G[i][j] for i in range(n)] for j in range(n)]
    cols = [list(r) for r in relations] + gcols
    coker = cokernel_p_part(IntMatrix.from_columns(cols, n) if cols else IntMatrix(n, 0), p)
    # ker: v with G v in span(relations), modulo span(relations)
    nr = len(relations)
    rows = [[G[i][j] for j in range(n)] + [-relations[t][i] for t in range(nr)] for i in range(n)]
    pre = [v[:n] for v in kernel_of_rows(rows, n + nr)] if n else []
    ker = LatticeQuotient(pre, [list(r) for r in relations], n, p).group if n else FiniteAbelianPGroup(p, (), 0)
    return coker, ker


def q_mod_theta(pres):
    """Q/im(theta) with psi^l, as a PeriodicModule."""
    hyp = verify_hypotheses(pres)
    n = pres.rank
    T = pres.theta
    L = pres.psi_matrix(pres.ell) if pres.ell in pres.psi else None
    if L is None:
        raise ThetabarError("MISSING_PSI", f"psi^{pres.ell} is required for the periodic groups")
    if L @ T != T @ L:
        raise ThetabarError("PSI_THETA_NONCOMMUTING", "psi^l does not commute with theta")
    if not hyp.theta_injective:
        raise ThetabarError("THETA_NOT_INJECTIVE", "theta is not injective on the generator span")
    relations = [T.column(j) for j in range(n)]
    mod = PeriodicModule(pres.prime, relations, L.tolist(), pres.ell, tuple(g.degree for g in pres.generators))
    mod.psi_snf = _descend_to_snf(T, L, pres.prime)
    return mod


def _descend_to_snf(T, L, p):
    """psi^l on the cyclic summands of coker(theta), coordinates reduced mod the orders."""
    n = T.rows
    if n == 0:
        return []
    snf = smith_normal_form(T, inverses=True)
    A = (snf.U @ L @ snf.U_inv).data
    keep = []
    for i, d in enumerate(snf.diagonal() + [0] * (n - len(snf.diagonal()))):
        e = valuation(d, p) if d else None
        if e is None or e > 0:
            keep.append((i, p ** e if e is not None else 0))
    return [[(A[i][j] % o) if o else A[i][j] for j, _ in keep] for i, o in keep]


def w_groups(mod, m):
    """(W^m, W^m_1) = (coker, ker) of psi^l - l^(m + OFFSET) on the module."""
    c = mod.ell ** (m + OFFSET)
    if not mod.rank:
        z = FiniteAbelianPGroup(mod.prime, (), 0)
        return z, z
    return endomorphism_groups(mod.relations, mod.psi_l, c, mod.prime)


@dataclass
class PeriodicTable:
    prime: int
    ell: int
    rows: dict
    period: int
    periodic: bool
    flags: list = field(default_factory=list)

    def as_dict(self):
        return {
            "prime": self.prime,
            "ell": self.ell,
            "offset": OFFSET,
            "period": self.period,
            "periodicity_verified": self.periodic,
            "rows": [
                {"m": m, "pi_2m": a.as_dict(), "pi_2m_minus_1": b.as_dict()} for m, (a, b) in sorted(self.rows.items())
            ],
            "flags": self.flags,
        }

    def text(self):
        head = f"{'m':>4}  {'pi_2m':<20} {'pi_2m-1':<20}"
        lines = [head, "-" * len(head)]
        for m, (a, b) in sorted(self.rows.items()):
            lines.append(f"{m:>4}  {_divisors(a):<20} {_divisors(b):<20}")
        lines.append(f"period {self.period} ({'verified' if self.periodic else 'NOT verified'}), offset {OFFSET}")
        return "\n".join(lines)


def _divisors(g):
    parts = [str(d) for d in g.divisors()]
    parts += ["Z"] * g.free_rank
    return ",".join(parts) if parts else "0"


def _period(mod):
    exps = mod.underlying.exponents
    if not exps:
        return 1
    return (mod.prime - 1) * mod.prime ** (max(exps) - 1)


def nu1_table(pres, m_range):
    """Route A: the table straight from Q/im(theta) and psi^l."""
    if not is_topological_generator(pres.ell, pres.prime):
        raise ThetabarError("NOT_TOP_GENERATOR", f"{pres.ell} does not generate (Z/{pres.prime}^2)^x")
    mod = q_mod_theta(pres)
    rows = {m: w_groups(mod, m) for m in m_range}
    P = _period(mod)
    periodic = all(w_groups(mod, m + P) == rows[m] for m in m_range)
    return PeriodicTable(pres.prime, pres.ell, rows, P, periodic)


# -- route B: E_infinity of the bar spectral sequence --------------------------------


def _full_action(pages, s, ell_matrix):
    """psi^l on full degree-s cochains via T^s(psi^l) on bar words."""
    complex_ = pages.bar
    phi0 = barmod.algebra_map(ell_matrix)
    cache = {}
    images = {}

    def image(j):
        if j not in images:
            m = complex_.words[s][j]
            out = {}
            for t, c in complex_.normalized(barmod.map_word(m, phi0, complex_.p, cache)).items():
                k = complex_.index[s].get(t)
                if k is None:
                    raise ThetabarError("INTERNAL", "psi^l left the enumerated basis")
                out[k] = c
            images[j] = out
        return images[j]

    def pullback(y, min_weight):
        out = {}
        for j, w in enumerate(complex_.weights[s]):
            if w < min_weight:
                continue
            v = sum(c * y.get(k, 0) for k, c in image(j).items())
            if v:
                out[j] = v
        return out

    return pullback


def e_infinity_module(pages, pres):
    """E_infinity spots of a window with their psi^l matrices: list of (weight, degree, orders, F)."""
    if pages.bar is None:
        raise ThetabarError("INTERNAL", "pages were not built from a bar complex")
    red = pages.red
    L = pres.psi_matrix(pres.ell).tolist()
    out = []
    for (k, s), sp in pages.infinity().items():
        if sp.group.is_trivial():
            continue
        if not sp.exact:
            out.append({"weight": k, "degree": s, "orders": sp.quotient.orders, "psi": None, "exact": False})
            continue
        pull = _full_action(pages, s, L)
        cols = []
        for g in sp.quotient.generators:
            x = pages.lift(sp, g)
            y = red.cochain_from_full(s, pull(red.cochain_to_full(s, x), k))
            cols.append(sp.quotient.coordinates(sp.vector(y)))
        F = [[cols[j][i] for j in range(len(cols))] for i in range(len(sp.quotient))]
        out.append({"weight": k, "degree": s, "orders": sp.quotient.orders, "psi": F, "exact": sp.exact})
    return out


def route_b_table(pres, m_range, weight_cap=None, pages=None, budget=barmod.DEFAULT_WORD_BUDGET):
    """The table rebuilt from E_infinity, with kernel and cokernel exchanged by duality."""
    p = pres.prime
    K = weight_cap if weight_cap is not None else 2 * p
    if K < 2 * p:
        raise ThetabarError("CAPS_INSUFFICIENT", f"route B needs weight cap >= 2p = {2 * p}, got {K}")
    q_mod_theta(pres)
    if pages is None:
        data = barmod.AlgebraData.from_presentation(pres)
        pages = spectral.compute_pages(barmod.BarComplex(data, K, 2, budget), label=f"K={K},S=2")
    found = e_infinity_module(pages, pres)
    spots = [spot for spot in found if spot["exact"]]
    # Spots past the reliable range are reported, not summed: the window
    # determines E_infinity only up to weight K - p.
    flags = [
        {"code": "EDGE_OF_TRUNCATION", "weight": spot["weight"], "degree": spot["degree"]}
        for spot in found
        if not spot["exact"]
    ]
    rows = {}
    for m in m_range:
        c = pres.ell ** (m + OFFSET)
        ker_total, coker_total = [], []
        kfree = cfree = 0
        for spot in spots:
            rel = [[o if i == j else 0 for i in range(len(spot["orders"]))] for j, o in enumerate(spot["orders"]) if o]
            coker, ker = endomorphism_groups(rel, spot["psi"], c, p)
            ker_total += ker.exponents
            kfree += ker.free_rank
            coker_total += coker.exponents
            cfree += coker.free_rank
        rows[m] = (FiniteAbelianPGroup(p, tuple(ker_total), kfree), FiniteAbelianPGroup(p, tuple(coker_total), cfree))
    table = PeriodicTable(p, pres.ell, rows, 0, False, flags)
    return table, spots


def cross_check(pres, weight_cap=None, m_range=None, pages=None, budget=barmod.DEFAULT_WORD_BUDGET):
    """Compare route A and route B spot by spot over m_range."""
    p = pres.prime
    if m_range is None:
        m_range = range(0, 4 * (p - 1) + 1)
    a = nu1_table(pres, m_range)
    b, spots = route_b_table(pres, m_range, weight_cap, pages, budget)
    mismatches = []
    for m in m_range:
        if a.rows[m] != b.rows[m]:
            mismatches.append(
                {
                    "m": m,
                    "route_a": [g.as_dict() for g in a.rows[m]],
                    "route_b": [g.as_dict() for g in b.rows[m]],
                }
            )
    orders_equal = all(x.order == y.order for x, y in a.rows.values())
    return {
        "agree": not mismatches,
        "mismatches": mismatches,
        "order_identity": orders_equal,
        "route_a": a.as_dict(),
        "route_b_spots": [
            {"weight": s["weight"], "degree": s["degree"], "orders": s["orders"], "psi": s["psi"]} for s in spots
        ],
        "flags": b.flags,
    }


def other_generator(p, ell):
    """The next topological generator after ell (for l-independence checks)."""
    l = ell + 1
    while not is_topological_generator(l, p):
        l += 1
    return l
