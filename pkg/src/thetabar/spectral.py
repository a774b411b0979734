"""The weight-filtration spectral sequence of the bar complex.

Cochains ``C^s = Hom(B_s, Z)`` are filtered by ``F^k`` = cochains vanishing
on words of weight < k. The coboundary never lowers weight, so

    ZZ_r^{k,s} = weight-k parts of x in F^k C^s with dx in F^{k+r}
    BB_r^{k,s} = weight-k parts of dy for y in F^{k-r+1} C^{s-1} with dy in F^k
    E_r^{k,s}  = ZZ_r / BB_r,       d_r: E_r^{k,s} -> E_r^{k+r,s+1}

are computed as exact lattices over Z and read p-locally. Before that the
complex is shrunk by cancelling weight-preserving unit entries of the
boundary (filtered Gaussian elimination), which leaves every page from E_1
on unchanged. The chain maps of each cancellation are kept so cochains can
be moved between the full and the reduced complex.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

from thetabar import bar as barmod
from thetabar.algebra import verify_hypotheses
from thetabar.arith import (
    FiniteAbelianPGroup,
    IntegerSolver,
    IntMatrix,
    LatticeQuotient,
    EchelonLattice,
    cokernel_p_part,
    kernel_of_rows,
    module_homology,
    plocal_invariants,
)
from thetabar.errors import ThetabarError

ARITY_CAP = 9


# -- Koszul-dual rank oracle -------------------------------------------------


def _set_partitions(n):
    """All set partitions of range(n) as tuples of block-label tuples."""
    out = []

    def rec(i, labels, nblocks):
        if i == n:
            out.append(tuple(labels))
            return
        for b in range(nblocks + 1):
            labels.append(b)
            rec(i + 1, labels, max(nblocks, b + 1))
            labels.pop()

    rec(0, [], 0)
    return out


def _cycle_type_rep(ctype):
    perm, start = [], 0
    for length in ctype:
        for i in range(length):
            perm.append(start + (i + 1) % length)
        start += length
    return tuple(perm)


def _integer_partitions(n, largest=None):
    if largest is None:
        largest = n
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _integer_partitions(n - k, k):
            yield (k,) + rest


def _class_size(ctype):
    n = sum(ctype)
    size = factorial(n)
    for length in set(ctype):
        c = ctype.count(length)
        size //= length ** c * factorial(c)
    return size


def _cycle_type(perm, domain):
    seen, out = set(), []
    for x in domain:
        if x in seen:
            continue
        n, y = 0, x
        while y not in seen:
            seen.add(y)
            y = perm[y]
            n += 1
        out.append(n)
    return tuple(sorted(out, reverse=True))


_PARTITIONS = {}
_MOBIUS = {}


def _fixed_mobius(ctype):
    """mu(0, 1) in the lattice of set partitions fixed by a permutation of this cycle type.

    The fixed partitions below a fixed partition y form a product, over the
    orbits of blocks of y, of fixed-partition lattices of sigma^m on one block,
    so mu(0, y) is a product of smaller instances.
    """
    if ctype in _MOBIUS:
        return _MOBIUS[ctype]
    n = sum(ctype)
    if n == 1:
        return 1
    if n not in _PARTITIONS:
        _PARTITIONS[n] = _set_partitions(n)
    perm = _cycle_type_rep(ctype)
    total = 0
    for lab in _PARTITIONS[n]:
        nblocks = max(lab) + 1
        if nblocks == 1:
            continue
        image = [-1] * nblocks
        fixed = True
        for i in range(n):
            t = lab[perm[i]]
            if image[lab[i]] == -1:
                image[lab[i]] = t
            elif image[lab[i]] != t:
                fixed = False
                break
        if not fixed:
            continue
        blocks = [[] for _ in range(nblocks)]
        for i, b in enumerate(lab):
            blocks[b].append(i)
        done = [False] * nblocks
        mu = 1
        for b in range(nblocks):
            if done[b]:
                continue
            m, c = 0, b
            while not done[c]:
                done[c] = True
                c = image[c]
                m += 1
            # sigma^m restricted to block b
            power = {}
            for x in blocks[b]:
                y = x
                for _ in range(m):
                    y = perm[y]
                power[x] = y
            mu *= _fixed_mobius(_cycle_type(power, blocks[b]))
            if mu == 0:
                break
        total += mu
    _MOBIUS[ctype] = -total
    return -total


_CHARACTER_CACHE = {}


def _lie_sign_character(n):
    """{cycle type: character of Lie(n) (x) sgn}, from partition-lattice Mobius numbers."""
    if n in _CHARACTER_CACHE:
        return _CHARACTER_CACHE[n]
    table = {}
    for ctype in _integer_partitions(n):
        table[ctype] = (-1) ** (n - 1) * _fixed_mobius(ctype)
    _CHARACTER_CACHE[n] = table
    return table


def lie_dp_rank(n, g_odd, g_even=0, cap=ARITY_CAP):
    """Rank of the weight-n part of sLie^dp on a module with the given parities."""
    if n < 1:
        return 0
    if n > cap:
        raise ThetabarError("ARITY_CAP", f"arity {n} exceeds the oracle cap {cap}")
    chi = _lie_sign_character(n)
    total = Fraction(0)
    for ctype, c in chi.items():
        trace = 1
        for length in ctype:
            trace *= g_even + (-1) ** (length - 1) * g_odd
        total += _class_size(ctype) * c * trace
    total /= factorial(n)
    if total.denominator != 1 or total < 0:
        raise ThetabarError("INTERNAL", f"non-integral oracle value {total}")
    return int(total)


def koszul_rank_oracle(n, g, p=None, g_even=0, cap=ARITY_CAP):
    """Ranks by cohomological degree of the weight-n part of Lambda(theta-bar) (x) sLie^dp.

    Weight-n brackets sit in degree n - 1; with ``p`` given, theta-bar of a
    weight-k class adds a copy in weight p*k and degree k.
    """
    if n > cap:
        raise ThetabarError("ARITY_CAP", f"arity {n} exceeds the oracle cap {cap}")
    out = {}
    r = lie_dp_rank(n, g, g_even, cap)
    if r:
        out[n - 1] = r
    if p is not None and n % p == 0:
        r = lie_dp_rank(n // p, g, g_even, cap)
        if r:
            out[n // p] = out.get(n // p, 0) + r
    return out


def trivial_e1_ranks(complex_):
    """Free ranks of H^s per (weight, s) for a block-diagonal complex.

    Returns ``{(weight, s): (rank, torsion exponents)}`` for every stratum
    with s < s_cap, computed stratum by stratum with p-local elimination.
    """
    if not complex_.is_block_diagonal():
        raise ThetabarError("NOT_TRIVIAL", "the differential does not preserve weight")
    p = complex_.p
    out = {}
    invariants = {}

    def inv(s, w):
        key = (s, w)
        if key not in invariants:
            if s < 1 or s > complex_.s_cap:
                invariants[key] = []
            else:
                lo = complex_.stratum(s - 1, w)
                base = lo[0] if lo else 0
                cols = [
                    {i - base: v for i, v in complex_.boundary[s][j].items()} for j in complex_.stratum(s, w)
                ]
                invariants[key] = plocal_invariants(cols, p)
        return invariants[key]

    for s in range(0, complex_.s_cap):
        for w in sorted(set(complex_.weights[s])):
            n = len(complex_.stratum(s, w))
            d_in = inv(s, w)
            d_out = inv(s + 1, w)
            rank = n - len(d_in) - len(d_out)
            # cohomological torsion in degree s sits in coker of d_{s+1}^T
            torsion = tuple(sorted(v for v in d_out if v))
            out[(w, s)] = (rank, torsion)
    return out


# -- filtered complexes and their reduction -------------------------------------


class FilteredComplex:
    """A finite chain complex with a weight on every cell.

    ``weights[s][j]`` is the weight of cell j in degree s and
    ``boundary[s][j]`` its boundary as ``{cell index in degree s-1: coeff}``.
    The boundary must not raise weight.
    """

    def __init__(self, prime, weights, boundary, weight_cap, s_cap, labels=None):
        self.p = prime
        self.weights = {s: list(w) for s, w in weights.items()}
        self.boundary = {s: [dict(c) for c in cols] for s, cols in boundary.items()}
        self.weight_cap = weight_cap
        self.s_cap = s_cap
        self.labels = labels

    @classmethod
    def from_bar(cls, complex_):
        labels = {s: [barmod.format_word(m) for m in complex_.words[s]] for s in complex_.words}
        return cls(complex_.p, complex_.weights, complex_.boundary, complex_.weight_cap, complex_.s_cap, labels)


@dataclass
class _Cancellation:
    s: int
    a: int
    b: int
    u: int
    gamma: dict
    hits: dict


class Reduction:
    """Filtered Gaussian elimination of weight-preserving unit entries.

    For each cancelled pair (a, b) with ``<da, b> = u = +-1`` and equal
    weights, ``f`` sends b to ``-u * (da - u b)`` and kills a, and ``g`` sends
    each c with ``<dc, b> = r`` to ``c - r u a``. Both are filtered chain
    maps and homotopy inverse to each other.
    """

    def __init__(self, fc):
        self.source = fc
        self.p = fc.p
        self.weight_cap = fc.weight_cap
        self.s_cap = fc.s_cap
        self.weight = {s: dict(enumerate(w)) for s, w in fc.weights.items()}
        self.cols = {s: {j: dict(c) for j, c in enumerate(cols) if True} for s, cols in fc.boundary.items()}
        self.rows = {}
        for s, cols in self.cols.items():
            r = self.rows.setdefault(s, {})
            for j, c in cols.items():
                for i in c:
                    r.setdefault(i, set()).add(j)
        self.alive = {s: set(w) for s, w in self.weight.items()}
        self.history = []
        for s in sorted(self.cols, reverse=True):
            self._reduce_degree(s)
        self.cells = {}
        self.position = {}
        for s in self.weight:
            order = sorted(self.alive[s], key=lambda j: (self.weight[s][j], j))
            self.cells[s] = order
            self.position[s] = {j: k for k, j in enumerate(order)}

    def _reduce_degree(self, s):
        cols = self.cols[s]
        rows = self.rows[s]
        wt_hi, wt_lo = self.weight[s], self.weight[s - 1]
        changed = True
        while changed:
            changed = False
            for a in sorted(cols, key=lambda j: (len(cols[j]), j)):
                if a not in cols:
                    continue
                col = cols[a]
                best = None
                for b, v in col.items():
                    if abs(v) == 1 and wt_lo[b] == wt_hi[a]:
                        cost = len(rows.get(b, ()))
                        if best is None or cost < best[0]:
                            best = (cost, b)
                if best is not None:
                    self._cancel(s, a, best[1])
                    changed = True

    def _cancel(self, s, a, b):
        cols, rows = self.cols[s], self.rows[s]
        col_a = cols.pop(a)
        for i in col_a:
            rows[i].discard(a)
        u = col_a[b]
        gamma = {i: v for i, v in col_a.items() if i != b}
        hits = {c: cols[c][b] for c in rows.get(b, ()) if c != a}
        for c, r in hits.items():
            col = cols[c]
            f = r * u
            for i, v in col_a.items():
                nv = col.get(i, 0) - f * v
                if nv:
                    if i not in col:
                        rows.setdefault(i, set()).add(c)
                    col[i] = nv
                else:
                    del col[i]
                    rows[i].discard(c)
        rows.pop(b, None)
        # a leaves the boundaries one degree up, b's own boundary disappears
        if s + 1 in self.cols:
            up = self.cols[s + 1]
            for e in self.rows[s + 1].pop(a, ()):
                del up[e][a]
        if s - 1 in self.cols:
            down = self.cols[s - 1].pop(b, {})
            for i in down:
                self.rows[s - 1][i].discard(b)
        self.alive[s].discard(a)
        self.alive[s - 1].discard(b)
        self.history.append(_Cancellation(s, a, b, u, gamma, hits))

    # -- moving cochains ------------------------------------------------------

    def cochain_to_full(self, s, x):
        """f^*: a cochain on the reduced degree-s cells -> a full cochain."""
        x = {j: v for j, v in x.items() if v}
        for step in reversed(self.history):
            if step.s == s + 1:
                val = sum(v * x.get(i, 0) for i, v in step.gamma.items())
                if val:
                    x[step.b] = -step.u * val
        return x

    def cochain_from_full(self, s, y):
        """g^*: a full degree-s cochain -> a cochain on the reduced cells."""
        y = {j: v for j, v in y.items() if v}
        for step in self.history:
            if step.s == s:
                ya = y.pop(step.a, 0)
                if ya:
                    for c, r in step.hits.items():
                        nv = y.get(c, 0) - r * step.u * ya
                        if nv:
                            y[c] = nv
                        else:
                            y.pop(c, None)
            elif step.s == s + 1:
                y.pop(step.b, None)
        alive = self.alive[s]
        return {j: v for j, v in y.items() if j in alive}

    # -- shape ------------------------------------------------------------------

    def sizes(self):
        return {s: len(c) for s, c in self.cells.items()}

    def cells_between(self, s, lo, hi=None):
        """Reduced cells of degree s with lo <= weight <= hi (hi None = no bound)."""
        if s not in self.cells:
            return []
        w = self.weight[s]
        return [j for j in self.cells[s] if w[j] >= lo and (hi is None or w[j] <= hi)]

    def coboundary_entry(self, s, y, x):
        """<d y, x> for y in degree s + 1 and x in degree s."""
        return self.cols[s + 1][y].get(x, 0)

    def label(self, s, j):
        labels = self.source.labels
        return labels[s][j] if labels else f"c{s}_{j}"


# -- pages ----------------------------------------------------------------------


@dataclass
class Spot:
    """E_r^{k,s} (``page`` None for E_infinity) on the reduced complex.

    Spots in the top degree of a truncated complex only carry their boundary
    lattice (``quotient`` is None); differentials into them are read in a
    relative quotient, see :meth:`SpectralPages.target_quotient`.
    """

    page: object
    weight: int
    degree: int
    cells: list
    quotient: object
    exact: bool
    boundaries: list = field(repr=False, default_factory=list)
    span: list = field(repr=False, default_factory=list)
    ann: list = field(repr=False, default_factory=list)
    solver: object = field(repr=False, default=None)

    @property
    def top(self):
        return self.quotient is None

    @property
    def group(self):
        if self.quotient is None:
            raise ThetabarError("EDGE_OF_TRUNCATION", f"no group in the top degree {self.degree}")
        return self.quotient.group

    def vector(self, cochain):
        return [cochain.get(j, 0) for j in self.cells]


class _Projected:
    """A LatticeQuotient on a few coordinates that are injective on the lattice."""

    def __init__(self, vectors, small, dim, p):
        lat = EchelonLattice(dim, list(vectors) + list(small))
        self.pivots = lat.pivots()
        proj = self.project
        self.quotient = LatticeQuotient([proj(v) for v in vectors] + [proj(v) for v in small], [proj(v) for v in small], len(self.pivots), p)
        self.orders = self.quotient.orders
        self.group = self.quotient.group

    def project(self, v):
        return [v[c] for c in self.pivots]

    def coordinates(self, v):
        return self.quotient.coordinates(self.project(v))

    def __len__(self):
        return len(self.quotient)


class SpectralPages:
    """All pages E_1 .. E_{r_max} and E_infinity of a filtered complex."""

    def __init__(self, reduction, r_max=None, label=""):
        self.red = reduction
        self.p = reduction.p
        self.K = reduction.weight_cap
        self.S = reduction.s_cap
        self.r_max = r_max if r_max is not None else self.K
        self.label = label
        self._spots = {}
        self._diffs = {}
        self._targets = {}
        self.spot_keys = []
        for s in range(0, self.S + 1):
            for k in sorted({reduction.weight[s][j] for j in reduction.cells.get(s, [])}):
                self.spot_keys.append((k, s))
        self.inner_keys = [(k, s) for k, s in self.spot_keys if s < self.S]

    # -- spots ------------------------------------------------------------------

    def exact(self, r, k, s):
        if s > self.S - 1:
            return False
        if r is None:
            return k <= self.K - self.p
        return k + r - 1 <= self.K

    def spot(self, r, k, s):
        key = (r, k, s)
        sp = self._spots.get(key)
        if sp is None:
            sp = self._build_spot(r, k, s)
            self._spots[key] = sp
        return sp

    def _build_spot(self, r, k, s):
        red = self.red
        hi = None if r is None else k + r - 1
        Vk = red.cells_between(s, k, k)
        nk = len(Vk)
        bb = []
        if s >= 1 and nk:
            lo = 1 if r is None else k - r + 1
            W = red.cells_between(s - 1, lo, k)
            rows = []
            for z in red.cells_between(s, lo, k - 1):
                col = red.cols[s][z]
                row = [col.get(w, 0) for w in W]
                if any(row):
                    rows.append(row)
            for yv in kernel_of_rows(rows, len(W)):
                ys = {w: c for w, c in zip(W, yv) if c}
                vec = [sum(c * red.cols[s][cell].get(w, 0) for w, c in ys.items()) for cell in Vk]
                if any(vec):
                    bb.append(vec)
        if s == self.S:
            return Spot(r, k, s, Vk, None, False, bb)
        V = red.cells_between(s, k, hi)
        constraints = []
        for y in red.cells_between(s + 1, k, hi):
            col = red.cols[s + 1][y]
            row = [col.get(v, 0) for v in V]
            if any(row):
                constraints.append(row)
        ann = kernel_of_rows(constraints, len(V))
        zz = [a[:nk] for a in ann]
        quotient = LatticeQuotient(zz, bb, nk, self.p)
        solver = IntegerSolver(IntMatrix.from_columns(zz, nk)) if zz and nk else None
        return Spot(r, k, s, Vk, quotient, self.exact(r, k, s), bb, V, ann, solver)

    def lift(self, sp, vec):
        """A cochain (dict over reduced cells) in ZZ with weight-k part ``vec``."""
        if not any(vec):
            return {}
        c = sp.solver.solve(list(vec)) if sp.solver is not None else None
        if c is None:
            raise ThetabarError("NOT_A_CYCLE", f"no lift at weight {sp.weight}, degree {sp.degree}")
        x = {}
        for cj, a in zip(c, sp.ann):
            if cj:
                for j, v in zip(sp.span, a):
                    if v:
                        x[j] = x.get(j, 0) + cj * v
        return {j: v for j, v in x.items() if v}

    def coboundary(self, s, x, weight):
        """Weight-``weight`` part of d x for a degree-s cochain x."""
        red = self.red
        out = {}
        if s + 1 > self.S:
            return out
        for y in red.cells_between(s + 1, weight, weight):
            col = red.cols[s + 1][y]
            v = sum(c * x.get(b, 0) for b, c in col.items())
            if v:
                out[y] = v
        return out

    def push(self, r, k, s, vec):
        """Weight-(k+r) part of d of a lift of the weight-k vector ``vec``."""
        src = self.spot(r, k, s)
        tgt = self.spot(r, k + r, s + 1)
        return tgt.vector(self.coboundary(s, self.lift(src, vec), k + r))

    # -- differentials ------------------------------------------------------------

    def differential(self, r, k, s):
        """Matrix of d_r: E_r^{k,s} -> E_r^{k+r,s+1} in generator coordinates.

        Returns ``None`` when the target lies outside the complex. For a
        target in the top degree the coordinates refer to
        :meth:`target_quotient`.
        """
        key = (r, k, s)
        if key in self._diffs:
            return self._diffs[key]
        if k + r > self.K or s + 1 > self.S or (k + r, s + 1) not in self.spot_keys:
            self._diffs[key] = None
            return None
        src = self.spot(r, k, s)
        tgt = self.spot(r, k + r, s + 1)
        images = [self.push(r, k, s, g) for g in src.quotient.generators]
        if tgt.top:
            tq = _Projected(images, tgt.boundaries, len(tgt.cells), self.p)
        else:
            tq = tgt.quotient
        self._targets[key] = tq
        cols = [tq.coordinates(v) for v in images]
        mat = [[cols[j][i] for j in range(len(cols))] for i in range(len(tq))]
        self._diffs[key] = mat
        return mat

    def target_quotient(self, r, k, s):
        self.differential(r, k, s)
        return self._targets.get((r, k, s))

    def apply_differential(self, r, k, s, vec):
        """Coordinates of d_r of the class of a weight-k vector in ZZ_r (non-top target)."""
        tgt = self.spot(r, k + r, s + 1)
        return tgt.quotient.coordinates(self.push(r, k, s, vec))

    def same_class(self, r, k, s, v1, v2):
        """Whether two ZZ_r vectors at (k, s) agree in E_r (p-locally)."""
        sp = self.spot(r, k, s)
        diff = [a - b for a, b in zip(v1, v2)]
        if sp.top:
            q = _Projected([v1, v2], sp.boundaries, len(sp.cells), self.p)
            return _coords_zero(q.coordinates(diff), q.orders)
        return _coords_zero(sp.quotient.coordinates(diff), sp.quotient.orders)

    def nonzero_differentials(self):
        out = []
        for r in range(1, self.r_max + 1):
            for k, s in self.inner_keys:
                if self.spot(r, k, s).group.is_trivial():
                    continue
                mat = self.differential(r, k, s)
                if mat is None:
                    continue
                orders = self.target_quotient(r, k, s).orders
                if any(v % o if o else v for row, o in zip(mat, orders) for v in row):
                    out.append((r, k, s))
        return out

    # -- consistency ----------------------------------------------------------------

    def check_homology(self):
        """Spots where E_{r+1} differs from H(E_r, d_r); empty when consistent."""
        bad = []
        for r in range(1, self.r_max + 1):
            for k, s in self.inner_keys:
                mid = self.spot(r, k, s).quotient.orders
                src, f = [], None
                if (k - r, s - 1) in self.spot_keys:
                    src = self.spot(r, k - r, s - 1).quotient.orders
                    f = self.differential(r, k - r, s - 1)
                g = self.differential(r, k, s)
                tgt = self.target_quotient(r, k, s).orders if g is not None else []
                f = f if f is not None else [[0] * len(src) for _ in mid]
                g = g if g is not None else []
                h = module_homology(src, mid, tgt, f, g, self.p)
                nxt = self.spot(r + 1 if r < self.r_max else None, k, s).group
                if h != nxt:
                    bad.append({"page": r, "weight": k, "degree": s, "homology": str(h), "next": str(nxt)})
        return bad

    def check_d_squared(self):
        bad = []
        for r in range(1, self.r_max + 1):
            for k, s in self.inner_keys:
                a = self.differential(r, k, s)
                if not a or (k + r, s + 1) not in self.inner_keys:
                    continue
                b = self.differential(r, k + r, s + 1)
                if not b:
                    continue
                orders = self.target_quotient(r, k + r, s + 1).orders
                for i, o in enumerate(orders):
                    for j in range(len(a[0])):
                        v = sum(b[i][t] * a[t][j] for t in range(len(a)))
                        if (v % o) if o else v:
                            bad.append((r, k, s))
        return bad

    def infinity(self):
        return {(k, s): self.spot(None, k, s) for k, s in self.inner_keys}

    def as_dict(self, max_page=None):
        pages = {}
        top = self.r_max if max_page is None else min(max_page, self.r_max)
        for r in list(range(1, top + 1)) + [None]:
            entries = []
            for k, s in self.inner_keys:
                sp = self.spot(r, k, s)
                if sp.group.is_trivial():
                    continue
                entries.append(
                    {
                        "weight": k,
                        "degree": s,
                        "group": sp.group.as_dict(),
                        "exact": sp.exact,
                        "flags": [] if sp.exact else ["EDGE_OF_TRUNCATION"],
                    }
                )
            pages["inf" if r is None else str(r)] = entries
        return {"window": {"weight_cap": self.K, "s_cap": self.S, "label": self.label}, "pages": pages}


def compute_pages(complex_, r_max=None, label=""):
    """Pages of the weight spectral sequence of a BarComplex or FilteredComplex."""
    fc = complex_ if isinstance(complex_, FilteredComplex) else FilteredComplex.from_bar(complex_)
    if isinstance(complex_, barmod.BarComplex):
        fc.bar = complex_
    pages = SpectralPages(Reduction(fc), r_max, label)
    pages.bar = getattr(fc, "bar", None)
    return pages


# -- windows --------------------------------------------------------------------------


def windows_for(pres, weight_cap=None, s_cap=None, budget=barmod.DEFAULT_WORD_BUDGET, trivial=False, probe=60_000):
    """Bar complexes covering the spots the family checks need.

    One full window (weight <= weight_cap, default 2p) when it has at most
    ``probe`` words; otherwise a full window at weight p + 1 plus a
    low-degree window (s <= 2) at the requested weight cap.
    """
    p = pres.prime
    K = weight_cap if weight_cap is not None else 2 * p
    data = barmod.AlgebraData.from_presentation(pres, trivial)
    first = budget if s_cap is not None else min(budget, probe)
    try:
        return [barmod.BarComplex(data, K, s_cap, first)]
    except ThetabarError as exc:
        if exc.code != "CAPS_TOO_LARGE" or (s_cap is not None and s_cap <= 2):
            raise
    low = barmod.BarComplex(data, min(K, p + 1), None, budget)
    if K <= p + 1:
        return [low]
    return [low, barmod.BarComplex(data, K, 2, budget)]


# -- family verification ------------------------------------------------------------


@dataclass
class CollapseReport:
    prime: int
    families: dict
    residuals: list
    e_infinity: dict
    checks: dict
    flags: list

    @property
    def clean(self):
        return not self.residuals and all(v["ok"] for v in self.checks.values())

    def as_dict(self):
        return {
            "prime": self.prime,
            "clean": self.clean,
            "families": self.families,
            "residuals": self.residuals,
            "e_infinity": self.e_infinity,
            "checks": self.checks,
            "flags": self.flags,
        }


def _theta_matrix(pres):
    return [[pres.theta.data[i][j] for j in range(pres.rank)] for i in range(pres.rank)]


def _algebra_parities(pres, trivial):
    data = barmod.AlgebraData.from_presentation(pres, trivial)
    basis = data.basis()
    odd = sum(1 for b in basis if len(b) % 2)
    return odd, len(basis) - odd


def expected_e2(pres, k, s, trivial=False):
    """Free rank predicted on E_2 at (k, s): generators at (1, 0), theta-bar brackets at (pn, n)."""
    p = pres.prime
    if trivial:
        return None
    if (k, s) == (1, 0):
        return pres.rank
    if k % p == 0 and s == k // p:
        odd, even = _algebra_parities(pres, trivial)
        return lie_dp_rank(k // p, odd, even)
    return 0


class _ThetaDual:
    """Theta as a cochain map, (Theta x)(w) = x(Theta-dual w), on full cells."""

    def __init__(self, complex_):
        self.complex = complex_
        self._pairs = {}

    def pairs(self, s):
        if s not in self._pairs:
            out = []
            words = self.complex.words.get(s, [])
            idx = self.complex.index.get(s - 1, {})
            for j, m in enumerate(words):
                for rest, c in barmod.theta_vee_word(m).items():
                    out.append((j, idx[rest], c))
            self._pairs[s] = out
        return self._pairs[s]

    def apply(self, s, x):
        """Theta of a full degree-s cochain, a degree-(s+1) cochain."""
        out = {}
        for j, i, c in self.pairs(s + 1):
            v = x.get(i, 0)
            if v:
                out[j] = out.get(j, 0) + c * v
        return out


def _coords_zero(coords, orders):
    return all((v % o == 0) if o else v == 0 for v, o in zip(coords, orders))


def verify_families(pages, pres, trivial=False):
    """Attribute every nonzero differential to a family and check the predictions.

    ``pages`` is one SpectralPages or a list of them (windows); the pages must
    come from :func:`compute_pages` on bar complexes so that theta-bar can be
    transported. Results are merged over windows.
    """
    if isinstance(pages, SpectralPages):
        pages = [pages]
    hyp = verify_hypotheses(pres)
    p = pres.prime
    T = _theta_matrix(pres)
    n = pres.rank
    families = {"d1": [], "d_p_minus_1": [], "d_p": []}
    residuals = []
    flags = []
    checks = {
        "hypotheses": {"ok": hyp.ok, "detail": hyp.as_dict()},
        "e2": {"ok": True, "spots": []},
        "d_p_minus_1": {"ok": True, "witness": None},
        "d_p_leibniz": {"ok": True, "witnesses": []},
        "homology": {"ok": True, "bad": []},
        "d_squared": {"ok": True, "bad": []},
        "e_infinity": {"ok": True},
    }
    seen_diff = set()
    einf = {}

    for pg in pages:
        # consistency of the page machinery itself
        bad = pg.check_homology()
        if bad:
            checks["homology"]["ok"] = False
            checks["homology"]["bad"].extend(bad)
        dd = pg.check_d_squared()
        if dd:
            checks["d_squared"]["ok"] = False
            checks["d_squared"]["bad"].extend(dd)

        # (a) E_2 by rank
        if not trivial:
            for k, s in pg.inner_keys:
                sp = pg.spot(2, k, s)
                if not sp.exact:
                    continue
                want = expected_e2(pres, k, s)
                got = sp.group
                ok = got.free_rank == want and not got.exponents
                entry = {"weight": k, "degree": s, "expected_rank": want, "found": got.as_dict(), "ok": ok, "window": pg.label}
                if not ok or want:
                    checks["e2"]["spots"].append(entry)
                if not ok:
                    checks["e2"]["ok"] = False

        # attribution of nonzero differentials
        for r, k, s in pg.nonzero_differentials():
            if not pg.exact(r, k, s) or k + r > pg.K:
                flags.append({"code": "EDGE_OF_TRUNCATION", "page": r, "weight": k, "degree": s, "window": pg.label})
                continue
            key = (r, k, s)
            if key in seen_diff:
                continue
            seen_diff.add(key)
            item = {"page": r, "from": [k, s], "to": [k + r, s + 1], "window": pg.label}
            if r == 1:
                families["d1"].append(item)
            elif r == p - 1 and (k, s) == (1, 0):
                families["d_p_minus_1"].append(item)
            elif r == p and k % p == 0 and s == k // p:
                families["d_p"].append(item)
            else:
                residuals.append(item)

        if pg.bar is None or trivial:
            continue
        red = pg.red
        bar = pg.bar
        theta = _ThetaDual(bar)

        # (b) d_{p-1} on generator duals against -theta^T
        if n and pg.exact(p - 1, 1, 0) and p <= pg.K and pg.S >= 2 and checks["d_p_minus_1"]["witness"] is None:
            src = pg.spot(p - 1, 1, 0)
            tgt = pg.spot(p - 1, p, 1)
            gen_cells = [bar.index[0][barmod.freet.generator(i)] for i in range(n)]
            th_cells = [bar.index[1][((((1, barmod.freet.generator(j)), 1),))] for j in range(n)]
            th_classes = []
            for j in range(n):
                y = red.cochain_from_full(1, {th_cells[j]: 1})
                th_classes.append(tgt.quotient.coordinates(tgt.vector(y)))
            images, matches = [], True
            for i in range(n):
                x = red.cochain_from_full(0, {gen_cells[i]: 1})
                img = pg.apply_differential(p - 1, 1, 0, src.vector(x))
                want = [0] * len(tgt.quotient)
                for j in range(n):
                    for t in range(len(want)):
                        want[t] += -T[i][j] * th_classes[j][t]
                diff = [a - b for a, b in zip(img, want)]
                if not _coords_zero(diff, tgt.quotient.orders):
                    matches = False
                images.append(img)
            matrix = _solve_in_classes(th_classes, images, tgt.quotient.orders)
            expected = [[-T[i][j] for i in range(n)] for j in range(n)]
            witness = {
                "window": pg.label,
                "source": [1, 0],
                "target": [p, 1],
                "matrix": matrix,
                "expected": expected,
                "matches": matches and (matrix is None or matrix == expected),
            }
            checks["d_p_minus_1"]["witness"] = witness
            if not witness["matches"]:
                checks["d_p_minus_1"]["ok"] = False

        # (c) d_p(theta-bar w) = theta-bar(d_1 w)
        for k, s in pg.inner_keys:
            if p * (k + 1) > pg.K or s + 2 > pg.S or not pg.exact(1, k, s):
                continue
            e1 = pg.spot(1, k, s)
            if not len(e1.quotient):
                continue
            src_spot = pg.spot(p, p * k, s + 1)
            srcs, ok_all = [], True
            for gvec in e1.quotient.generators:
                w = {j: v for j, v in zip(e1.cells, gvec) if v}
                tw = red.cochain_from_full(s + 1, theta.apply(s, red.cochain_to_full(s, w)))
                svec = src_spot.vector(tw)
                if not src_spot.quotient.contains(svec):
                    ok_all = False
                    checks["d_p_leibniz"]["witnesses"].append(
                        {"window": pg.label, "theta_class_from": [p * k, s + 1], "ok": False, "reason": "not a cycle"}
                    )
                    continue
                srcs.append(src_spot.quotient.coordinates(svec))
                lhs = pg.push(p, p * k, s + 1, svec)
                d1w = pg.coboundary(s, pg.lift(e1, gvec), k + 1)
                rhs_full = theta.apply(s + 1, red.cochain_to_full(s + 1, d1w))
                tgt_spot = pg.spot(p, p * (k + 1), s + 2)
                rhs = tgt_spot.vector(red.cochain_from_full(s + 2, rhs_full))
                ok = pg.same_class(p, p * (k + 1), s + 2, lhs, rhs)
                zero = pg.same_class(p, p * (k + 1), s + 2, lhs, [0] * len(lhs))
                ok_all = ok_all and ok
                checks["d_p_leibniz"]["witnesses"].append(
                    {
                        "window": pg.label,
                        "theta_class_from": [p * k, s + 1],
                        "d1_class_from": [k, s],
                        "d_p_nonzero": not zero,
                        "ok": ok,
                    }
                )
            # the theta-bar images must generate the spot for d_p to be fully attributed
            if len(src_spot.quotient) and not _generates(srcs, src_spot.quotient.orders, p):
                ok_all = False
                checks["d_p_leibniz"]["witnesses"].append(
                    {"window": pg.label, "theta_class_from": [p * k, s + 1], "ok": False, "reason": "theta-bar classes do not span E_p"}
                )
            if not ok_all:
                checks["d_p_leibniz"]["ok"] = False

        for (k, s), sp in pg.infinity().items():
            if not sp.exact:
                if not sp.group.is_trivial():
                    flags.append({"code": "EDGE_OF_TRUNCATION", "page": "inf", "weight": k, "degree": s, "window": pg.label})
                continue
            einf.setdefault((k, s), sp.group)

    # (d) E_infinity against coker theta^T
    coker = cokernel_p_part(IntMatrix.from_rows([[T[j][i] for j in range(n)] for i in range(n)], n), p) if n else FiniteAbelianPGroup(p, (), 0)
    nonzero = {ks: g for ks, g in einf.items() if not g.is_trivial()}
    total = FiniteAbelianPGroup(
        p,
        tuple(e for g in nonzero.values() for e in g.exponents),
        sum(g.free_rank for g in nonzero.values()),
    )
    if trivial:
        e_ok = True
    else:
        e_ok = total == coker and set(nonzero) <= {(p, 1)}
    checks["e_infinity"] = {"ok": e_ok, "expected": coker.as_dict(), "found": total.as_dict()}
    e_summary = {
        "total": total.as_dict(),
        "spots": [{"weight": k, "degree": s, "group": g.as_dict()} for (k, s), g in sorted(nonzero.items())],
        "coker_theta_transpose": coker.as_dict(),
    }
    return CollapseReport(p, families, residuals, e_summary, checks, flags)


def _solve_in_classes(classes, images, orders):
    """Integer matrix M with image_i = sum_j M[j][i] class_j, when the target is free."""
    if any(orders) or not classes:
        return None
    n = len(classes)
    dim = len(orders)
    A = IntMatrix.from_columns(classes, dim)
    solver = IntegerSolver(A)
    cols = []
    for img in images:
        x = solver.solve(img)
        if x is None:
            return None
        cols.append(x)
    return [[cols[i][j] for i in range(len(images))] for j in range(n)]


def _generates(vectors, orders, p):
    dim = len(orders)
    if dim == 0:
        return True
    rel = [[o if i == j else 0 for i in range(dim)] for j, o in enumerate(orders) if o]
    ident = [[int(i == j) for i in range(dim)] for j in range(dim)]
    return LatticeQuotient(ident, list(vectors) + rel, dim, p).group.is_trivial()


def run_verification(pres, weight_cap=None, s_cap=None, budget=barmod.DEFAULT_WORD_BUDGET, trivial=False):
    """Build windows, compute their pages and verify the families. Returns (pages, report)."""
    complexes = windows_for(pres, weight_cap, s_cap, budget, trivial)
    pages = [compute_pages(c, label=f"K={c.weight_cap},S={c.s_cap}") for c in complexes]
    return pages, verify_families(pages, pres, trivial)
