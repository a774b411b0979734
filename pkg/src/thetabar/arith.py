"""Exact integer linear algebra with p-primary readout.

Dense routines (``smith_normal_form``, kernels, lattice quotients) work on
:class:`IntMatrix`. Large sparse differentials go through
:func:`plocal_invariants`, a valuation-greedy elimination over Z localized at
p that never leaves the integers.
"""

from dataclasses import dataclass, field
import heapq
from math import gcd

from thetabar.errors import ThetabarError


def valuation(n, p):
    """p-adic valuation of an integer; ``None`` stands for +infinity."""
    if n == 0:
        return None
    n = abs(n)
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def is_prime(n):
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def prime_to_p_part(n, p):
    n = abs(n)
    while n and n % p == 0:
        n //= p
    return n


class IntMatrix:
    """A rows x cols matrix of Python ints, stored row-major."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows, cols, data=None):
        self.rows = rows
        self.cols = cols
        if data is None:
            data = [[0] * cols for _ in range(rows)]
        if len(data) != rows or any(len(r) != cols for r in data):
            raise ThetabarError("SHAPE", f"expected {rows}x{cols} entries")
        self.data = data

    @classmethod
    def from_rows(cls, rows, cols=None):
        rows = [list(map(int, r)) for r in rows]
        if cols is None:
            cols = len(rows[0]) if rows else 0
        return cls(len(rows), cols, rows)

    @classmethod
    def identity(cls, n):
        return cls(n, n, [[int(i == j) for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, rows, cols):
        return cls(rows, cols)

    @classmethod
    def from_columns(cls, columns, rows):
        data = [[0] * len(columns) for _ in range(rows)]
        for j, col in enumerate(columns):
            for i, v in enumerate(col):
                data[i][j] = v
        return cls(rows, len(columns), data)

    def copy(self):
        return IntMatrix(self.rows, self.cols, [r[:] for r in self.data])

    def __getitem__(self, ij):
        i, j = ij
        return self.data[i][j]

    def __eq__(self, other):
        return (
            isinstance(other, IntMatrix)
            and self.rows == other.rows
            and self.cols == other.cols
            and self.data == other.data
        )

    def __repr__(self):
        return f"IntMatrix({self.rows}x{self.cols}, {self.data})"

    def tolist(self):
        return [r[:] for r in self.data]

    def column(self, j):
        return [self.data[i][j] for i in range(self.rows)]

    def columns(self):
        return [self.column(j) for j in range(self.cols)]

    def transpose(self):
        return IntMatrix(self.cols, self.rows, [list(c) for c in zip(*self.data)] if self.rows else [[] for _ in range(self.cols)])

    def __matmul__(self, other):
        if self.cols != other.rows:
            raise ThetabarError("SHAPE", f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}")
        ot = other.transpose().data
        return IntMatrix(
            self.rows,
            other.cols,
            [[sum(a * b for a, b in zip(r, c)) for c in ot] for r in self.data],
        )

    def __add__(self, other):
        return IntMatrix(self.rows, self.cols, [[a + b for a, b in zip(r, s)] for r, s in zip(self.data, other.data)])

    def __sub__(self, other):
        return IntMatrix(self.rows, self.cols, [[a - b for a, b in zip(r, s)] for r, s in zip(self.data, other.data)])

    def scaled(self, c):
        return IntMatrix(self.rows, self.cols, [[c * a for a in r] for r in self.data])

    def is_zero(self):
        return not any(any(r) for r in self.data)

    def hstack(self, other):
        if self.rows != other.rows:
            raise ThetabarError("SHAPE", "hstack needs equal row counts")
        return IntMatrix(self.rows, self.cols + other.cols, [a + b for a, b in zip(self.data, other.data)])

    def vstack(self, other):
        if self.cols != other.cols:
            raise ThetabarError("SHAPE", "vstack needs equal column counts")
        return IntMatrix(self.rows + other.rows, self.cols, [r[:] for r in self.data] + [r[:] for r in other.data])

    def submatrix(self, rows, cols):
        return IntMatrix(len(rows), len(cols), [[self.data[i][j] for j in cols] for i in rows])

    def determinant(self):
        if self.rows != self.cols:
            raise ThetabarError("SHAPE", "determinant of a non-square matrix")
        # Bareiss fraction-free elimination
        n = self.rows
        a = [r[:] for r in self.data]
        sign, prev = 1, 1
        for k in range(n - 1):
            if a[k][k] == 0:
                for i in range(k + 1, n):
                    if a[i][k]:
                        a[k], a[i] = a[i], a[k]
                        sign = -sign
                        break
                else:
                    return 0
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            prev = a[k][k]
        return sign * a[n - 1][n - 1] if n else 1


@dataclass(frozen=True)
class FiniteAbelianPGroup:
    """Z^free_rank plus the sum of Z/p^e over ``exponents`` (ascending)."""

    prime: int
    exponents: tuple = ()
    free_rank: int = 0

    def __post_init__(self):
        exps = tuple(sorted(int(e) for e in self.exponents if e))
        if any(e < 0 for e in exps):
            raise ThetabarError("EXPONENT", "exponents must be positive")
        object.__setattr__(self, "exponents", exps)

    @property
    def order(self):
        if self.free_rank:
            return None
        return self.prime ** sum(self.exponents)

    @property
    def length(self):
        return sum(self.exponents)

    def is_trivial(self):
        return not self.exponents and not self.free_rank

    def divisors(self):
        return [self.prime ** e for e in self.exponents]

    def __str__(self):
        parts = [f"Z/{self.prime}" + (f"^{e}" if e > 1 else "") for e in self.exponents]
        if self.free_rank:
            parts.append("Z" if self.free_rank == 1 else f"Z^{self.free_rank}")
        return " + ".join(parts) if parts else "0"

    def as_dict(self):
        return {"prime": self.prime, "exponents": list(self.exponents), "free_rank": self.free_rank}


@dataclass
class SNFResult:
    U: IntMatrix
    D: IntMatrix
    V: IntMatrix
    U_inv: IntMatrix = None
    V_inv: IntMatrix = None

    def diagonal(self):
        return [self.D.data[i][i] for i in range(min(self.D.rows, self.D.cols))]

    @property
    def rank(self):
        return sum(1 for d in self.diagonal() if d)


def smith_normal_form(M, track_u=True, inverses=False):
    """Return U, D, V with U*M*V = D, D diagonal, d_i | d_{i+1}, d_i >= 0.

    With ``track_u=False`` the row transform is skipped and U is returned
    as ``None`` (much cheaper for tall matrices). With ``inverses=True`` the
    inverses of U and V are carried along too, which is far cheaper than
    inverting the (often large-entried) transforms afterwards.
    """
    m, n = M.rows, M.cols
    A = [r[:] for r in M.data]
    U = [[int(i == j) for j in range(m)] for i in range(m)] if track_u else None
    V = [[int(i == j) for j in range(n)] for i in range(n)]
    Ui = [[int(i == j) for j in range(m)] for i in range(m)] if inverses and track_u else None
    Vi = [[int(i == j) for j in range(n)] for i in range(n)] if inverses else None

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        if track_u:
            U[i], U[j] = U[j], U[i]
        if Ui is not None:
            for r in Ui:
                r[i], r[j] = r[j], r[i]

    def swap_cols(i, j):
        for r in A:
            r[i], r[j] = r[j], r[i]
        for r in V:
            r[i], r[j] = r[j], r[i]
        if Vi is not None:
            Vi[i], Vi[j] = Vi[j], Vi[i]

    def add_row(dst, src, q):
        # row_dst -= q * row_src
        if q:
            ra, rs = A[dst], A[src]
            for k in range(n):
                if rs[k]:
                    ra[k] -= q * rs[k]
            if not track_u:
                return
            ua, us = U[dst], U[src]
            for k in range(m):
                if us[k]:
                    ua[k] -= q * us[k]
            if Ui is not None:
                # U <- E U with E = I - q e_dst e_src^T, so U^-1 <- U^-1 (I + q e_dst e_src^T)
                for r in Ui:
                    if r[dst]:
                        r[src] += q * r[dst]

    def add_col(dst, src, q):
        if q:
            for r in A:
                if r[src]:
                    r[dst] -= q * r[src]
            for r in V:
                if r[src]:
                    r[dst] -= q * r[src]
            if Vi is not None:
                vd, vs = Vi[dst], Vi[src]
                for k in range(n):
                    if vd[k]:
                        vs[k] += q * vd[k]

    t = 0
    while t < min(m, n):
        best = None
        for i in range(t, m):
            row = A[i]
            for j in range(t, n):
                v = row[j]
                if v and (best is None or abs(v) < best[0]):
                    best = (abs(v), i, j)
                    if best[0] == 1:
                        break
            if best and best[0] == 1:
                break
        if best is None:
            break
        _, i, j = best
        swap_rows(t, i)
        swap_cols(t, j)
        while True:
            piv = A[t][t]
            done = True
            for i in range(t + 1, m):
                if A[i][t]:
                    add_row(i, t, A[i][t] // piv)
                    if A[i][t]:
                        done = False
            for j in range(t + 1, n):
                if A[t][j]:
                    add_col(j, t, A[t][j] // piv)
                    if A[t][j]:
                        done = False
            if not done:
                best = None
                for i in range(t + 1, m):
                    if A[i][t] and (best is None or abs(A[i][t]) < best[0]):
                        best = (abs(A[i][t]), i, "r")
                for j in range(t + 1, n):
                    if A[t][j] and (best is None or abs(A[t][j]) < best[0]):
                        best = (abs(A[t][j]), j, "c")
                if best[2] == "r":
                    swap_rows(t, best[1])
                else:
                    swap_cols(t, best[1])
                continue
            bad = None
            for i in range(t + 1, m):
                for j in range(t + 1, n):
                    if A[i][j] % piv:
                        bad = i
                        break
                if bad is not None:
                    break
            if bad is None:
                break
            add_row(t, bad, -1)
        if A[t][t] < 0:
            A[t] = [-x for x in A[t]]
            if track_u:
                U[t] = [-x for x in U[t]]
            if Ui is not None:
                for r in Ui:
                    r[t] = -r[t]
        t += 1
    return SNFResult(
        IntMatrix(m, m, U) if track_u else None,
        IntMatrix(m, n, A),
        IntMatrix(n, n, V),
        IntMatrix(m, m, Ui) if Ui is not None else None,
        IntMatrix(n, n, Vi) if Vi is not None else None,
    )


def cokernel_p_part(M, p):
    """p-primary part and free rank of coker(M: Z^cols -> Z^rows)."""
    exps = []
    rank = 0
    for v in plocal_invariants(dense_to_columns(M), p):
        rank += 1
        if v:
            exps.append(v)
    return FiniteAbelianPGroup(p, tuple(exps), M.rows - rank)


def kernel_basis(M):
    """Columns spanning the (saturated) integer kernel of M.

    Column-echelon reduction with the column transform tracked; the columns
    of the transform that end up over zero columns span the kernel.
    """
    m, n = M.rows, M.cols
    cols = [[M.data[i][j] for i in range(m)] for j in range(n)]
    trans = [[int(i == j) for i in range(n)] for j in range(n)]
    active = list(range(n))
    for i in range(m):
        nz = [j for j in active if cols[j][i]]
        if not nz:
            continue
        while len(nz) > 1:
            nz.sort(key=lambda j: abs(cols[j][i]))
            piv = nz[0]
            pv = cols[piv][i]
            rest = []
            for j in nz[1:]:
                q = cols[j][i] // pv
                cj, cp, tj, tp = cols[j], cols[piv], trans[j], trans[piv]
                for r in range(i, m):
                    if cp[r]:
                        cj[r] -= q * cp[r]
                for r in range(n):
                    if tp[r]:
                        tj[r] -= q * tp[r]
                if cj[i]:
                    rest.append(j)
            nz = [piv] + rest
        active.remove(nz[0])
    return [trans[j] for j in active]


def homology_at(d_out, d_in, p):
    """ker(d_out) / im(d_in) at the middle term, as free rank + p-torsion."""
    if d_out.cols != d_in.rows:
        raise ThetabarError("SHAPE", "d_out and d_in do not compose")
    if not (d_out @ d_in).is_zero():
        raise ThetabarError("COMPOSITION_NONZERO", "d_out * d_in != 0")
    snf = smith_normal_form(d_out, track_u=False, inverses=True)
    r = snf.rank
    n = d_out.cols
    # coordinates of im(d_in) in the kernel basis V[:, r:]
    coords = snf.V_inv @ d_in
    restricted = IntMatrix(n - r, d_in.cols, coords.data[r:])
    return cokernel_p_part(restricted, p)


def inverse_unimodular(V):
    if V.rows != V.cols:
        raise ThetabarError("NOT_UNIMODULAR", "matrix is not invertible over Z")
    snf = smith_normal_form(V)
    if any(d != 1 for d in snf.diagonal()):
        raise ThetabarError("NOT_UNIMODULAR", "matrix is not invertible over Z")
    # U V W = I  =>  V^{-1} = W U
    return snf.V @ snf.U


def dense_to_columns(M):
    cols = []
    for j in range(M.cols):
        c = {}
        for i in range(M.rows):
            v = M.data[i][j]
            if v:
                c[i] = v
        cols.append(c)
    return cols


def plocal_invariants(columns, p):
    """Valuations of the nonzero invariant factors of a sparse matrix over Z_(p).

    ``columns`` is a list of dicts ``{row: value}`` and is not modified.
    The result has one entry per unit of rank, so ``len(result)`` is the
    rank over Q and the positive entries give the p-torsion of the cokernel.
    """
    cols = {}
    rows = {}
    for j, c in enumerate(columns):
        c = {i: v for i, v in c.items() if v}
        if c:
            cols[j] = c
            for i in c:
                rows.setdefault(i, set()).add(j)
    out = []
    shift = 0
    # shortest columns first; a column with no p-unit waits until it is
    # touched again or everything left is divisible by p
    heap = [(len(c), j) for j, c in cols.items()]
    heapq.heapify(heap)
    stalled = set()
    while cols:
        if not heap:
            for c in cols.values():
                for i in c:
                    c[i] //= p
            shift += 1
            heap = [(len(c), j) for j, c in cols.items()]
            heapq.heapify(heap)
            stalled.clear()
            continue
        n, j = heapq.heappop(heap)
        c = cols.get(j)
        if c is None or len(c) != n or j in stalled:
            continue
        i = _unit_pivot(c, rows, p)
        if i is None:
            stalled.add(j)
            continue
        out.append(shift)
        for k in _eliminate(cols, rows, j, i, p):
            stalled.discard(k)
            heapq.heappush(heap, (len(cols[k]), k))
    return out


def _unit_pivot(c, rows, p):
    best = None
    for i, v in c.items():
        if v % p:
            cost = 2 * len(rows[i]) + (abs(v) != 1)
            if best is None or cost < best[0]:
                best = (cost, i)
    return None if best is None else best[1]


def _eliminate(cols, rows, j, i, p):
    pc = cols.pop(j)
    for r in pc:
        rows[r].discard(j)
    u = pc[i]
    others = list(rows[i])
    touched = []
    for k in others:
        c = cols[k]
        a = c[i]
        g = gcd(u, a)
        su, sa = u // g, a // g
        # c <- su*c - sa*pc ; su is a p-unit
        if su != 1:
            for r in c:
                c[r] *= su
        for r, v in pc.items():
            nv = c.get(r, 0) - sa * v
            if nv:
                if r not in c:
                    rows[r].add(k)
                c[r] = nv
            elif r in c:
                del c[r]
                rows[r].discard(k)
        if abs(su) != 1:
            _normalize_column(c, p)
        if not c:
            del cols[k]
        else:
            touched.append(k)
    for r in pc:
        if not rows[r]:
            del rows[r]
    rows.pop(i, None)
    return touched


def _normalize_column(c, p):
    g = 0
    for v in c.values():
        g = gcd(g, v)
        if g == 1:
            return
    g = prime_to_p_part(g, p)
    if g > 1:
        for r in c:
            c[r] //= g


def rank_and_torsion(columns, p):
    """(rank over Q, p-torsion exponents of the cokernel) of a sparse matrix."""
    inv = plocal_invariants(columns, p)
    return len(inv), tuple(sorted(v for v in inv if v))


def sparse_homology(n, d_out_columns, d_in_columns, p):
    """Homology at a middle term of rank ``n`` from sparse differentials.

    Uses that the torsion of ker(d_out)/im(d_in) equals the torsion of
    coker(d_in) (the quotient by ker(d_out) embeds in a free module).
    """
    r_out = len(plocal_invariants(d_out_columns, p))
    inv_in = plocal_invariants(d_in_columns, p)
    exps = tuple(v for v in inv_in if v)
    return FiniteAbelianPGroup(p, exps, n - r_out - len(inv_in))


# -- lattice helpers (dense, exact over Z) ------------------------------------


def kernel_of_rows(rows, dim):
    """Basis of {x in Z^dim : r.x = 0 for every r in rows} (saturated)."""
    rows = [r for r in rows if any(r)]
    if not rows:
        return [[int(i == j) for i in range(dim)] for j in range(dim)]
    return kernel_basis(IntMatrix.from_rows(rows, dim))


class EchelonLattice:
    """A sublattice of Z^dim kept as an integer row-echelon basis.

    Each basis vector has a distinct leading column (its pivot) with a
    positive entry there. Supports insertion and exact coordinates.
    """

    def __init__(self, dim, vectors=()):
        self.dim = dim
        self.rows = {}
        for v in vectors:
            self.insert(v)

    @staticmethod
    def _lead(v, start=0):
        for c in range(start, len(v)):
            if v[c]:
                return c
        return None

    def insert(self, v):
        v = list(v)
        c = self._lead(v)
        while c is not None:
            b = self.rows.get(c)
            if b is None:
                if v[c] < 0:
                    v = [-x for x in v]
                self.rows[c] = v
                return True
            x, y = b[c], v[c]
            if y % x == 0:
                q = y // x
                v = [vi - q * bi for vi, bi in zip(v, b)]
            else:
                g, s, t = _xgcd(x, y)
                nb = [s * bi + t * vi for bi, vi in zip(b, v)]
                v = [(x // g) * vi - (y // g) * bi for bi, vi in zip(b, v)]
                self.rows[c] = nb
            c = self._lead(v, c + 1)
        return False

    def pivots(self):
        return sorted(self.rows)

    def basis(self):
        return [self.rows[c] for c in self.pivots()]

    def __len__(self):
        return len(self.rows)

    def coordinates(self, v):
        """Integer coefficients on ``basis()``, or ``None`` if v is outside."""
        v = list(v)
        piv = self.pivots()
        coords = [0] * len(piv)
        for k, c in enumerate(piv):
            if v[c]:
                b = self.rows[c]
                if v[c] % b[c]:
                    return None
                q = v[c] // b[c]
                coords[k] = q
                v = [vi - q * bi for vi, bi in zip(v, b)]
        if any(v):
            return None
        return coords

    def contains(self, v):
        return self.coordinates(v) is not None


def _xgcd(a, b):
    """(g, s, t) with s*a + t*b = g = gcd(a, b) > 0."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while b:
        q, r = divmod(a, b)
        a, b = b, r
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if a < 0:
        a, s0, t0 = -a, -s0, -t0
    return a, s0, t0


def span_basis(vectors, dim):
    """A Z-basis (list of vectors) of the span of ``vectors`` in Z^dim."""
    return EchelonLattice(dim, vectors).basis()


class IntegerSolver:
    """Solves A x = b over Z for a fixed matrix A (Smith form computed once)."""

    def __init__(self, A):
        self.A = A
        self._snf = smith_normal_form(A)
        self._diag = self._snf.diagonal()

    def solve(self, b):
        """Some integer x with A x = b, or ``None`` when there is none."""
        A = self.A
        U = self._snf.U.data
        z = [0] * A.cols
        for i in range(A.rows):
            rhs = sum(U[i][j] * b[j] for j in range(A.rows) if b[j])
            d = self._diag[i] if i < len(self._diag) else 0
            if d == 0:
                if rhs:
                    return None
            else:
                if rhs % d:
                    return None
                z[i] = rhs // d
        V = self._snf.V.data
        return [sum(V[i][j] * z[j] for j in range(A.cols) if z[j]) for i in range(A.cols)]


def solve_integer(A, b):
    """Some integer x with A x = b, or ``None`` when there is none over Z."""
    return IntegerSolver(A).solve(list(b))


class LatticeQuotient:
    """span(big) / span(small) over Z_(p), with coordinates for its elements.

    ``generators`` are vectors of the ambient Z^dim, one per cyclic summand;
    ``orders`` holds p^e for torsion summands and 0 for free ones.
    """

    def __init__(self, big, small, dim, p):
        self.p = p
        self.dim = dim
        self.lattice = EchelonLattice(dim, big)
        self.basis = self.lattice.basis()
        n = len(self.basis)
        cols = []
        for v in small:
            if any(v):
                c = self.lattice.coordinates(v)
                if c is None:
                    raise ThetabarError("NOT_IN_SPAN", "sublattice not contained in the lattice")
                cols.append(c)
        M = IntMatrix.from_columns(cols, n) if cols else IntMatrix(n, 0)
        snf = smith_normal_form(M, inverses=True)
        diag = snf.diagonal()
        self._U = snf.U.data
        Uinv = snf.U_inv
        self.rows = []
        self.orders = []
        self.exponents = []
        self.generators = []
        for k in range(n):
            d = diag[k] if k < len(diag) else 0
            if d == 0:
                e = None
            else:
                e = valuation(d, p)
                if e == 0:
                    continue
            self.rows.append(k)
            self.orders.append(0 if e is None else p ** e)
            self.exponents.append(e)
            coord = Uinv.column(k)
            self.generators.append([sum(self.basis[j][i] * coord[j] for j in range(n) if coord[j]) for i in range(dim)])
        self.group = FiniteAbelianPGroup(
            p, tuple(e for e in self.exponents if e is not None), sum(1 for e in self.exponents if e is None)
        )

    def coordinates_in_basis(self, v):
        return self.lattice.coordinates(v)

    def coordinates(self, v):
        """Coordinates of v (an element of span(big)) on the generators."""
        c = self.lattice.coordinates(v)
        if c is None:
            raise ThetabarError("NOT_IN_SPAN", "vector outside the lattice")
        out = []
        for k, order in zip(self.rows, self.orders):
            row = self._U[k]
            x = sum(row[j] * c[j] for j in range(len(c)) if c[j])
            out.append(x % order if order else x)
        return out

    def contains(self, v):
        return self.lattice.contains(v)

    def is_zero(self, v):
        return not any(self.coordinates(v))

    def __len__(self):
        return len(self.generators)


def module_homology(orders_in, orders_mid, orders_out, f, g, p):
    """Homology at the middle of M1 --f--> M2 --g--> M3 for cyclic-sum modules.

    ``orders_*`` give the order of each cyclic generator (0 = free); ``f`` and
    ``g`` are integer matrices (lists of rows) in generator coordinates.
    """
    n1, n2, n3 = len(orders_in), len(orders_mid), len(orders_out)
    # ker g: v with g v in the relation lattice of M3
    rel3 = [[orders_out[i] if i == j else 0 for i in range(n3)] for j in range(n3) if orders_out[j]]
    if n3:
        rows = []
        for i in range(n3):
            row = [g[i][j] for j in range(n2)] + [-r[i] for r in rel3]
            rows.append(row)
        ker = kernel_of_rows(rows, n2 + len(rel3))
        ker = [v[:n2] for v in ker]
    else:
        ker = [[int(i == j) for i in range(n2)] for j in range(n2)]
    small = [[f[i][j] for i in range(n2)] for j in range(n1)]
    small += [[orders_mid[i] if i == j else 0 for i in range(n2)] for j in range(n2) if orders_mid[j]]
    return LatticeQuotient(ker, small, n2, p).group
