"""The normalized monadic bar complex B(1, T, A) truncated by weight and degree.

A simplicial s-word is a basis element of ``T^s(A)``, stored as a nested
monomial (see :mod:`thetabar.freet`): the top monomial is the outermost
operation and its symbols hold the level below. Level 0 is a basis of the
augmentation ideal of A: square-free products of the odd generators, or just
the generators themselves for the trivial (square-zero, theta = 0) algebra.

Faces on an s-word: ``d_0`` is the augmentation of the outer level,
``d_i`` (0 < i < s) composes levels i and i+1, and ``d_s`` applies the
algebra structure map at the bottom. The boundary is ``sum (-1)^i d_i`` and
words in the image of a degeneracy are dropped (normalized complex).
"""

import itertools
import json
from bisect import bisect_left
from dataclasses import dataclass, field

from thetabar import freet
from thetabar.errors import ThetabarError
from thetabar.freet import (
    add_into,
    bare,
    epsilon,
    free_extend,
    is_bare,
    monomial_parity,
    monomial_weight,
    mu,
    mul_monomials,
)

DEFAULT_WORD_BUDGET = 400_000


@dataclass(frozen=True)
class AlgebraData:
    """The theta-algebra A seen by the bar construction.

    ``theta`` is the matrix of theta on the generator span in the column
    convention ``theta(x_j) = sum_i theta[i][j] x_i``.
    """

    prime: int
    ngens: int
    theta: tuple
    trivial: bool = False

    @classmethod
    def from_presentation(cls, pres, trivial=False):
        return cls(pres.prime, len(pres.generators), tuple(tuple(r) for r in pres.theta.data), trivial)

    def basis(self):
        g = self.ngens
        if self.trivial:
            return [freet.generator(j) for j in range(g)]
        out = []
        for r in range(1, g + 1):
            for c in itertools.combinations(range(g), r):
                out.append(tuple((j, 1) for j in c))
        return sorted(out)


class _AlgebraOps:
    """theta and products inside A (level 0)."""

    def __init__(self, data):
        self.data = data
        self.p = data.prime
        self._theta = {}

    def psi_generator(self, j):
        p = self.p
        return {freet.generator(i): p * self.data.theta[i][j] for i in range(self.data.ngens) if self.data.theta[i][j]}

    def psi(self, a):
        out = {freet.ONE: 1}
        for j, _ in a:
            out = freet.multiply(out, self.psi_generator(j))
        return out

    def theta_basis(self, a, i=1):
        key = (a, i)
        if key in self._theta:
            return self._theta[key]
        if i == 0:
            res = {a: 1}
        else:
            prev = self.theta_basis(a, i - 1)
            res = freet.theta_from_psi(prev, self.p, self.psi)
        self._theta[key] = res
        return res

    def theta_element(self, v, i):
        if i == 0:
            return dict(v)
        out = v
        for _ in range(i):
            if len(out) == 1 and next(iter(out.values())) == 1:
                out = self.theta_basis(next(iter(out)), 1)
            else:
                out = freet.theta_from_psi(out, self.p, self.psi)
        return out

    def structure_map(self, m):
        """alpha: T(A) -> A on a level-1 monomial."""
        if self.data.trivial:
            return epsilon(m)
        out = {freet.ONE: 1}
        for (i, a), e in m:
            t = self.theta_basis(a, i)
            for _ in range(e):
                out = freet.multiply(out, t)
                if not out:
                    return {}
        return {k: v for k, v in out.items() if k}


def degeneracy(m, j):
    """The degeneracy s_j applied to a basis word (no sign: a basis bijection up to order)."""
    if j == 0:
        return bare(m)
    fs = [((i, degeneracy(b, j - 1)), e) for (i, b), e in m]
    fs.sort(key=lambda f: f[0])
    return tuple(fs)


_MASKS = {}


def degeneracy_mask(m):
    """The set of j with m in the image of s_j."""
    r = _MASKS.get(m)
    if r is not None:
        return r
    if isinstance(m[0][0], int):
        r = frozenset()
    else:
        common = None
        for (_, b), _ in m:
            mb = degeneracy_mask(b)
            common = mb if common is None else common & mb
            if not common:
                break
        r = frozenset(j + 1 for j in common or ())
        if is_bare(m):
            r = r | {0}
    _MASKS[m] = r
    return r


def is_degenerate(m):
    return bool(degeneracy_mask(m))


def word_level(m):
    return freet.monomial_level(m)


def _enumerate_words(level0, p, K, S, budget):
    """Nondegenerate words per simplicial degree, using Eilenberg-Zilber.

    Every basis word is uniquely s_J(c) with c nondegenerate, so the symbols
    available one level up are built from the nondegenerate cores. A core of
    level l >= 1 has weight >= l + 1, which prunes degeneracies that could
    never be completed to a nondegenerate word within the weight cap.
    """
    nd = {0: [(m, 1) for m in level0]}
    full = {0: [(m, 1, frozenset()) for m in level0]}
    total = len(level0)
    for s in range(1, S + 1):
        syms = []
        for b, w, mask in full[s - 1]:
            par = monomial_parity(b)
            i = 0
            while p ** i * w <= K:
                syms.append(((i, b), p ** i * w, mask, par))
                i += 1
        syms.sort(key=lambda t: -t[1])
        negw = [-t[1] for t in syms]
        out = []
        allj = frozenset(range(s - 1))

        def rec(start, R, inter, chosen):
            if chosen and not inter:
                if not (len(chosen) == 1 and chosen[0][1] == 1 and chosen[0][0][0] == 0):
                    out.append((tuple(sorted(chosen, key=lambda f: f[0])), K - R))
            if inter and R < len(inter) + 1:
                return
            lo = max(start, bisect_left(negw, -R))
            for idx in range(lo, len(syms)):
                key, w, mask, par = syms[idx]
                emax = 1 if par else R // w
                for e in range(1, emax + 1):
                    rec(idx + 1, R - e * w, inter & mask, chosen + [(key, e)])

        rec(0, K, allj, [])
        total += len(out)
        if total > budget:
            raise ThetabarError(
                "CAPS_TOO_LARGE",
                f"more than {budget} normalized words below weight {K} and degree {s}",
            )
        nd[s] = out
        if s < S:
            fs = []
            for lev in range(0, s + 1):
                for J in itertools.combinations(range(s), s - lev):
                    for c, w in nd[lev]:
                        if J and K - w < len(J) + 1:
                            continue
                        m = c
                        for j in J:
                            m = degeneracy(m, j)
                        fs.append((m, w, frozenset(J)))
            full[s] = fs
    return nd


class BarComplex:
    """Normalized B(1, T, A) with weight <= weight_cap and degree <= s_cap.

    ``words[s]`` lists the s-words sorted by (weight, word); ``boundary[s]``
    is a list of sparse columns ``{row index in words[s-1]: coefficient}``.
    """

    def __init__(self, algebra, weight_cap, s_cap=None, budget=DEFAULT_WORD_BUDGET):
        if weight_cap < 1:
            raise ThetabarError("WEIGHT_WINDOW", "weight cap must be >= 1")
        if s_cap is None:
            s_cap = weight_cap + 1
        if s_cap < 1:
            raise ThetabarError("CAP_TOO_SMALL", "s_cap must be >= 1")
        self.algebra = algebra
        self.p = algebra.prime
        self.weight_cap = weight_cap
        self.s_cap = s_cap
        self.ops = _AlgebraOps(algebra)
        self._face_cache = {}
        level0 = algebra.basis()
        nd = _enumerate_words(level0, self.p, weight_cap, s_cap, budget)
        self.words = {}
        self.weights = {}
        self.index = {}
        for s in range(0, s_cap + 1):
            items = sorted(nd.get(s, []), key=lambda t: (t[1], t[0]))
            self.words[s] = [m for m, _ in items]
            self.weights[s] = [w for _, w in items]
            self.index[s] = {m: k for k, m in enumerate(self.words[s])}
        self.boundary = {}
        for s in range(1, s_cap + 1):
            self.boundary[s] = [self._boundary_column(m, s) for m in self.words[s]]

    # -- faces ----------------------------------------------------------------

    def face(self, m, i):
        key = (m, i)
        r = self._face_cache.get(key)
        if r is not None:
            return r
        s = word_level(m)
        if i == 0:
            r = epsilon(m)
        elif i == s:
            if s == 1:
                r = self.ops.structure_map(m)
            else:
                r = free_extend(m, lambda b: self.face(b, s - 1), self.p)
        elif i == 1:
            r = mu(m, self.p)
        else:
            r = free_extend(m, lambda b: self.face(b, i - 1), self.p)
        self._face_cache[key] = r
        return r

    def raw_boundary(self, m):
        """sum (-1)^i d_i(m) in T^{s-1}(A), degenerate terms included."""
        s = word_level(m)
        out = {}
        for i in range(s + 1):
            add_into(out, self.face(m, i), -1 if i % 2 else 1)
        return out

    def normalized(self, chain):
        return {m: c for m, c in chain.items() if m and not is_degenerate(m)}

    def _boundary_column(self, m, s):
        idx = self.index[s - 1]
        col = {}
        for t, c in self.normalized(self.raw_boundary(m)).items():
            k = idx.get(t)
            if k is None:
                raise ThetabarError("INTERNAL", f"face of {m} left the enumerated basis")
            col[k] = c
        return col

    def d(self, chain):
        """Boundary of a chain given as ``{word: coefficient}`` (normalized)."""
        out = {}
        for m, c in chain.items():
            add_into(out, self.normalized(self.raw_boundary(m)), c)
        return out

    def graded_d(self, chain):
        """Weight-preserving part of d: the differential of the strata ``[= k]``."""
        out = {}
        for m, c in chain.items():
            s = word_level(m)
            if s == 0:
                continue
            j = self.index[s][m]
            w, lw = self.weights[s][j], self.weights[s - 1]
            for k, v in self.boundary[s][j].items():
                if lw[k] == w:
                    add_into(out, {self.words[s - 1][k]: v}, c)
        return out

    def chain_map_defects(self, generators=None):
        """Words where a dual operation fails to commute with the differential.

        Theta-dual is checked against the full d and the weight-graded d;
        the bracket-dual with each generator against the weight-graded d
        (it lowers weight by one, so it only sees the strata).
        """
        ops = {"theta": theta_vee_word}
        if generators is None:
            generators = range(self.algebra.ngens)
        for x in generators:
            ops[f"bracket_x{x + 1}"] = lambda m, g=freet.generator(x): bracket_vee_word(m, g)
        defects = {name: [] for name in ops}
        for s in range(1, self.s_cap + 1):
            for m in self.words[s]:
                full = self.d({m: 1})
                graded = self.graded_d({m: 1})
                for name, op in ops.items():
                    image = _apply(op, {m: 1})
                    tests = [(graded, self.graded_d)]
                    if name == "theta":
                        tests.append((full, self.d))
                    for dm, dfun in tests:
                        if dfun(image) != _apply(op, dm):
                            defects[name].append(format_word(m))
                            break
        return defects

    # -- bookkeeping ------------------------------------------------------------

    def stratum(self, s, weight):
        return [k for k, w in enumerate(self.weights.get(s, [])) if w == weight]

    def sizes(self):
        out = {}
        for s, ws in self.weights.items():
            for w in ws:
                out[(s, w)] = out.get((s, w), 0) + 1
        return out

    def total_words(self):
        return sum(len(v) for v in self.words.values())

    def check_d_squared(self):
        """Return the list of (s, column) where d(d(word)) != 0 (empty if sound)."""
        bad = []
        for s in range(2, self.s_cap + 1):
            lower = self.boundary[s - 1]
            for j, col in enumerate(self.boundary[s]):
                acc = {}
                for k, c in col.items():
                    for r, v in lower[k].items():
                        acc[r] = acc.get(r, 0) + c * v
                if any(acc.values()):
                    bad.append((s, j))
        return bad

    def is_block_diagonal(self):
        for s in range(1, self.s_cap + 1):
            ws, lw = self.weights[s], self.weights[s - 1]
            for j, col in enumerate(self.boundary[s]):
                if any(lw[k] != ws[j] for k in col):
                    return False
        return True

    def label(self, m):
        return format_word(m)

    def dump(self, s_values=None, weights=None):
        """Deterministic structured dump of strata and their differentials."""
        strata = []
        for s in sorted(self.words):
            if s_values is not None and s not in s_values:
                continue
            by_w = {}
            for k, w in enumerate(self.weights[s]):
                if weights is None or w in weights:
                    by_w.setdefault(w, []).append(k)
            for w, ks in sorted(by_w.items()):
                entry = {
                    "s": s,
                    "weight": w,
                    "generators": [format_word(self.words[s][k]) for k in ks],
                }
                if s >= 1:
                    entry["boundary"] = [
                        [j, r, v]
                        for j in ks
                        for r, v in sorted(self.boundary[s][j].items())
                    ]
                strata.append(entry)
        return {
            "prime": self.p,
            "weight_cap": self.weight_cap,
            "s_cap": self.s_cap,
            "trivial_action": self.algebra.trivial,
            "strata": strata,
        }

    def dump_text(self, **kw):
        return json.dumps(self.dump(**kw), indent=1, sort_keys=True)


# -- chain-level operations ---------------------------------------------------


def theta_vee_word(m):
    """Theta-dual on a basis word: (-1)^s [rest] if the outer operation is theta(a_1)."""
    s = word_level(m)
    if s >= 1 and len(m) == 1 and m[0][1] == 1 and m[0][0][0] == 1:
        return {m[0][0][1]: -1 if s % 2 else 1}
    return {}


def _apply(op, chain):
    out = {}
    for m, c in chain.items():
        add_into(out, op(m), c)
    return out


def theta_vee(chain):
    out = {}
    for m, c in chain.items():
        add_into(out, theta_vee_word(m), c)
    return out


def constant_lift(x, level):
    """The word ``1 | 1 | ... | x`` of the given level over a level-0 element."""
    m = x
    for _ in range(level):
        m = bare(m)
    return m


def bracket_vee_word(m, x):
    """Bracket-dual with the generator x (a level-0 monomial) on a basis word.

    Nonzero only on a_1 a_2 with the second input the constant lift of x.
    """
    s = word_level(m)
    if s < 1 or len(m) != 2 or any(e != 1 or k[0] != 0 for k, e in m):
        return {}
    lift = constant_lift(x, s - 1)
    (k1, _), (k2, _) = m
    u, v = k1[1], k2[1]
    sign = -1 if (s - 1) % 2 else 1
    if v == lift:
        return {u: sign}
    if u == lift:
        koszul = -1 if monomial_parity(u) and monomial_parity(v) else 1
        return {v: sign * koszul}
    return {}


def bracket_vee(chain, x):
    out = {}
    for m, c in chain.items():
        add_into(out, bracket_vee_word(m, x), c)
    return out


def map_word(m, phi_level0, p, cache=None):
    """Apply T^s(phi) to a word for phi: A -> A given on level-0 basis elements."""
    if cache is None:
        cache = {}
    r = cache.get(m)
    if r is not None:
        return r
    if isinstance(m[0][0], int):
        r = phi_level0(m)
    else:
        r = free_extend(m, lambda b: map_word(b, phi_level0, p, cache), p)
    cache[m] = r
    return r


def algebra_map(matrix):
    """The ring map on exterior-algebra basis elements induced by a generator matrix.

    ``matrix[i][j]`` is the coefficient of target generator i in the image of
    source generator j.
    """
    rows = len(matrix)

    def phi(a):
        out = {freet.ONE: 1}
        for j, _ in a:
            img = {freet.generator(i): matrix[i][j] for i in range(rows) if matrix[i][j]}
            out = freet.multiply(out, img)
            if not out:
                return {}
        return out

    return phi


# -- labels -------------------------------------------------------------------


def format_word(m):
    """Nested label, e.g. ``th{x1}`` for [theta(a_1)|x_1] and ``{x1}{x2}`` for [a_1 a_2|x_1,x_2]."""
    if isinstance(m[0][0], int):
        return "*".join(f"x{j + 1}" for j, _ in m)
    parts = []
    for (i, b), e in m:
        s = "{" + format_word(b) + "}"
        if i == 1:
            s = "th" + s
        elif i > 1:
            s = f"th^{i}" + s
        if e > 1:
            s += f"^{e}"
        parts.append(s)
    return "".join(parts)
