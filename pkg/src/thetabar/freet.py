"""The free theta-algebra monad on Z/2-graded free modules.

Elements are dicts ``{monomial: int}``. A monomial is a tuple of
``(key, exponent)`` pairs sorted by key, where a key names a generating
symbol:

* level 0 (the module itself): ``key`` is an ``int`` generator index and every
  basis element is a square-free product of odd generators. A bare module
  generator ``x_j`` is the monomial ``((j, 1),)``.
* level >= 1: ``key = (i, b)`` stands for ``theta^i(b)`` where ``b`` is a basis
  monomial one level down.

Odd symbols square to zero, even symbols generate polynomial factors.
Weights are exponential: ``weight(theta^i b) = p**i * weight(b)``, products
add weights, and every level-0 basis element has weight 1.

All theta operations are derived from the ring endomorphism ``psi^p`` through
``theta(v) = (psi^p(v) - v**p) / p``; on a free algebra
``psi^p(theta^i b) = (theta^i b)**p + p * theta^(i+1) b``. This is the full
Cartan-type structure, so theta of sums and products is always defined.
"""

from functools import lru_cache

from thetabar.errors import ThetabarError

ONE = ()


# -- monomial bookkeeping ----------------------------------------------------


@lru_cache(maxsize=None)
def key_parity(key):
    if isinstance(key, int):
        return 1
    return monomial_parity(key[1])


@lru_cache(maxsize=None)
def monomial_parity(m):
    return sum(e * key_parity(k) for k, e in m) % 2


@lru_cache(maxsize=None)
def monomial_weight(m, p):
    if not m:
        return 0
    if isinstance(m[0][0], int):
        return 1
    return sum(e * p ** k[0] * monomial_weight(k[1], p) for k, e in m)


@lru_cache(maxsize=None)
def monomial_level(m):
    if isinstance(m[0][0], int):
        return 0
    return 1 + monomial_level(m[0][0][1])


def generator(j):
    """The level-0 monomial of the j-th module generator."""
    return ((j, 1),)


def bare(b):
    """``b`` viewed as a weight-1 element of the free algebra one level up."""
    return (((0, b), 1),)


def is_bare(m):
    return len(m) == 1 and m[0][1] == 1 and not isinstance(m[0][0], int) and m[0][0][0] == 0


def mul_monomials(m1, m2):
    """Return ``(sign, product)`` or ``None`` when the product vanishes."""
    if not m1:
        return 1, m2
    if not m2:
        return 1, m1
    # suffix[i] = total parity of m1[i:]
    suffix = [0] * (len(m1) + 1)
    for i in range(len(m1) - 1, -1, -1):
        k, e = m1[i]
        suffix[i] = (suffix[i + 1] + e * key_parity(k)) & 1
    out = []
    sign = 1
    i = 0
    for k2, e2 in m2:
        while i < len(m1) and m1[i][0] < k2:
            out.append(m1[i])
            i += 1
        par2 = (e2 * key_parity(k2)) & 1
        if i < len(m1) and m1[i][0] == k2:
            if key_parity(k2):
                return None
            if par2 and suffix[i + 1]:
                sign = -sign
            out.append((k2, m1[i][1] + e2))
            i += 1
        else:
            if par2 and suffix[i]:
                sign = -sign
            out.append((k2, e2))
    out.extend(m1[i:])
    return sign, tuple(out)


# -- element arithmetic ------------------------------------------------------


def add_into(acc, v, c=1):
    for m, a in v.items():
        s = acc.get(m, 0) + c * a
        if s:
            acc[m] = s
        else:
            acc.pop(m, None)
    return acc


def scale(v, c):
    if c == 0:
        return {}
    return {m: c * a for m, a in v.items()}


def multiply(a, b):
    """Bilinear graded-commutative product of two elements."""
    out = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            r = mul_monomials(m1, m2)
            if r is None:
                continue
            s, m = r
            v = out.get(m, 0) + s * c1 * c2
            if v:
                out[m] = v
            else:
                del out[m]
    return out


def power(v, n):
    out = {ONE: 1}
    for _ in range(n):
        out = multiply(out, v)
        if not out:
            break
    return out


def element_parity(v):
    pars = {monomial_parity(m) for m in v}
    if len(pars) > 1:
        raise ThetabarError("MIXED_PARITY", "theta applied to an inhomogeneous element")
    return pars.pop() if pars else 0


def theta_from_psi(v, p, psi_monomial):
    """theta(v) = (psi^p(v) - v^p) / p for a homogeneous element ``v``."""
    out = {}
    for m, c in v.items():
        add_into(out, psi_monomial(m), c)
    if element_parity(v) == 0:
        add_into(out, power(v, p), -1)
    for m, c in out.items():
        if c % p:
            raise ThetabarError("THETA_NOT_INTEGRAL", f"psi^p(v) - v^p not divisible by p at {m}")
    return {m: c // p for m, c in out.items()}


# -- the free theta-algebra structure (levels >= 1) --------------------------


@lru_cache(maxsize=None)
def _free_psi_key(key, p):
    i, b = key
    out = {((((i + 1), b), 1),): p}
    if not key_parity(key):
        out[((key, p),)] = 1
    return out


@lru_cache(maxsize=None)
def _free_psi_monomial(m, p):
    out = {ONE: 1}
    for k, e in m:
        for _ in range(e):
            out = multiply(out, _free_psi_key(k, p))
    return out


def free_psi(v, p):
    out = {}
    for m, c in v.items():
        add_into(out, _free_psi_monomial(m, p), c)
    return out


@lru_cache(maxsize=None)
def _free_theta_monomial(m, i, p):
    if i == 0:
        return {m: 1}
    prev = _free_theta_monomial(m, i - 1, p)
    return theta_from_psi(prev, p, lambda mm: _free_psi_monomial(mm, p))


def free_theta(v, p, i=1):
    """theta^i of an element of a free theta-algebra (level >= 1)."""
    if i == 0:
        return dict(v)
    if len(v) == 1:
        (m, c), = v.items()
        if c == 1:
            return dict(_free_theta_monomial(m, i, p))
    out = v
    for _ in range(i):
        out = theta_from_psi(out, p, lambda mm: _free_psi_monomial(mm, p))
    return out


def free_extend(m, f, p):
    """Apply T(f) to the monomial ``m``.

    ``f`` maps a basis monomial one level below ``m`` to an element of the
    target module; the result is the unique theta-algebra map extending it.
    """
    out = {ONE: 1}
    for (i, b), e in m:
        img = {bare(y): c for y, c in f(b).items()}
        if not img:
            return {}
        t = free_theta(img, p, i)
        for _ in range(e):
            out = multiply(out, t)
            if not out:
                return {}
    return out


def mu(m, p):
    """Monad composition T T Y -> T Y on a level >= 2 monomial."""
    out = {ONE: 1}
    for (i, v), e in m:
        t = _free_theta_monomial(v, i, p)
        for _ in range(e):
            out = multiply(out, t)
            if not out:
                return {}
    return out


def epsilon(m):
    """Augmentation T Y -> Y: keep only the weight-1 (bare) part."""
    if is_bare(m):
        return {m[0][0][1]: 1}
    return {}


# -- public operations on T(M) for a free module M --------------------------


def _symbol_monomials(symbols, cap):
    """All nonempty monomials of weight <= cap over ``symbols``.

    ``symbols`` is a key-sorted list of ``(key, weight, parity)``. Returns a
    dict weight -> list of monomials.
    """
    partial = [((), 0)]
    for key, w, par in symbols:
        if w > cap:
            continue
        emax = 1 if par else cap // w
        ext = []
        for m, tw in partial:
            for e in range(1, emax + 1):
                nw = tw + e * w
                if nw > cap:
                    break
                ext.append((m + ((key, e),), nw))
        partial.extend(ext)
    out = {}
    for m, w in partial:
        if m:
            out.setdefault(w, []).append(m)
    return out


def symbols_over(basis_by_weight, p, cap):
    """The theta^i b symbols of weight <= cap over a basis graded by weight."""
    syms = []
    for w, ms in basis_by_weight.items():
        for b in ms:
            par = monomial_parity(b)
            i = 0
            while p ** i * w <= cap:
                syms.append(((i, b), p ** i * w, par))
                i += 1
    syms.sort(key=lambda s: s[0])
    return syms


def t_basis(n, k, p):
    """Square-free monomials in theta^i x_j (j < n) of weight exactly k."""
    if k < 1:
        raise ThetabarError("WEIGHT_WINDOW", "weight must be >= 1")
    level0 = {1: [generator(j) for j in range(n)]}
    mons = _symbol_monomials(symbols_over(level0, p, k), k)
    return sorted(mons.get(k, []))


def monomial_element(m, c=1):
    return {m: c}


def substitute(outer, inner, p, strict=False):
    """Compose ``outer`` (over formal letters a_0..a_{k-1}) with ``inner``.

    ``outer`` is an element of T on the formal letters; ``inner[j]`` is the
    element substituted for a_j. theta^i of a substituted element uses the
    full theta-algebra structure unless ``strict`` is set, in which case
    theta may only hit linear combinations of single symbols.
    """
    out = {}
    for m, c in outer.items():
        if monomial_level(m) != 1:
            raise ThetabarError("ALPHABET", "outer must be an element over the formal letters")
        term = {ONE: c}
        for (i, b), e in m:
            (j, _), = b
            if j >= len(inner):
                raise ThetabarError("ALPHABET", f"letter a_{j} has no substitute")
            v = inner[j]
            if strict and i >= 1 and any(len(mm) != 1 or mm[0][1] != 1 for mm in v):
                raise ThetabarError(
                    "NONLINEAR_THETA_SUBSTITUTION",
                    f"theta^{i} applied to a non-monomial inner element",
                )
            t = free_theta(v, p, i)
            for _ in range(e):
                term = multiply(term, t)
        add_into(out, term)
    return out


def augment(v):
    """Project an element of T(M) onto its weight-1 part."""
    out = {}
    for m, c in v.items():
        if is_bare(m):
            add_into(out, {m: c})
    return out


def format_monomial(m, names=None):
    """Human readable label, e.g. ``th(x1)*x2`` or ``[th(a1)|x1]``-style nesting."""
    if not m:
        return "1"
    if isinstance(m[0][0], int):
        if names is None:
            return "*".join(f"x{k + 1}" for k, _ in m)
        return "*".join(names[k] for k, _ in m)
    parts = []
    for (i, b), e in m:
        inner = format_monomial(b, names)
        if len(b) > 1:
            inner = f"({inner})"
        s = inner if i == 0 else f"th{'' if i == 1 else '^' + str(i)}{inner if inner.startswith('(') else '(' + inner + ')'}"
        if e > 1:
            s = f"{s}^{e}"
        parts.append(s)
    return "*".join(parts)
