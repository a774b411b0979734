"""theta-algebra presentations of K-theory of finite H-spaces.

A presentation records odd generators, Adams operations psi^k on the
generator span and theta, with ``psi^p = (.)^p + p*theta`` giving
``theta = psi^p / p`` on odd generators.

Catalog matrices are the raw action on K^{-1}: for SU(n) and Sp(n) the
generators are beta(lambda^i), and since beta is a derivation at the
augmentation, psi^k acts on them by the Jacobian of
``lambda^i -> psi^k(lambda^i)`` at the point ``lambda^i = dim``. The
polynomial expressing psi^k(lambda^i) in the lambda^j is found by
symmetrizing ``e_i(t_1^k, ..., t_N^k)``.
"""

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache

import sympy
from sympy.polys.polyfuncs import symmetrize

from thetabar.arith import IntMatrix, is_prime
from thetabar.errors import ThetabarError

PSI_RANGE = range(2, 8)


@dataclass(frozen=True)
class Generator:
    name: str
    degree: int


@dataclass
class ThetaPresentation:
    prime: int
    generators: list
    psi: dict
    theta: IntMatrix
    ell: int
    precision: int = 20
    name: str = ""

    @property
    def rank(self):
        return len(self.generators)

    def psi_matrix(self, k):
        if k not in self.psi:
            raise ThetabarError("MISSING_PSI", f"psi^{k} not supplied")
        return self.psi[k]

    def to_dict(self):
        d = {
            "prime": self.prime,
            "ell": self.ell,
            "precision": self.precision,
            "generators": [{"name": g.name, "degree": g.degree} for g in self.generators],
            "psi": {str(k): self.psi[k].tolist() for k in sorted(self.psi)},
            "theta": self.theta.tolist(),
        }
        if self.name:
            d["name"] = self.name
        return d

    def __eq__(self, other):
        return isinstance(other, ThetaPresentation) and self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class HypothesisReport:
    theta_injective: bool
    theta_linear: bool
    degrees_odd: bool
    psi_consistent: bool
    assumptions: tuple = ("psi^p = (.)^p + p*theta",)

    @property
    def ok(self):
        return self.theta_injective and self.theta_linear and self.degrees_odd and self.psi_consistent

    def as_dict(self):
        return {
            "theta_injective": self.theta_injective,
            "theta_linear": self.theta_linear,
            "degrees_odd": self.degrees_odd,
            "psi_consistent": self.psi_consistent,
            "assumptions": list(self.assumptions),
        }


# -- topological generators ---------------------------------------------------


def is_topological_generator(l, p):
    """l generates Z_p^x, i.e. (Z/p^2)^x for odd p."""
    n = p * p
    if l % p == 0:
        return False
    order = p * (p - 1)
    x = l % n
    for q in _prime_factors(order):
        if pow(x, order // q, n) == 1:
            return False
    return True


def _prime_factors(n):
    out, q = [], 2
    while q * q <= n:
        if n % q == 0:
            out.append(q)
            while n % q == 0:
                n //= q
        q += 1
    if n > 1:
        out.append(n)
    return out


def default_ell(p):
    l = 2
    while not is_topological_generator(l, p):
        l += 1
    return l


def _check_prime(p):
    if not isinstance(p, int) or p < 3 or not is_prime(p):
        raise ThetabarError("BAD_PRIME", f"p must be an odd prime, got {p!r}")


# -- theta --------------------------------------------------------------------


def derive_theta(psi_p, p):
    """theta = psi^p / p on the odd generator span."""
    if any(v % p for row in psi_p.data for v in row):
        raise ThetabarError("THETA_NOT_P_DIVISIBLE", "psi^p is not divisible by p")
    return IntMatrix(psi_p.rows, psi_p.cols, [[v // p for v in row] for row in psi_p.data])


def verify_hypotheses(pres):
    n = pres.rank
    degrees_odd = all(g.degree % 2 == 1 for g in pres.generators)
    theta_linear = pres.theta.rows == n and pres.theta.cols == n
    theta_injective = theta_linear and (n == 0 or pres.theta.determinant() != 0)
    psi_consistent = _psi_consistent(pres)
    return HypothesisReport(theta_injective, theta_linear, degrees_odd, psi_consistent)


def _psi_consistent(pres):
    n = pres.rank
    ks = sorted(pres.psi)
    for k in ks:
        if pres.psi[k].rows != n or pres.psi[k].cols != n:
            return False
    for a in ks:
        for b in ks:
            if a * b in pres.psi and pres.psi[a] @ pres.psi[b] != pres.psi[a * b]:
                return False
            if pres.psi[a] @ pres.psi[b] != pres.psi[b] @ pres.psi[a]:
                return False
    # theta commutes with every psi^k since psi^p does
    for k in ks:
        if pres.psi[k] @ pres.theta != pres.theta @ pres.psi[k]:
            return False
    if pres.prime in pres.psi and pres.theta.scaled(pres.prime) != pres.psi[pres.prime]:
        return False
    return True


# -- building presentations ---------------------------------------------------


def make_presentation(prime, generators, psi, theta=None, ell=None, precision=20, name=""):
    _check_prime(prime)
    gens = [g if isinstance(g, Generator) else Generator(str(g["name"]), int(g["degree"])) for g in generators]
    for g in gens:
        if g.degree % 2 == 0:
            raise ThetabarError("EVEN_DEGREE_GENERATOR", f"generator {g.name} has even degree {g.degree}")
    n = len(gens)
    psi = {int(k): (v if isinstance(v, IntMatrix) else _matrix(v, n)) for k, v in psi.items()}
    for k, v in psi.items():
        if k < 2:
            raise ThetabarError("PARSE_ERROR", f"psi^{k} is not an Adams operation index >= 2")
        if v.rows != n or v.cols != n:
            raise ThetabarError("PARSE_ERROR", f"psi^{k} must be {n}x{n}")
    if theta is not None:
        theta = theta if isinstance(theta, IntMatrix) else _matrix(theta, n)
        if theta.rows != n or theta.cols != n:
            raise ThetabarError("PARSE_ERROR", f"theta must be {n}x{n}")
    if prime in psi:
        derived = derive_theta(psi[prime], prime)
        if theta is not None and theta != derived:
            raise ThetabarError("INCONSISTENT_THETA_PSI", "theta differs from psi^p / p")
        theta = derived
    if theta is None:
        raise ThetabarError("PARSE_ERROR", "either theta or psi^p must be given")
    if ell is None:
        ell = default_ell(prime)
    if not is_topological_generator(ell, prime):
        raise ThetabarError("NOT_TOP_GENERATOR", f"{ell} does not generate (Z/{prime}^2)^x")
    return ThetaPresentation(prime, gens, psi, theta, ell, precision, name)


def _matrix(rows, n):
    if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
        raise ThetabarError("PARSE_ERROR", "matrices are lists of integer rows")
    try:
        m = IntMatrix.from_rows(rows, n if not rows else None)
    except (TypeError, ValueError) as exc:
        raise ThetabarError("PARSE_ERROR", f"bad matrix entry: {exc}") from None
    except ThetabarError as exc:
        raise ThetabarError("PARSE_ERROR", exc.message) from None
    if not rows:
        m = IntMatrix(0, 0)
    return m


def load_presentation(text):
    """Parse a JSON presentation document (or a ``{"catalog": name, ...}`` stub)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ThetabarError("PARSE_ERROR", str(exc)) from None
    if not isinstance(doc, dict):
        raise ThetabarError("PARSE_ERROR", "document must be an object")
    if "catalog" in doc:
        return catalog_presentation(doc["catalog"], doc.get("prime"), doc.get("ell"))
    for key in ("prime", "generators"):
        if key not in doc:
            raise ThetabarError("PARSE_ERROR", f"missing field {key!r}")
    gens = doc["generators"]
    if not isinstance(gens, list) or any(not isinstance(g, dict) or "name" not in g or "degree" not in g for g in gens):
        raise ThetabarError("PARSE_ERROR", "generators must be a list of {name, degree}")
    psi = doc.get("psi", {})
    if not isinstance(psi, dict):
        raise ThetabarError("PARSE_ERROR", "psi must map k to a matrix")
    try:
        psi = {int(k): v for k, v in psi.items()}
        prime = int(doc["prime"])
    except (TypeError, ValueError):
        raise ThetabarError("PARSE_ERROR", "psi keys and prime must be integers") from None
    return make_presentation(
        prime,
        gens,
        psi,
        doc.get("theta"),
        doc.get("ell"),
        int(doc.get("precision", 20)),
        str(doc.get("name", "")),
    )


def emit_presentation(pres):
    return json.dumps(pres.to_dict(), indent=1, sort_keys=True)


# -- catalog ------------------------------------------------------------------

_NAME = re.compile(r"^(sphere|su|sp)\(?(\d+)\)?$")


def parse_space(name):
    name = name.strip().lower().replace(" ", "")
    if name == "point":
        return "point", 0
    m = _NAME.match(name)
    if not m:
        raise ThetabarError("UNSUPPORTED_SPACE", f"unknown space {name!r}")
    kind, n = m.group(1), int(m.group(2))
    if kind == "sphere" and (n % 2 == 0 or n < 3):
        raise ThetabarError("UNSUPPORTED_SPACE", "only odd spheres S^(2n+1), n >= 1")
    if kind == "su" and n < 2:
        raise ThetabarError("UNSUPPORTED_SPACE", "su(n) needs n >= 2")
    if kind == "sp" and n < 1:
        raise ThetabarError("UNSUPPORTED_SPACE", "sp(n) needs n >= 1")
    return kind, n


def catalog_names():
    return ["point", "sphere(2n+1)", "su(n)", "sp(n)"]


def catalog_presentation(name, p, l=None):
    if p is None:
        raise ThetabarError("PARSE_ERROR", "a prime is required")
    _check_prime(int(p))
    p = int(p)
    if l is None:
        l = default_ell(p)
    if not is_topological_generator(int(l), p):
        raise ThetabarError("NOT_TOP_GENERATOR", f"{l} does not generate (Z/{p}^2)^x")
    l = int(l)
    kind, n = parse_space(name)
    ks = sorted(set(PSI_RANGE) | {p, l})
    if kind == "point":
        gens, psi = [], {k: IntMatrix(0, 0) for k in ks}
    elif kind == "sphere":
        d = (n - 1) // 2
        gens = [Generator("x", n)]
        psi = {k: IntMatrix.from_rows([[k ** (d + 1)]]) for k in ks}
    elif kind == "su":
        gens = [Generator(f"x{i}", 2 * i + 1) for i in range(1, n)]
        psi = {k: IntMatrix.from_rows(adams_jacobian("su", n, k)) for k in ks}
    else:
        gens = [Generator(f"x{i}", 4 * i - 1) for i in range(1, n + 1)]
        psi = {k: IntMatrix.from_rows(adams_jacobian("sp", n, k)) for k in ks}
    label = kind if kind == "point" else f"{kind}({n})"
    return make_presentation(p, gens, psi, None, l, name=label)


@lru_cache(maxsize=None)
def adams_jacobian(kind, n, k):
    """Matrix of psi^k on beta(lambda^1), ..., beta(lambda^r) for SU(n) or Sp(n).

    Column j holds the image of beta(lambda^j).
    """
    if kind == "su":
        N, r = n, n - 1
    else:
        N, r = 2 * n, n
    t = sympy.symbols(f"t0:{N}")
    es = sympy.symbols(f"e1:{N + 1}")
    lam = sympy.symbols(f"l1:{r + 1}")
    # e_j in terms of the free lambda generators
    sub = {}
    for j in range(1, N + 1):
        if kind == "su":
            sub[es[j - 1]] = 1 if j == N else lam[j - 1]
        else:
            jj = j if j <= n else 2 * n - j
            sub[es[j - 1]] = 1 if jj == 0 else lam[jj - 1]
    point = {}
    for j in range(1, r + 1):
        point[lam[j - 1]] = sympy.binomial(N, j)
    rows = [[0] * r for _ in range(r)]
    for i in range(1, r + 1):
        sym, rem, defs = symmetrize(_elementary(i, [x ** k for x in t]), *t, formal=True)
        if rem != 0:
            raise ThetabarError("INTERNAL", "symmetrization left a remainder")
        # defs pairs s_j with e_j(t)
        expr = sym.subs({s: es[j] for j, (s, _) in enumerate(defs)})
        expr = sympy.expand(expr.subs(sub))
        for j in range(1, r + 1):
            rows[j - 1][i - 1] = int(sympy.diff(expr, lam[j - 1]).subs(point))
    return rows


def _elementary(i, xs):
    total = 0
    from itertools import combinations

    for c in combinations(xs, i):
        term = 1
        for x in c:
            term *= x
        total += term
    return sympy.expand(total)
