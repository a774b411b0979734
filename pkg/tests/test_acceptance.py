"""Acceptance criteria 1-7, each run at its stated scale and tolerance.

Every test records one PASS/FAIL line (shown in the pytest terminal summary)
before asserting, so a failing criterion still reports what was covered.
"""

import random
import time

import pytest
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from thetabar import bar, periodic, spectral
from thetabar.algebra import catalog_presentation, make_presentation
from thetabar.arith import IntMatrix, cokernel_p_part, homology_at, kernel_basis, smith_normal_form
from thetabar.errors import ThetabarError
from thetabar.freet import generator

CATALOG = ["sphere3", "sphere5", "su2", "su3", "sp2"]
PRIMES = [3, 5]
SEED = 20240517


def full_cap(p):
    return p * p if p == 3 else 2 * p


def record(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    log.append(line)
    print(line)
    return ok


# -- criteria 1 and 2 ---------------------------------------------------------------


def random_presentations(count=50):
    rng = random.Random(SEED)
    out = []
    for i in range(count):
        p = 3 if i < count // 2 else 5
        g = rng.choice([1, 2])
        while True:
            theta = [[rng.randint(-p * p, p * p) for _ in range(g)] for _ in range(g)]
            if any(any(r) for r in theta):
                break
        psi = [[rng.randint(-p * p, p * p) for _ in range(g)] for _ in range(g)]
        gens = [{"name": f"x{j + 1}", "degree": 2 * j + 3} for j in range(g)]
        out.append((f"random{i}", make_presentation(p, gens, {2: psi}, theta, 2)))
    return out


def theta_of_basis(b, theta, p):
    """theta on a level-0 basis element, computed from the matrix alone.

    Generators map to their column; the product x1 x2 (both odd) maps to
    p theta(x1) theta(x2) = p det(theta) x1 x2.
    """
    if len(b) == 1:
        j = b[0][0]
        return {generator(i): theta[i][j] for i in range(len(theta)) if theta[i][j]}
    det = theta[0][0] * theta[1][1] - theta[0][1] * theta[1][0]
    return {b: p * det} if det else {}


def signed_identity_failures(c, theta, p):
    bad = []
    for b in c.algebra.basis():
        w = (((1, b), 1),)
        if w not in c.index.get(1, {}):
            continue
        if bar.theta_vee({w: 1}) != {b: -1}:
            bad.append(("theta_vee", b))
        want = {m: -v for m, v in theta_of_basis(b, theta, p).items()}
        if c.d({w: 1}) != want:
            bad.append(("d", b))
    return bad


@pytest.fixture(scope="module")
def chain_results():
    inputs = random_presentations() + [(f"{n}@{p}", catalog_presentation(n, p)) for p in PRIMES for n in CATALOG]
    too_large = {}
    rows = []
    start = time.time()
    for name, pres in inputs:
        p, g = pres.prime, pres.rank
        K = full_cap(p)
        data = bar.AlgebraData.from_presentation(pres)
        theta = pres.theta.tolist()
        row = {"name": name, "p": p, "g": g, "K": K}
        if (g, p, K) not in too_large:
            try:
                c = bar.BarComplex(data, K)
            except ThetabarError as exc:
                if exc.code != "CAPS_TOO_LARGE":
                    raise
                too_large[(g, p, K)] = exc.message
        if (g, p, K) in too_large:
            # partial coverage at a cap that fits, reported but not counted
            c = bar.BarComplex(data, 5)
            row.update(covered=False, diag_K=5, d2=c.check_d_squared(), defects=c.chain_map_defects())
        else:
            row.update(covered=True, words=c.total_words(), d2=c.check_d_squared(), defects=c.chain_map_defects())
        row["signs"] = signed_identity_failures(c, theta, p)
        rows.append(row)
    return rows, too_large, time.time() - start


def test_criterion_1_d_squared(chain_results, acceptance_log):
    rows, too_large, elapsed = chain_results
    covered = [r for r in rows if r["covered"]]
    sound = all(not r["d2"] for r in rows)
    ok = len(covered) == len(rows) and sound and elapsed < 300
    detail = (
        f"{len(covered)}/{len(rows)} inputs enumerated at full caps (p=3: weight<=9, p=5: weight<=10), "
        f"d^2=0 on all covered={all(not r['d2'] for r in covered)}; "
        f"uncovered (ngens, p, K): {sorted(too_large)} exceed the word budget; "
        f"diagnostic at K=5 d^2=0={all(not r['d2'] for r in rows if not r['covered'])}; {elapsed:.0f}s"
    )
    record(acceptance_log, 1, ok, detail)
    assert sound
    assert len(covered) == len(rows), f"strata not enumerable at full caps: {sorted(too_large)}"


def test_criterion_2_chain_operations(chain_results, acceptance_log):
    rows, too_large, _ = chain_results
    covered = [r for r in rows if r["covered"]]
    commute = all(not any(r["defects"].values()) for r in rows)
    signs = all(not r["signs"] for r in rows)
    ok = len(covered) == len(rows) and commute and signs
    detail = (
        f"{len(covered)}/{len(rows)} inputs at full caps; Theta-dual and bracket-duals commute={commute}; "
        f"signed identities exact={signs}; uncovered (ngens, p, K): {sorted(too_large)}"
    )
    record(acceptance_log, 2, ok, detail)
    assert commute and signs
    assert len(covered) == len(rows), f"strata not enumerable at full caps: {sorted(too_large)}"


# -- criterion 3 --------------------------------------------------------------------


def test_criterion_3_e1_identification(acceptance_log):
    p, K = 3, 9
    mismatches = []
    torsion = []
    for g in (1, 2):
        data = bar.AlgebraData(p, g, tuple(tuple(int(i == j) for j in range(g)) for i in range(g)), True)
        ranks = spectral.trivial_e1_ranks(bar.BarComplex(data, K))
        for k in range(1, K + 1):
            got = {s: r for (w, s), (r, _) in ranks.items() if w == k and r}
            want = spectral.koszul_rank_oracle(k, g, p)
            if got != want:
                mismatches.append((g, k, got, want))
            torsion += [(g, w, s, t) for (w, s), (_, t) in ranks.items() if w == k and t]
    detail = f"g in (1, 2), weights 1..{K}: {len(mismatches)} rank mismatches; p-torsion outside the rank statement: {torsion}"
    record(acceptance_log, 3, not mismatches, detail)
    assert not mismatches


# -- criteria 4, 5, 6 ---------------------------------------------------------------


@pytest.fixture(scope="module")
def catalog_runs():
    out = {}
    for p in PRIMES:
        for name in CATALOG:
            t = time.time()
            pres = catalog_presentation(name, p)
            pages, report = spectral.run_verification(pres)
            route_pages = next(pg for pg in pages if pg.K >= 2 * p and pg.S >= 2)
            out[(name, p)] = (pres, pages, report, route_pages, time.time() - t)
    return out


def test_criterion_4_differential_families(catalog_runs, acceptance_log):
    bad = {}
    for key, (_, _, report, _, _) in catalog_runs.items():
        failed = [k for k, v in report.checks.items() if not v["ok"]]
        if report.residuals or failed:
            bad[key] = {"residuals": len(report.residuals), "failed_checks": failed}
    record(acceptance_log, 4, not bad, f"{len(catalog_runs)} catalog inputs; residuals empty and d_(p-1) = -theta^T, Leibniz checks hold; failures: {bad}")
    assert not bad


def test_criterion_5_e_infinity(catalog_runs, acceptance_log):
    bad = []
    for key, (pres, _, report, _, _) in catalog_runs.items():
        e = report.e_infinity
        # independent: elementary divisors of theta^T straight from the SNF
        direct = cokernel_p_part(pres.theta.transpose(), pres.prime).as_dict()
        if not (e["total"] == e["coker_theta_transpose"] == direct):
            bad.append((key, e["total"], direct))
    record(acceptance_log, 5, not bad, f"{len(catalog_runs)} catalog inputs; E_infinity = coker(theta^T); mismatches: {bad}")
    assert not bad


def test_criterion_6_main_theorem_cross_check(catalog_runs, acceptance_log):
    t0 = time.time()
    bad = []
    for (name, p), (pres, _, _, route_pages, build) in catalog_runs.items():
        m_range = range(0, 4 * (p - 1) + 1)
        cc = periodic.cross_check(pres, m_range=m_range, pages=route_pages)
        if not cc["agree"]:
            bad.append(((name, p), "routes", cc["mismatches"]))
        table = periodic.nu1_table(pres, m_range)
        if any(a.order != b.order for a, b in table.rows.values()):
            bad.append(((name, p), "|W| != |W_1|"))
        other = periodic.other_generator(p, pres.ell)
        alt = periodic.nu1_table(catalog_presentation(name, p, other), m_range)
        if alt.rows != table.rows:
            bad.append(((name, p), f"l={pres.ell} vs l={other}"))
    elapsed = time.time() - t0 + sum(run[4] for run in catalog_runs.values())
    ok = not bad and elapsed < 600
    record(acceptance_log, 6, ok, f"{len(catalog_runs)} catalog inputs over m in [0, 4(p-1)]; routes agree, |W|=|W_1|, l-invariant; failures: {bad}; {elapsed:.0f}s")
    assert not bad
    assert elapsed < 600


# -- criterion 7 --------------------------------------------------------------------


def rational_rank(M):
    if M.rows == 0 or M.cols == 0:
        return 0
    return DomainMatrix([[QQ(v) for v in row] for row in M.data], (M.rows, M.cols), QQ).rank()


def test_criterion_7_arithmetic_backend(acceptance_log):
    rng = random.Random(SEED)
    bound = 10 ** 6
    recon = homology = 0
    for i in range(10_000):
        m, n = rng.randint(1, 8), rng.randint(1, 8)
        rows = [[rng.randint(-bound, bound) if rng.random() < 0.8 else 0 for _ in range(n)] for _ in range(m)]
        if i % 3 == 0 and m > 1:
            # force rank deficiency in a third of the cases
            rows[-1] = [a - b for a, b in zip(rows[0], rows[1])]
        M = IntMatrix.from_rows(rows)
        snf = smith_normal_form(M)
        if snf.U @ M @ snf.V != snf.D:
            recon += 1
        # complex Z^j --B--> Z^n --M--> Z^m with B built from the kernel of M
        ker = kernel_basis(M)
        j = rng.randint(0, 3)
        coeffs = [[rng.randint(-5, 5) for _ in ker] for _ in range(j)]
        B = IntMatrix.from_rows([[sum(a * v[r] for a, v in zip(cs, ker)) for cs in coeffs] for r in range(n)], j)
        h = homology_at(M, B, 3)
        if h.free_rank != n - rational_rank(M) - rational_rank(B):
            homology += 1
    ok = recon == 0 and homology == 0
    record(acceptance_log, 7, ok, f"10^4 matrices up to 8x8, entries in [-10^6, 10^6]: {recon} SNF reconstruction failures, {homology} homology free-rank mismatches")
    assert ok
