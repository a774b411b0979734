"""Command line front end.

Commands: compute, verify, bar, catalog, check. JSON (sorted keys) is the
machine format; ``--format table`` prints a plain summary instead.

Exit codes: 0 ok, 1 internal error, 2 invalid input, 3 theta not injective,
4 caps too small or too large, 5 verification failed.
"""

import argparse
import json
import sys

from thetabar import bar as barmod
from thetabar import periodic, spectral
from thetabar.algebra import (
    catalog_names,
    catalog_presentation,
    emit_presentation,
    load_presentation,
    verify_hypotheses,
)
from thetabar.errors import ThetabarError

# Every default lives here and is echoed back in each report.
DEFAULTS = {
    "prime": 3,
    "ell": None,  # smallest topological generator of Z_p^x
    "weight_cap": None,  # 2p for verify; p for bar
    "s_cap": None,  # weight_cap + 1 (all degrees)
    "m": None,  # 0..4(p-1)
    "precision": 20,
    "format": "json",
    "budget": barmod.DEFAULT_WORD_BUDGET,
}

EXIT_CODES = {
    "THETA_NOT_INJECTIVE": 3,
    "CAPS_INSUFFICIENT": 4,
    "CAPS_TOO_LARGE": 4,
    "INTERNAL": 1,
}
EXIT_VERIFY_FAILED = 5


def _parser():
    ap = argparse.ArgumentParser(prog="thetabar", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, caps=True, m=False):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--space", help="catalog space: point, sphereN, suN, spN")
        src.add_argument("--input", help="presentation file (JSON)")
        p.add_argument("--prime", type=int, default=None)
        p.add_argument("--ell", type=int, default=DEFAULTS["ell"])
        p.add_argument("--precision", type=int, default=DEFAULTS["precision"])
        p.add_argument("--format", choices=["json", "table"], default=DEFAULTS["format"])
        p.add_argument("--out", default=None)
        if caps:
            p.add_argument("--weight-cap", type=int, default=DEFAULTS["weight_cap"])
            p.add_argument("--s-cap", type=int, default=DEFAULTS["s_cap"])
            p.add_argument("--budget", type=int, default=DEFAULTS["budget"])
        if m:
            p.add_argument("--m", default=DEFAULTS["m"], help="range a..b (inclusive) or a single m")

    common(sub.add_parser("compute", help="v1-periodic homotopy table"), caps=False, m=True)
    common(sub.add_parser("verify", help="spectral sequence checks and the two-route cross-check"), m=True)
    common(sub.add_parser("bar", help="dump bar complex strata"))
    common(sub.add_parser("catalog", help="list built-in spaces or print one presentation"), caps=False)
    common(sub.add_parser("check", help="validate a presentation"), caps=False)
    return ap


def _parse_m(text, p):
    if text is None:
        return range(0, 4 * (p - 1) + 1)
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
        else:
            a = b = int(text)
    except ValueError:
        raise ThetabarError("PARSE_ERROR", f"bad m range {text!r}; use a..b") from None
    if b < a:
        raise ThetabarError("PARSE_ERROR", f"empty m range {text!r}")
    return range(a, b + 1)


def _presentation(args):
    if args.input:
        try:
            with open(args.input, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ThetabarError("BAD_PATH", f"cannot read {args.input}: {exc.strerror}") from None
        pres = load_presentation(text)
        if args.prime is not None and args.prime != pres.prime:
            raise ThetabarError("PARSE_ERROR", f"--prime {args.prime} contradicts the file's prime {pres.prime}")
        if args.ell is not None and args.ell != pres.ell:
            from thetabar.algebra import make_presentation

            pres = make_presentation(pres.prime, pres.generators, pres.psi, pres.theta, args.ell, pres.precision, pres.name)
        return pres
    space = args.space or "point"
    prime = args.prime if args.prime is not None else DEFAULTS["prime"]
    return catalog_presentation(space, prime, args.ell)


def _config(args, pres=None, **extra):
    cfg = {
        "command": args.command,
        "input": args.input if args.input else (args.space or "point"),
        "prime": pres.prime if pres else args.prime,
        "ell": pres.ell if pres else args.ell,
        "precision": args.precision,
        "format": args.format,
    }
    for key in ("weight_cap", "s_cap", "budget"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    cfg.update(extra)
    return cfg


def _precision_flags(groups, precision):
    return [
        {"code": "PRECISION_EXCEEDED", "exponent": e}
        for g in groups
        for e in g.exponents
        if e >= precision
    ]


def cmd_compute(args):
    pres = _presentation(args)
    m_range = _parse_m(args.m, pres.prime)
    table = periodic.nu1_table(pres, m_range)
    groups = [g for pair in table.rows.values() for g in pair]
    table.flags += _precision_flags(groups, args.precision)
    report = {"config": _config(args, pres, m=[m_range.start, m_range.stop - 1]), "table": table.as_dict()}
    return 0, report, table.text()


def cmd_verify(args):
    pres = _presentation(args)
    p = pres.prime
    hyp = verify_hypotheses(pres)
    if not hyp.theta_injective:
        raise ThetabarError("THETA_NOT_INJECTIVE", "theta is not injective on the generator span")
    if not hyp.ok:
        raise ThetabarError("HYPOTHESES", f"presentation fails the hypotheses: {hyp.as_dict()}")
    K = args.weight_cap if args.weight_cap is not None else 2 * p
    if K < 2 * p:
        raise ThetabarError("CAPS_INSUFFICIENT", f"weight cap {K} < 2p = {2 * p}: E_infinity at weight p is not determined")
    if args.s_cap is not None and args.s_cap < 2:
        raise ThetabarError("CAPS_INSUFFICIENT", "s cap must be at least 2")
    m_range = _parse_m(args.m, p)
    pages, report = spectral.run_verification(pres, K, args.s_cap, args.budget)
    route_pages = next((pg for pg in pages if pg.K >= 2 * p and pg.S >= 2), None)
    cc = periodic.cross_check(pres, K, m_range, pages=route_pages, budget=args.budget)
    ok = report.clean and cc["agree"]
    out = {
        "config": _config(args, pres, weight_cap=K, m=[m_range.start, m_range.stop - 1]),
        "windows": [pg.as_dict(max_page=pres.prime + 1)["window"] for pg in pages],
        "collapse": report.as_dict(),
        "cross_check": cc,
        "ok": ok,
    }
    text = [
        f"windows: {', '.join(pg.label for pg in pages)}",
        f"families: " + ", ".join(f"{k}={len(v)}" for k, v in report.families.items()),
        f"residuals: {len(report.residuals)}",
        "checks: " + ", ".join(f"{k}={'ok' if v['ok'] else 'FAIL'}" for k, v in report.checks.items()),
        f"E_inf total: {report.e_infinity['total']}  coker theta^T: {report.e_infinity['coker_theta_transpose']}",
        f"routes agree: {cc['agree']}",
    ]
    return (0 if ok else EXIT_VERIFY_FAILED), out, "\n".join(text)


def cmd_bar(args):
    pres = _presentation(args)
    K = args.weight_cap if args.weight_cap is not None else pres.prime
    data = barmod.AlgebraData.from_presentation(pres)
    complex_ = barmod.BarComplex(data, K, args.s_cap, args.budget)
    dump = complex_.dump()
    out = {"config": _config(args, pres, weight_cap=K, s_cap=complex_.s_cap), "complex": dump}
    lines = [f"s={e['s']} weight={e['weight']}: " + " ".join(e["generators"]) for e in dump["strata"]]
    return 0, out, "\n".join(lines)


def cmd_catalog(args):
    if not args.space:
        names = catalog_names()
        return 0, {"config": _config(args), "spaces": names}, "\n".join(names)
    pres = _presentation(args)
    return 0, {"config": _config(args, pres), "presentation": pres.to_dict()}, emit_presentation(pres)


def cmd_check(args):
    pres = _presentation(args)
    hyp = verify_hypotheses(pres)
    out = {"config": _config(args, pres), "hypotheses": hyp.as_dict(), "ok": hyp.ok}
    text = "\n".join(f"{k}: {v}" for k, v in hyp.as_dict().items())
    if not hyp.theta_injective:
        return 3, out, text
    return (0 if hyp.ok else 2), out, text


COMMANDS = {
    "compute": cmd_compute,
    "verify": cmd_verify,
    "bar": cmd_bar,
    "catalog": cmd_catalog,
    "check": cmd_check,
}


def _emit(payload, args):
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
        except OSError as exc:
            err = {"error": {"code": "BAD_PATH", "message": f"cannot write {args.out}: {exc.strerror}"}}
            print(json.dumps(err, sort_keys=True))
            return 2
    else:
        sys.stdout.write(payload + "\n")
    return None


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        code, report, text = COMMANDS[args.command](args)
    except ThetabarError as exc:
        print(json.dumps({"error": exc.as_dict()}, sort_keys=True))
        return EXIT_CODES.get(exc.code, 2)
    payload = json.dumps(report, indent=2, sort_keys=True) if args.format == "json" else text
    failed = _emit(payload, args)
    return failed if failed is not None else code


if __name__ == "__main__":
    sys.exit(main())
