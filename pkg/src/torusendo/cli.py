"""Command line front end.

Every subcommand writes ``report.json`` and ``report.txt`` (plus CSV/SVG
artifacts where relevant) into ``--out`` and exits with

    0  Certified / Found / Passed / ConjugacyEvidence / Measured
    2  Failed / NotFound / AnnulusCandidate
    3  Inconclusive
    1  usage or runtime error
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, _backend
from .errors import NoFiniteN, NoIntegerEigenvalues, NotFoundWithin, TorusEndoError, UnknownName
from .specfile import digest, eval_expr, parse_spec, parse_text, serialize

SCHEMA_VERSION = 1
EXIT_CODES = {"Certified": 0, "Found": 0, "Passed": 0, "ConjugacyEvidence": 0, "Measured": 0,
              "Failed": 2, "NotFound": 2, "AnnulusCandidate": 2, "Inconclusive": 3}
EXIT_ERROR = 1

log = logging.getLogger("torusendo")

CSV_HELP = """\
CSV columns:
  essential, covering   n, x, y, lift_i, lift_j   (torus position and integer lift part)
  directions            x, y, dir_x, dir_y, width
  fibers                x, y                      (fiber witnesses)
  semiconj              x, y, hx, hy              (h on the sample grid)
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 2 is reserved for negative verdicts
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class Outcome:
    verdict: str
    margin: float | None = None
    witnesses: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    artifacts: Callable[[Path], list] | None = None


# ------------------------------------------------------------------ helpers


def _floats(text: str, count: int | None = None) -> list[float]:
    vals = [float(eval_expr(t, {})) for t in text.split(",")]
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma separated numbers, got {text!r}")
    return vals


def _params(args) -> dict:
    out = {}
    for item in args.param or []:
        key, eq, val = item.partition("=")
        if not eq:
            raise argparse.ArgumentTypeError(f"--param expects name=value, got {item!r}")
        out[key.strip()] = eval_expr(val, {})
    if args.eps is not None:
        out["eps"] = args.eps
    return out


def resolve_spec(text: str, params: dict | None = None):
    """A ``.map`` path, or the name of a shipped gallery file (``.map`` optional)."""
    from .gallery import gallery_files

    path = Path(text)
    if path.exists():
        return parse_spec(path, params)
    files = gallery_files()
    name = text if text.endswith(".map") else text + ".map"
    if name in files:
        return parse_text(files[name], params, name=name[:-4])
    raise UnknownName(f"{text!r} is neither a file nor a gallery map ({', '.join(sorted(files))})")


def parse_region(text: str, level: int | None):
    from .transitivity import RegionCover

    kind, _, rest = text.partition(":")
    if kind == "annulus":
        w = float(rest) if rest else 0.05
        return RegionCover.annulus(w, level if level is not None else 7)
    lv = level if level is not None else 5
    if kind == "ball":
        x, y, r = _floats(rest, 3)
        return RegionCover.from_ball((x, y), r, lv)
    if kind == "box":
        x0, x1, y0, y1 = _floats(rest, 4)
        return RegionCover.from_box(x0, x1, y0, y1, lv)
    raise argparse.ArgumentTypeError(f"unknown region {text!r} (annulus[:w], ball:x,y,r, box:x0,x1,y0,y1)")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _write_csv(path: Path, header, rows) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------------ commands


def cmd_certify_ph(args, f) -> Outcome:
    from .certify import ConeSpec, certify_cone_invariance

    lam = float(eval_expr(args.lam, {}))
    cert = certify_cone_invariance(f, ConeSpec(args.slope, args.orientation), args.grid,
                                   args.iterate, lam, args.max_grid)
    return _cert_outcome(cert)


def cmd_certify_sve(args, f) -> Outcome:
    from .certify import certify_strong_volume_expansion

    cert = certify_strong_volume_expansion(f, args.grid, args.iterate, args.max_grid)
    return _cert_outcome(cert)


def _cert_outcome(cert) -> Outcome:
    d = cert.to_dict(timing=False)
    summary = [f"condition: {cert.condition}", f"grid: {cert.grid} (tried {cert.grids_tried})",
               f"worst centre margin: {cert.worst_margin:.6g}", f"slack: {cert.slack:.6g}",
               f"certified margin: {cert.certified_margin:.6g}"]
    if cert.witness:
        summary.append(f"witness: {cert.witness}")
    return Outcome(cert.verdict, cert.certified_margin, [list(cert.witness)] if cert.witness else [],
                   d, summary)


def cmd_canonical_form(args, f) -> Outcome:
    from .intlinalg import IntMat2, canonical_form

    vals = [int(v) for v in args.matrix.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("--matrix expects a,b,c,d")
    A = IntMat2(*vals)
    try:
        P, T = canonical_form(A)
    except NoIntegerEigenvalues as exc:
        return Outcome("NotFound", details={"A": A.rows(), "reason": str(exc)}, summary=[str(exc)])
    return Outcome("Found", details={"A": A.rows(), "P": P.rows(), "T": T.rows(), "det_P": P.det},
                   summary=[f"A = {A}", f"P = {P}", f"T = {T}", f"det P = {P.det}"])


def cmd_semiconj(args, f) -> Outcome:
    from .semiconj import kappa_bound, semiconj_defect, semiconj_eval_many

    params = kappa_bound(f)
    defect, bound = semiconj_defect(f, args.grid, args.tol, params)
    g = (np.arange(args.grid) + 0.5) / args.grid
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    h, depth = semiconj_eval_many(f, pts, args.tol, params)
    dev = float(np.max(np.abs(h - pts)))
    ok = defect <= bound and dev <= params.kappa + args.tol
    details = {"kappa": params.kappa, "kappa0": params.kappa0, "depth": depth, "defect": defect,
               "defect_bound": bound, "sup_h_minus_id": dev, "tol": args.tol}

    def artifacts(out: Path):
        _write_csv(out / "semiconj.csv", ("x", "y", "hx", "hy"),
                   ((repr(a), repr(b), repr(c), repr(d)) for (a, b), (c, d) in zip(pts.tolist(), h.tolist())))
        return ["semiconj.csv"]

    return Outcome("Passed" if ok else "Failed", bound - defect, [], details,
                   [f"kappa: {params.kappa:.6g}", f"series depth: {depth}",
                    f"defect: {defect:.3e} (bound {bound:.3e})", f"sup |h - id|: {dev:.6g}"],
                   artifacts)


def cmd_fibers(args, f) -> Outcome:
    from .semiconj import estimate_fiber, verify_fiber
    from .svg import points_svg

    p = _floats(args.point, 2)
    est = estimate_fiber(f, p, r=args.r, N=args.N, samples=args.samples, seed=args.seed, delta=args.delta)
    verified = verify_fiber(f, est)
    found = est.diameter > args.delta and verified
    d = est.to_dict()
    d["verified"] = verified
    w = est.witnesses

    def artifacts(out: Path):
        _write_csv(out / "fiber.csv", ("x", "y"), ((repr(a), repr(b)) for a, b in w.tolist()))
        R = max(est.radius, 1e-9)
        points_svg(out / "fiber.svg", w, (p[0] - R, p[0] + R, p[1] - R, p[1] + R), "fiber witnesses")
        return ["fiber.csv", "fiber.svg"]

    return Outcome("Found" if found else "NotFound", est.diameter, [list(est.base)], d,
                   [f"base: {est.base}", f"diameter: {est.diameter:.6g}", f"direction: {est.direction}",
                    f"depth: {est.depth}", f"verified: {verified}"], artifacts)


def cmd_dichotomy(args, f) -> Outcome:
    from .semiconj import dichotomy_test

    v = dichotomy_test(f, args.grid, args.r, args.N, args.delta, args.samples, args.seed)
    d = v.to_dict()
    d["max_fiber_by_point"] = [[list(e.base), e.diameter] for e in v.fibers]
    return Outcome(v.kind, v.diameter, [list(v.point)] if v.point else [], d,
                   [f"verdict: {v.kind}", f"largest fiber: {v.diameter:.6g} at {v.point}",
                    f"direction: {v.direction}", f"depth: {v.depth}", "numeric evidence only"])


def cmd_essential(args, f) -> Outcome:
    from .svg import points_svg
    from .transitivity import (BLICHFELDT_DENSITY, DEFAULT_DENSITY, doubly_essential_witness,
                               essential_iterate_bound, iterate_region, verify_essential,
                               write_witness_csv)

    U = parse_region(args.region, args.level)
    details = {"region": args.region, "cells": int(len(U.cells)), "area": U.area}

    try:
        rep = doubly_essential_witness(f, U, args.n_max, args.density, args.method)
    except NotFoundWithin as exc:
        return Outcome("NotFound", details=details, summary=[str(exc)])
    details.update(rep.to_dict())
    details["verified"] = verify_essential(f, rep)
    summary = [f"n: {rep.n}", f"e1 pair: {rep.e1_pair} (multiple {rep.multiples[0]})",
               f"e2 pair: {rep.e2_pair} (multiple {rep.multiples[1]})",
               f"residuals: {rep.residuals}", f"verified: {details['verified']}"]
    if args.with_bound:
        from .certify import certify_strong_volume_expansion
        from .semiconj import kappa_bound

        cert = certify_strong_volume_expansion(f, args.bound_grid)
        kappa = kappa_bound(f).kappa
        try:
            b = essential_iterate_bound(kappa, U.area, f.linear_part, cert.params["volume_rate"])
            details["iterate_bound"] = b.to_dict()
            summary.append(f"iterate bound N: {b.N}")
        except NoFiniteN as exc:
            details["iterate_bound"] = {"error": str(exc)}
            summary.append(f"iterate bound: {exc}")
        details["iterate_bound"].update({"kappa": kappa, "lam_vol": cert.params.get("volume_rate"),
                                         "sve_verdict": cert.verdict})
    dens = args.density or (DEFAULT_DENSITY if args.method == "direct" else BLICHFELDT_DENSITY)

    def artifacts(out: Path):
        W = iterate_region(f, U.witnesses(dens), rep.n)
        write_witness_csv(out / "witnesses.csv", [W])
        points_svg(out / "witnesses.svg", W.frac, title=f"witness image, n = {rep.n}")
        return ["witnesses.csv", "witnesses.svg"]

    return Outcome("Found" if details["verified"] else "Failed", None,
                   [list(rep.e1_pair[0]), list(rep.e1_pair[1]), list(rep.e2_pair[0]), list(rep.e2_pair[1])],
                   details, summary, artifacts)


def cmd_covering(args, f) -> Outcome:
    from .transitivity import covering_witness, iterate_region, write_witness_csv
    from .svg import points_svg

    U = parse_region(args.region, args.level)
    details = {"region": args.region, "cells": int(len(U.cells)), "resolution": args.m}
    try:
        res = covering_witness(f, U, args.m, args.n_max, args.density, args.max_density)
    except NotFoundWithin as exc:
        details["best_coverage"] = getattr(exc, "best", None)
        return Outcome("NotFound", details=details,
                       summary=[str(exc), f"best coverage: {details['best_coverage']}"])
    details.update(res.to_dict())

    def artifacts(out: Path):
        W = iterate_region(f, U.witnesses(res.density), res.n)
        write_witness_csv(out / "witnesses.csv", [W])
        points_svg(out / "witnesses.svg", W.frac, title=f"image after n = {res.n}")
        return ["witnesses.csv", "witnesses.svg"]

    return Outcome("Found", None, [], details,
                   [f"n: {res.n}", f"resolution: {res.resolution}", f"density: {res.density}"], artifacts)


def cmd_directions(args, f) -> Outcome:
    from .certify import ConeSpec
    from .directions import (center_direction, direction_field, special_ph_test, unstable_direction,
                             write_direction_csv)
    from .svg import segments_svg

    cone = ConeSpec(args.slope, args.orientation)
    p = _floats(args.point, 2)
    rng = np.random.default_rng(args.seed)
    k = abs(f.linear_part.det)
    branches = [int(b) for b in args.branches.split(",")] if args.branches else \
        rng.integers(0, k, size=args.depth).tolist()
    u = unstable_direction(f, p, branches, args.depth, cone)
    sp = special_ph_test(f, p, args.depth, args.trials, args.seed, cone)
    details = {"unstable": u.to_dict(), "special_ph": {k_: v for k_, v in sp.to_dict().items() if k_ != "probes"}}
    summary = [f"unstable direction: {u.direction} (width {u.width:.3g})",
               f"special PH deviation: {sp.max_deviation:.3g} (bound {sp.bound:.3g})"]
    try:
        c = center_direction(f, p, args.depth, cone)
        details["center"] = c.to_dict()
        summary.append(f"center direction: {c.direction} (verified steps {c.verified_steps})")
    except TorusEndoError as exc:
        details["center"] = {"error": str(exc)}
        summary.append(f"center direction: {exc}")
    probes = direction_field(f, args.field_grid, args.depth, "unstable", args.seed, cone) \
        if args.field_grid else [u]

    def artifacts(out: Path):
        write_direction_csv(out / "directions.csv", probes)
        L = 0.4 / max(args.field_grid, 1)
        seg = [(pr.base[0] - L * pr.direction[0], pr.base[1] - L * pr.direction[1],
                pr.base[0] + L * pr.direction[0], pr.base[1] + L * pr.direction[1]) for pr in probes]
        segments_svg(out / "directions.svg", seg, title="unstable directions")
        return ["directions.csv", "directions.svg"]

    return Outcome("Measured", sp.max_deviation, [list(u.base)], details, summary, artifacts)


def cmd_gallery(args, f) -> Outcome:
    from .gallery import check_product_constraints, gallery_files, product_terms

    files = gallery_files()
    if not args.name:
        return Outcome("Found", details={"maps": sorted(files)}, summary=sorted(files))
    g = resolve_spec(args.name, _params(args))
    text = serialize(g)
    details = {"name": g.name, "digest": digest(g), "map": text}
    if g.name == "product_example":
        details["constraints"] = check_product_constraints(product_terms())

    def artifacts(out: Path):
        (out / f"{g.name or 'map'}.map").write_text(text, encoding="utf-8")
        return [f"{g.name or 'map'}.map"]

    return Outcome("Found", details=details, summary=text.rstrip().splitlines(), artifacts=artifacts)


# ------------------------------------------------------------------ parser


def _common(p):
    p.add_argument("--out", default=None, help="output directory (default: runs/<command>)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=None, help="value of the parameter eps")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="set a map parameter")
    p.add_argument("--threads", type=int, default=None, help="worker cap (sets TORUSENDO_THREADS)")
    p.add_argument("--no-timing", action="store_true", help="omit wall time from report.json")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="torusendo", description="Certify and probe torus endomorphisms.",
                 epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"torusendo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, spec=True, **kw):
        p = sub.add_parser(name, epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter, **kw)
        if spec:
            p.add_argument("spec", help="path to a .map file or a gallery name")
        _common(p)
        p.set_defaults(func=func, needs_spec=spec)
        return p

    p = add("certify-ph", cmd_certify_ph, help="certify an invariant expanding cone field")
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--max-grid", type=int, default=8192)
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--orientation", choices=("horizontal", "vertical"), default="horizontal")
    p.add_argument("--iterate", type=int, default=1)
    p.add_argument("--lam", default="2", help="expansion factor (expression, e.g. 2*2**0.5)")

    p = add("certify-sve", cmd_certify_sve, help="certify strong volume expansion")
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--max-grid", type=int, default=8192)
    p.add_argument("--iterate", type=int, default=1)

    p = add("canonical-form", cmd_canonical_form, spec=False, help="integer triangular form of a matrix")
    p.add_argument("--matrix", required=True, help="entries a,b,c,d of [[a, b], [c, d]]")

    p = add("semiconj", cmd_semiconj, help="evaluate the semiconjugacy and its defect")
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--tol", type=float, default=1e-8)

    def fiber_flags(p, grid_default=None):
        p.add_argument("--r", type=float, default=None, help="orbit radius (default 3 kappa)")
        p.add_argument("--N", type=int, default=None, help="orbit depth")
        p.add_argument("--samples", type=int, default=400)
        if grid_default is not None:
            p.add_argument("--grid", type=int, default=grid_default)

    p = add("fibers", cmd_fibers, help="estimate the fiber of the semiconjugacy through a point")
    p.add_argument("--point", default="0,0")
    p.add_argument("--delta", type=float, default=1e-3)
    fiber_flags(p)

    p = add("dichotomy", cmd_dichotomy, help="conjugacy evidence or annulus candidate")
    p.add_argument("--delta", type=float, default=0.01)
    fiber_flags(p, grid_default=8)

    p = add("essential", cmd_essential, help="doubly essential witness of an iterated region")
    p.add_argument("--region", default="ball:0,0,0.05")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--density", type=int, default=None)
    p.add_argument("--method", choices=("direct", "blichfeldt"), default="direct")
    p.add_argument("--with-bound", action="store_true", help="also compute the iterate bound")
    p.add_argument("--bound-grid", type=int, default=512)

    p = add("covering", cmd_covering, help="find n with f^n(U) meeting every grid cell")
    p.add_argument("--region", default="ball:0,0,0.05")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--m", type=int, default=32, help="torus grid resolution")
    p.add_argument("--grid", dest="m", type=int, help="alias of --m")
    p.add_argument("--n-max", type=int, default=25)
    p.add_argument("--density", type=int, default=8)
    p.add_argument("--max-density", type=int, default=256)

    p = add("directions", cmd_directions, help="unstable and center direction probes")
    p.add_argument("--point", default="0,0")
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--branches", default=None, help="comma separated preimage indices")
    p.add_argument("--field-grid", type=int, default=0, help="also probe a grid x grid field")
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--orientation", choices=("horizontal", "vertical"), default="horizontal")

    p = add("gallery", cmd_gallery, spec=False, help="list or export the shipped maps")
    p.add_argument("name", nargs="?", default=None)
    return ap


_SKIP_FLAGS = {"func", "needs_spec", "out", "no_timing", "quiet", "threads", "command"}


def run(argv=None) -> tuple[int, dict | None]:
    """Parse ``argv``, execute, write the report; returns ``(exit_code, report)``."""
    args = build_parser().parse_args(argv)
    if args.threads:
        os.environ["TORUSENDO_THREADS"] = str(args.threads)
    out = Path(args.out) if args.out else Path("runs") / args.command
    t0 = time.perf_counter()
    try:
        f = resolve_spec(args.spec, _params(args)) if args.needs_spec else None
        outcome = args.func(args, f)
    except (TorusEndoError, argparse.ArgumentTypeError, ValueError, OSError) as exc:
        print(f"torusendo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR, None
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    files = outcome.artifacts(out) if outcome.artifacts else []
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "version": __version__,
        "spec": f.name if f is not None else None,
        "spec_digest": digest(f) if f is not None else None,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k not in _SKIP_FLAGS},
        "seed": args.seed,
        "backend": _backend.name,
        "verdict": outcome.verdict,
        "margin": outcome.margin,
        "witnesses": outcome.witnesses,
        "details": outcome.details,
        "artifacts": files,
    }
    if not args.no_timing:
        report["timing"] = {"wall_time_s": wall}
    report = _clean(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    lines = [f"command: {args.command}", f"spec: {report['spec']} ({report['spec_digest']})",
             f"verdict: {outcome.verdict}"]
    if outcome.margin is not None:
        lines.append(f"margin: {outcome.margin:.6g}")
    lines += outcome.summary
    lines.append(f"wall time: {wall:.3f} s")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_CODES.get(outcome.verdict, EXIT_ERROR), report


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
