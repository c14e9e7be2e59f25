"""Built-in example maps.

* ``paper_example(eps)``: the skew product ``(5x + sin(2 pi x)/2pi,
  2y - (1+eps) cos^2(pi x) sin(2 pi y)/2pi)`` over ``diag(5, 2)``.
* ``product_example()``: ``(3x, g(y))`` with ``g`` of degree 2 fixing 0 as an
  attractor, ``g'(0) = 0.8`` and ``2/3 < g' < 3``.
* ``shear_example(c)``: ``(3x, 2y + c sin(2 pi x)/2pi)``, a skew product whose
  unstable direction depends on the pre-orbit.
* ``linear(A)``.
"""
from __future__ import annotations

import math
from importlib import resources

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import UnknownName, ValidationError
from .intlinalg import IntMat2
from .maps import FourierTerm, PeriodicField, TorusEndomorphism

PI = math.pi
DEFAULT_EPS = 0.1

# g(y) = 2y - a sin(2 pi y)/(2 pi) - b sin(4 pi y)/(4 pi)
PRODUCT_A = 1.0
PRODUCT_B = 0.2


def paper_example(eps: float = DEFAULT_EPS) -> TorusEndomorphism:
    # cos^2(pi x) sin(2 pi y) = sin(2 pi y)/2 + (sin(2 pi (x+y)) - sin(2 pi (x-y)))/4
    s = 1.0 + eps
    field = PeriodicField((
        (FourierTerm(1 / (2 * PI), "sin", (1, 0)),),
        (FourierTerm(-s / (4 * PI), "sin", (0, 1)),
         FourierTerm(-s / (8 * PI), "sin", (1, 1)),
         FourierTerm(s / (8 * PI), "sin", (1, -1))),
    ))
    return TorusEndomorphism(IntMat2.diag(5, 2), field, "paper_example")


def product_terms(a: float = PRODUCT_A, b: float = PRODUCT_B):
    return (FourierTerm(-a / (2 * PI), "sin", (0, 1)),
            FourierTerm(-b / (4 * PI), "sin", (0, 2)))


def circle_derivative_range(terms, degree: int) -> tuple[float, float]:
    """Exact range of ``g'(y) = degree + sum c 2 pi k cos/sin(2 pi k y)`` for y-only sin terms.

    ``cos(2 pi k y) = T_k(cos 2 pi y)``, so ``g'`` is a Chebyshev series on
    ``[-1, 1]``; extremes sit at the endpoints or at critical points.
    """
    coef = np.zeros(1 + max(t.k[1] for t in terms))
    coef[0] = degree
    for t in terms:
        if t.kind != "sin" or t.k[0] != 0:
            raise ValueError("only y-dependent sin terms are supported")
        coef[t.k[1]] += t.coeff * 2 * PI * t.k[1]
    crit = C.chebroots(C.chebder(coef)) if len(coef) > 2 else np.array([])
    crit = np.real(crit[np.abs(np.imag(crit)) < 1e-12]) if crit.size else crit
    cand = np.concatenate([[-1.0, 1.0], crit[(crit >= -1) & (crit <= 1)]])
    vals = C.chebval(cand, coef)
    return float(vals.min()), float(vals.max())


def check_product_constraints(terms, degree: int = 2) -> dict:
    """g(0) = 0, g'(0) < 1 and 2/3 < g' < 3 on the whole circle."""
    lo, hi = circle_derivative_range(terms, degree)
    g0 = sum(t.coeff * math.sin(0.0) for t in terms)
    dg0 = degree + sum(t.coeff * 2 * PI * t.k[1] for t in terms)
    ok = g0 == 0.0 and dg0 < 1 and lo > 2 / 3 and hi < 3
    info = {"g(0)": g0, "g'(0)": dg0, "min g'": lo, "max g'": hi}
    if not ok:
        raise ValidationError(f"product example violates its constraints: {info}")
    return info


def product_example() -> TorusEndomorphism:
    terms = product_terms()
    check_product_constraints(terms)
    return TorusEndomorphism(IntMat2.diag(3, 2), PeriodicField(((), terms)), "product_example")


def shear_example(c: float = 0.5) -> TorusEndomorphism:
    field = PeriodicField(((), (FourierTerm(c / (2 * PI), "sin", (1, 0)),)))
    return TorusEndomorphism(IntMat2.diag(3, 2), field, "shear_example")


def linear(A=IntMat2.diag(5, 2)) -> TorusEndomorphism:
    if not isinstance(A, IntMat2):
        A = IntMat2.from_rows(A)
    return TorusEndomorphism(A, PeriodicField(), f"linear_{A.a}_{A.b}_{A.c}_{A.d}")


NAMES = ("paper_example", "product_example", "shear_example", "linear")


def gallery(name: str, **kw) -> TorusEndomorphism:
    builders = {"paper_example": paper_example, "product_example": product_example,
                "shear_example": shear_example, "linear": linear}
    if name not in builders:
        raise UnknownName(f"unknown gallery map {name!r}; choose from {', '.join(NAMES)}")
    return builders[name](**kw)


def gallery_files() -> dict[str, str]:
    """Shipped ``.map`` sources keyed by file name."""
    root = resources.files("torusendo") / "gallery"
    return {p.name: p.read_text(encoding="utf-8") for p in root.iterdir() if p.name.endswith(".map")}
