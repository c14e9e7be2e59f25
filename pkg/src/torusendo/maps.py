"""Torus endomorphisms with trigonometric-polynomial displacement.

A map is ``f~(x) = A x + D(x)`` on the plane, where ``A`` is an integer
matrix (the action on homology) and ``D`` is a finite sum of terms
``c * sin(2 pi k.x)`` or ``c * cos(2 pi k.x)`` per coordinate.  Because ``D``
is given by coefficients, its derivatives, sup norm and Lipschitz constants
are available in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .errors import BranchDivergence, ResidualTooLarge
from .intlinalg import IntMat2

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FourierTerm:
    """``coeff * kind(2 pi (k1 x + k2 y))``."""

    coeff: float
    kind: str
    k: tuple[int, int]

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"kind must be 'sin' or 'cos', got {self.kind!r}")
        k = (int(self.k[0]), int(self.k[1]))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "coeff", float(self.coeff))
        if not math.isfinite(self.coeff):
            raise ValueError("coefficient must be finite")
        if self.kind == "sin" and k == (0, 0):
            raise ValueError("sin term with zero wavevector is identically zero")

    def scaled(self, c: float) -> "FourierTerm":
        return FourierTerm(self.coeff * c, self.kind, self.k)


@dataclass(frozen=True)
class PeriodicField:
    """Z^2-periodic displacement ``f~ - A``: one term list per coordinate."""

    components: tuple[tuple[FourierTerm, ...], tuple[FourierTerm, ...]] = ((), ())

    def __post_init__(self):
        comps = tuple(tuple(c) for c in self.components)
        if len(comps) != 2:
            raise ValueError("a planar field has exactly two components")
        object.__setattr__(self, "components", comps)

    @cached_property
    def packed(self):
        comp, coeff, kind, k1, k2 = [], [], [], [], []
        for c, terms in enumerate(self.components):
            for t in terms:
                comp.append(c)
                coeff.append(t.coeff)
                kind.append(1 if t.kind == "cos" else 0)
                k1.append(t.k[0])
                k2.append(t.k[1])
        return (np.array(comp, dtype=np.int64), np.array(coeff, dtype=np.float64),
                np.array(kind, dtype=np.int64), np.array(k1, dtype=np.int64),
                np.array(k2, dtype=np.int64))

    def scaled(self, c: float) -> "PeriodicField":
        return PeriodicField(tuple(tuple(t.scaled(c) for t in comp) for comp in self.components))

    def is_zero(self) -> bool:
        return all(t.coeff == 0.0 for comp in self.components for t in comp)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        dx, dy = _backend.kernels.displacement(*self.packed, pts[..., 0], pts[..., 1])
        return np.stack([dx, dy], axis=-1)


@dataclass(frozen=True)
class TorusEndomorphism:
    linear_part: IntMat2
    displacement: PeriodicField = field(default_factory=PeriodicField)
    name: str = ""

    def __post_init__(self):
        if abs(self.linear_part.det) < 1:
            raise ValueError("linear part must have |det A| >= 1")

    @cached_property
    def A(self) -> np.ndarray:
        return self.linear_part.to_array()

    @cached_property
    def a_flat(self) -> np.ndarray:
        return self.A.ravel().copy()

    @cached_property
    def ai_flat(self) -> np.ndarray:
        return self.linear_part.to_array(np.int64).ravel().copy()

    def kernel_args(self):
        return self.displacement.packed

    def scaled(self, c: float) -> "TorusEndomorphism":
        return TorusEndomorphism(self.linear_part, self.displacement.scaled(c), self.name)

    # convenience wrappers
    def __call__(self, x):
        return eval_lift(self, x)

    def torus(self, x):
        return np.mod(eval_lift(self, x), 1.0)


def eval_lift(f: TorusEndomorphism, x) -> np.ndarray:
    """``A x + D(x)`` for a point or an ``(..., 2)`` array of points."""
    x = np.asarray(x, dtype=float)
    return x @ f.A.T + f.displacement(x)


def eval_derivative(f: TorusEndomorphism, p) -> np.ndarray:
    """Exact derivative ``Df_p``; shape ``(2, 2)`` or ``(..., 2, 2)``."""
    p = np.asarray(p, dtype=float)
    d = _backend.kernels.jacobian(f.a_flat, *f.kernel_args(), p[..., 0], p[..., 1])
    return np.stack(d, axis=-1).reshape(p.shape[:-1] + (2, 2))


def jacobian_det(f: TorusEndomorphism, p) -> np.ndarray | float:
    p = np.asarray(p, dtype=float)
    d00, d01, d10, d11 = _backend.kernels.jacobian(f.a_flat, *f.kernel_args(), p[..., 0], p[..., 1])
    det = np.abs(d00 * d11 - d01 * d10)
    return float(det) if det.ndim == 0 else det


def extract_linear_part(lift: Callable, x: Sequence[float] = (0.0, 0.0)) -> tuple[IntMat2, float]:
    """Recover the homology action from a lift evaluator.

    Column ``j`` is ``lift(x + e_j) - lift(x)`` rounded to integers; the
    reference point is the origin unless given.
    """
    x = np.asarray(x, dtype=float)
    base = np.asarray(lift(x), dtype=float)
    cols, residual = [], 0.0
    for e in ((1.0, 0.0), (0.0, 1.0)):
        col = np.asarray(lift(x + np.array(e)), dtype=float) - base
        r = np.rint(col)
        residual = max(residual, float(np.max(np.abs(col - r))))
        cols.append(r.astype(int))
    if residual > 1e-6:
        raise ResidualTooLarge(residual)
    A = IntMat2(int(cols[0][0]), int(cols[1][0]), int(cols[0][1]), int(cols[1][1]))
    return A, residual


def sup_displacement_bound(f: TorusEndomorphism) -> float:
    """``max_i sum |coeff|`` over the terms of component ``i``: bounds ``|f~ - A|_inf``."""
    return max(sum(abs(t.coeff) for t in comp) for comp in f.displacement.components)


def derivative_bounds(f: TorusEndomorphism) -> tuple[np.ndarray, np.ndarray]:
    """Entrywise bounds for ``Df``.

    Returns ``(S, L)`` with ``|Df_ij| <= S_ij`` everywhere and
    ``|Df_ij(p) - Df_ij(q)| <= L_ij |p - q|_inf``.
    """
    S = np.abs(f.A).astype(float)
    L = np.zeros((2, 2))
    for i, comp in enumerate(f.displacement.components):
        for t in comp:
            k1, k2 = abs(t.k[0]), abs(t.k[1])
            kn = k1 + k2
            c = abs(t.coeff)
            S[i, 0] += c * TWO_PI * k1
            S[i, 1] += c * TWO_PI * k2
            L[i, 0] += c * TWO_PI ** 2 * k1 * kn
            L[i, 1] += c * TWO_PI ** 2 * k2 * kn
    return S, L


def lipschitz_bounds(f: TorusEndomorphism) -> tuple[float, float]:
    """``(LipDf, LipDet)`` against the sup norm on points.

    ``LipDf`` bounds every entry of ``Df`` (max-entry matrix norm);
    ``LipDet`` follows from ``|ad - a'd'| <= |a - a'||d| + |a'||d - d'|``.
    """
    S, L = derivative_bounds(f)
    lip_det = L[0, 0] * S[1, 1] + S[0, 0] * L[1, 1] + L[0, 1] * S[1, 0] + S[0, 1] * L[1, 0]
    return float(L.max()), float(lip_det)


def sup_step_lipschitz(f: TorusEndomorphism) -> float:
    """Lipschitz constant of ``f~`` in the sup norm (max row sum of ``S``)."""
    S, _ = derivative_bounds(f)
    return float(S.sum(axis=1).max())


def residue_representatives(A: IntMat2) -> list[tuple[int, int]]:
    """Integer points of ``A [0,1)^2``: one per class of ``Z^2 / A Z^2``."""
    from fractions import Fraction

    det = A.det
    corners = [A @ c for c in ((0, 0), (1, 0), (0, 1), (1, 1))]
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    adj = A.adjugate()
    reps = []
    for wx in range(min(xs), max(xs) + 1):
        for wy in range(min(ys), max(ys) + 1):
            tx, ty = adj @ (wx, wy)
            sx, sy = Fraction(tx, det), Fraction(ty, det)
            if 0 <= sx < 1 and 0 <= sy < 1:
                reps.append((wx, wy))
    assert len(reps) == abs(det)
    return reps


def _newton(f: TorusEndomorphism, target: np.ndarray, seed: np.ndarray,
            max_iter: int = 60, tol: float = 1e-13) -> np.ndarray:
    p = seed.copy()
    res = eval_lift(f, p) - target
    rn = np.linalg.norm(res)
    for _ in range(max_iter):
        if rn <= tol:
            return p
        step = np.linalg.solve(eval_derivative(f, p), res)
        t = 1.0
        while True:
            cand = p - t * step
            cres = eval_lift(f, cand) - target
            cn = np.linalg.norm(cres)
            if cn < rn or t < 1e-6:
                break
            t *= 0.5  # damping on overshoot
        p, res, rn = cand, cres, cn
    if rn <= 1e-10:
        return p
    raise BranchDivergence(f"Newton residual {rn:.2e} after {max_iter} iterations")


def preimages(f: TorusEndomorphism, q) -> np.ndarray:
    """All ``|det A|`` preimages of torus point ``q``, sorted lexicographically.

    One Newton solve of ``f~(p) = q + w`` per residue class ``w`` of
    ``Z^2 / A Z^2``, seeded at ``A^-1 (q + w)``.
    """
    q = np.mod(np.asarray(q, dtype=float), 1.0)
    Ainv = np.linalg.inv(f.A)
    out = []
    for w in residue_representatives(f.linear_part):
        target = q + np.asarray(w, dtype=float)
        p = _newton(f, target, Ainv @ target)
        out.append(np.mod(p, 1.0))
    pts = np.array(out)
    pts[pts >= 1.0] -= 1.0
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order]
