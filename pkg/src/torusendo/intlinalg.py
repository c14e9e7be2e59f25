"""Exact integer linear algebra on 2x2 matrices and a constructive Blichfeldt search.

Everything here works on Python integers and :class:`fractions.Fraction`;
no floating point enters a decision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import AreaTooSmall, NoIntegerEigenvalues, PreconditionViolated


@dataclass(frozen=True)
class IntMat2:
    """Exact 2x2 integer matrix ``[[a, b], [c, d]]``."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"IntMat2 entry {name}={v!r} is not an integer")
            object.__setattr__(self, name, int(v))

    @classmethod
    def from_rows(cls, rows) -> "IntMat2":
        (a, b), (c, d) = rows
        return cls(int(a), int(b), int(c), int(d))

    @classmethod
    def identity(cls) -> "IntMat2":
        return cls(1, 0, 0, 1)

    @classmethod
    def diag(cls, p: int, q: int) -> "IntMat2":
        return cls(p, 0, 0, q)

    def rows(self):
        return ((self.a, self.b), (self.c, self.d))

    def to_array(self, dtype=float) -> np.ndarray:
        return np.array(self.rows(), dtype=dtype)

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> int:
        return self.a + self.d

    def adjugate(self) -> "IntMat2":
        return IntMat2(self.d, -self.b, -self.c, self.a)

    def __matmul__(self, other):
        if isinstance(other, IntMat2):
            return IntMat2(
                self.a * other.a + self.b * other.c,
                self.a * other.b + self.b * other.d,
                self.c * other.a + self.d * other.c,
                self.c * other.b + self.d * other.d,
            )
        x, y = other
        return (self.a * x + self.b * y, self.c * x + self.d * y)

    def __pow__(self, n: int) -> "IntMat2":
        if n < 0:
            raise ValueError("negative powers are not integer matrices")
        result, base = IntMat2.identity(), self
        while n:
            if n & 1:
                result = result @ base
            base = base @ base
            n >>= 1
        return result

    def inverse_unimodular(self) -> "IntMat2":
        if self.det not in (1, -1):
            raise ValueError(f"det = {self.det}; inverse is not integral")
        adj = self.adjugate()
        s = self.det
        return IntMat2(adj.a * s, adj.b * s, adj.c * s, adj.d * s)

    def is_lower_triangular(self) -> bool:
        return self.b == 0

    def __str__(self):
        return f"[[{self.a}, {self.b}], [{self.c}, {self.d}]]"


@dataclass(frozen=True)
class EigenData:
    lam1: int
    lam2: int
    v: tuple[int, int]  # primitive eigenvector for lam2


def _primitive(v: tuple[int, int]) -> tuple[int, int]:
    g = math.gcd(v[0], v[1])
    x, y = v[0] // g, v[1] // g
    if x < 0 or (x == 0 and y < 0):
        x, y = -x, -y
    return (x, y)


def integer_eigenvalues(A: IntMat2) -> EigenData | None:
    """Integer eigendata of ``A``, or ``None`` when the spectrum is not integral.

    ``lam1`` has the larger modulus; ties are broken by ``lam1 >= lam2``.
    """
    tr, det = A.trace, A.det
    disc = tr * tr - 4 * det
    if disc < 0:
        return None
    s = math.isqrt(disc)
    if s * s != disc or (tr + s) % 2:
        return None
    r1, r2 = (tr + s) // 2, (tr - s) // 2
    lam1, lam2 = sorted((r1, r2), key=lambda t: (abs(t), t), reverse=True)
    # kernel of A - lam2*I
    m00, m01, m10, m11 = A.a - lam2, A.b, A.c, A.d - lam2
    if (m01, -m00) != (0, 0):
        v = (m01, -m00)
    elif (-m11, m10) != (0, 0):
        v = (-m11, m10)
    else:  # scalar matrix
        v = (0, 1)
    return EigenData(lam1, lam2, _primitive(v))


def _ext_gcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def bezout_min_p(v1: int, v2: int) -> tuple[int, int]:
    """Return ``(p, q)`` with ``p*v1 + q*v2 == 1`` and ``|p|`` minimal.

    Among the (at most two) minimal choices the negative ``p`` wins.
    """
    g, p, q = _ext_gcd(v1, v2)
    if g < 0:
        g, p, q = -g, -p, -q
    if g != 1:
        raise ValueError(f"({v1}, {v2}) is not primitive")
    if v2 == 0:
        return p, 0
    # p + t*v2, q - t*v1 is the whole solution family
    step = abs(v2)
    sgn = 1 if v2 > 0 else -1
    r = p % step
    best = None
    for cand in (r, r - step):
        t = (cand - p) // step * sgn
        pc, qc = p + t * v2, q - t * v1
        key = (abs(pc), pc)
        if best is None or key < best[0]:
            best = (key, pc, qc)
    _, pc, qc = best
    assert pc * v1 + qc * v2 == 1
    return pc, qc


def canonical_form(A: IntMat2) -> tuple[IntMat2, IntMat2]:
    """Find ``P`` in SL(2, Z) with ``P^-1 A P = [[lam1, 0], [mu, lam2]]``.

    The second column of ``P`` is the primitive ``lam2``-eigenvector, the
    first column completes it to a unimodular basis.
    """
    eig = integer_eigenvalues(A)
    if eig is None:
        raise NoIntegerEigenvalues(f"{A} has no integer eigenvalues")
    v1, v2 = eig.v
    p, q = bezout_min_p(v1, v2)
    P = IntMat2(q, v1, -p, v2)
    T = P.inverse_unimodular() @ A @ P
    if P.det != 1 or T.b != 0 or (T.a, T.d) != (eig.lam1, eig.lam2):
        raise AssertionError(f"canonical form verification failed for {A}")
    return P, T


# ---------------------------------------------------------------- norms


def _ceil_float(fr: Fraction) -> float:
    f = float(fr)
    if Fraction(f) < fr:
        f = math.nextafter(f, math.inf)
    return f


def inverse_power_norms(A: IntMat2, count: int) -> list[float]:
    """Upper bounds on ``||A^-m||_inf`` for ``m = 1..count`` (exact, rounded up)."""
    det = A.det
    if det == 0:
        raise ZeroDivisionError("singular matrix")
    adj = A.adjugate()
    M = IntMat2.identity()
    out = []
    for m in range(1, count + 1):
        M = M @ adj
        rowsum = max(abs(M.a) + abs(M.b), abs(M.c) + abs(M.d))
        out.append(_ceil_float(Fraction(rowsum, abs(det) ** m)))
    return out


def inverse_power_matrix(A: IntMat2, m: int) -> np.ndarray:
    """Float matrix ``A^-m`` computed from the exact rational value."""
    adj = A.adjugate() ** m
    den = A.det ** m
    return np.array([[float(Fraction(x, den)) for x in row] for row in adj.rows()])


def log_spectral_norm(M: IntMat2) -> float:
    """``log ||M||_2`` for an integer matrix of any size."""
    s = max(abs(M.a), abs(M.b), abs(M.c), abs(M.d))
    if s == 0:
        return -math.inf
    m = np.array([[Fraction(x, s) for x in row] for row in M.rows()], dtype=float)
    return math.log(s) + math.log(np.linalg.norm(m, 2))


# ---------------------------------------------------------------- Blichfeldt


def _frac(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


@dataclass(frozen=True)
class CellSet:
    """Finite union of axis-aligned rectangles with exact rational corners.

    Each rectangle is ``(x0, x1, y0, y1)`` with ``x0 < x1`` and ``y0 < y1``.
    """

    rects: tuple[tuple[Fraction, Fraction, Fraction, Fraction], ...]

    def __init__(self, rects: Iterable[Sequence]):
        norm = []
        for r in rects:
            x0, x1, y0, y1 = (_frac(t) for t in r)
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"degenerate rectangle {r}")
            norm.append((x0, x1, y0, y1))
        object.__setattr__(self, "rects", tuple(norm))

    @classmethod
    def from_cells(cls, cells, size) -> "CellSet":
        """Grid cells ``(i, j)`` of side ``size`` (a Fraction)."""
        size = Fraction(size)
        return cls((i * size, (i + 1) * size, j * size, (j + 1) * size) for i, j in cells)

    @cached_property
    def area(self) -> Fraction:
        """Exact Lebesgue measure of the union (summed over folded unit squares)."""
        if not self.rects:
            return Fraction(0)
        count, xs, ys, _ = fold_multiplicity(self)
        total = Fraction(0)
        for i, j in zip(*np.nonzero(count)):
            total += int(count[i, j]) * (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j])
        return total

    def contains(self, pt) -> bool:
        x, y = (_frac(t) for t in pt)
        return any(x0 <= x <= x1 and y0 <= y <= y1 for x0, x1, y0, y1 in self.rects)

    def contains_open(self, pt) -> bool:
        x, y = (_frac(t) for t in pt)
        return any(x0 < x < x1 and y0 < y < y1 for x0, x1, y0, y1 in self.rects)


def _fold(cs: CellSet):
    """Pieces of every rectangle folded into [0,1)^2, tagged with their lattice shift."""
    pieces = []
    for x0, x1, y0, y1 in cs.rects:
        for i in range(math.floor(x0), math.ceil(x1)):
            a, b = max(x0, i) - i, min(x1, i + 1) - i
            if a >= b:
                continue
            for j in range(math.floor(y0), math.ceil(y1)):
                c, d = max(y0, j) - j, min(y1, j + 1) - j
                if c >= d:
                    continue
                pieces.append(((a, b, c, d), (i, j)))
    return pieces


def fold_multiplicity(cs: CellSet):
    """Fold ``cs`` into the unit square and count distinct lattice translates per subcell.

    Returns ``(count, xs, ys, masks)`` where ``count[i, j]`` is the number of
    integer vectors ``t`` with subcell ``[xs[i], xs[i+1]] x [ys[j], ys[j+1]]``
    (shifted by ``t``) inside the union.
    """
    pieces = _fold(cs)
    xs = sorted({Fraction(0), Fraction(1)} | {c for r, _ in pieces for c in r[:2]})
    ys = sorted({Fraction(0), Fraction(1)} | {c for r, _ in pieces for c in r[2:]})
    xi = {x: i for i, x in enumerate(xs)}
    yi = {y: i for i, y in enumerate(ys)}
    masks: dict[tuple[int, int], np.ndarray] = {}
    shape = (len(xs) - 1, len(ys) - 1)
    for (a, b, c, d), t in pieces:
        m = masks.get(t)
        if m is None:
            m = masks[t] = np.zeros(shape, dtype=bool)
        m[xi[a]:xi[b], yi[c]:yi[d]] = True
    count = np.zeros(shape, dtype=np.int64)
    for m in masks.values():
        count += m
    return count, xs, ys, masks


@dataclass(frozen=True)
class BlichfeldtResult:
    translation: tuple[Fraction, Fraction]   # t with t + points[i] in Z^2
    points: tuple[tuple[Fraction, Fraction], ...]
    multiplicity: int = field(default=0)


def blichfeldt_translate(cs: CellSet, k: int) -> BlichfeldtResult:
    """Constructive Blichfeldt: ``k + 1`` points of ``cs`` with integer pairwise differences.

    Requires ``area(cs) > k``; the points are midpoints of a folded subcell
    hit by at least ``k + 1`` translates, so they lie in the interior of ``cs``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if cs.area <= k:
        raise AreaTooSmall(f"area {cs.area} <= {k}")
    count, xs, ys, masks = fold_multiplicity(cs)
    flat = int(np.argmax(count))
    i, j = np.unravel_index(flat, count.shape)
    mult = int(count[i, j])
    # the measure argument makes mult > k whenever area > k
    assert mult >= k + 1, "Blichfeldt fold found no (k+1)-covered subcell"
    z = ((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2)
    shifts = sorted(t for t, m in masks.items() if m[i, j])[: k + 1]
    pts = tuple((z[0] + t[0], z[1] + t[1]) for t in shifts)
    return BlichfeldtResult((-z[0], -z[1]), pts, mult)


def pigeonhole_pairs(pts, ell: int):
    """Two integer points sharing a row and two sharing a column.

    ``pts`` are distinct points of ``{1..ell}^2`` with ``len(pts) >= ell + 1``.
    Returns ``(row_pair, column_pair)``.
    """
    pts = [tuple(int(c) for c in p) for p in pts]
    if len(set(pts)) != len(pts):
        raise PreconditionViolated("points are not distinct")
    if len(pts) < ell + 1:
        raise PreconditionViolated(f"need at least {ell + 1} points, got {len(pts)}")
    if any(not (1 <= x <= ell and 1 <= y <= ell) for x, y in pts):
        raise PreconditionViolated(f"points outside {{1..{ell}}}^2")

    def first_pair(key):
        seen = {}
        for p in sorted(pts, key=lambda p: (key(p), p)):
            if key(p) in seen:
                return (seen[key(p)], p)
            seen[key(p)] = p
        raise AssertionError("pigeonhole failed")

    return first_pair(lambda p: p[1]), first_pair(lambda p: p[0])
