"""Forward images of open regions, doubly-essential witnesses and covering witnesses.

Regions are unions of dyadic cells of side ``2**-level`` in the plane.  Two
views of an iterated region are kept apart:

* an *outer* cover, a list of plane boxes that provably contain the image
  (each cell is followed as one box whose half-widths grow by the entrywise
  derivative bound ``S`` at every step);
* an *inner* witness set, sample points of the region pushed forward
  exactly, with the integer part of the lift tracked in ``int64`` separately
  from the fractional part.

Witnesses are evidence at a resolution, not proofs of transitivity.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from .errors import CellBlowup, LiftOverflow, NoFiniteN, NotFoundWithin, PreconditionViolated
from .intlinalg import (CellSet, IntMat2, blichfeldt_translate, log_spectral_norm,
                        pigeonhole_pairs)
from .maps import TorusEndomorphism, derivative_bounds, eval_derivative, sup_displacement_bound

OUTER, INNER = "OuterCover", "InnerWitnessSet"
DEFAULT_LEVEL = 5
DEFAULT_DENSITY = 8
BLICHFELDT_DENSITY = 64
CHUNK = 1 << 15
BOX_GUARD = 1e-12
DISPLACEMENT_TOL = 1e-8
_INT_LIMIT = 2 ** 62
MAX_SAMPLES = 1 << 21


@dataclass(frozen=True, eq=False)
class RegionCover:
    """A region ``U`` given by dyadic cells, or one of its forward images.

    ``cells`` always describes the source region (``n = 0``).  Outer covers
    carry ``boxes`` (rows ``x0, x1, y0, y1`` in the plane); inner witness
    sets carry the torus position ``frac``, the lattice part ``shift`` and the
    ``source`` sample each witness came from, plus the index of its cell.
    """

    kind: str
    level: int
    cells: np.ndarray
    n: int = 0
    boxes: np.ndarray | None = None
    frac: np.ndarray | None = None
    shift: np.ndarray | None = None
    source: np.ndarray | None = None
    origin: np.ndarray | None = None
    density: int = 0

    # ---- constructors
    @classmethod
    def from_cells(cls, cells, level: int = DEFAULT_LEVEL) -> "RegionCover":
        cells = np.unique(np.asarray(cells, dtype=np.int64).reshape(-1, 2), axis=0)
        if len(cells) == 0:
            raise PreconditionViolated("region has no cells at this level")
        h = 2.0 ** -level
        boxes = np.column_stack([cells[:, 0] * h, (cells[:, 0] + 1) * h,
                                 cells[:, 1] * h, (cells[:, 1] + 1) * h])
        return cls(OUTER, level, cells, 0, boxes=boxes)

    @classmethod
    def from_box(cls, x0, x1, y0, y1, level: int = DEFAULT_LEVEL) -> "RegionCover":
        """Cells of the given level contained in the closed box."""
        s = 2 ** level
        i = np.arange(math.ceil(x0 * s), math.floor(x1 * s))
        j = np.arange(math.ceil(y0 * s), math.floor(y1 * s))
        I, J = np.meshgrid(i, j, indexing="ij")
        return cls.from_cells(np.column_stack([I.ravel(), J.ravel()]), level)

    @classmethod
    def from_ball(cls, center, radius: float, level: int = DEFAULT_LEVEL) -> "RegionCover":
        """Cells all of whose corners lie in the closed Euclidean ball."""
        cx, cy = map(float, center)
        s = 2 ** level
        i = np.arange(math.floor((cx - radius) * s), math.ceil((cx + radius) * s))
        j = np.arange(math.floor((cy - radius) * s), math.ceil((cy + radius) * s))
        I, J = np.meshgrid(i, j, indexing="ij")
        ok = np.ones(I.shape, dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                ok &= np.hypot((I + di) / s - cx, (J + dj) / s - cy) <= radius
        return cls.from_cells(np.column_stack([I[ok], J[ok]]), level)

    @classmethod
    def annulus(cls, half_width: float = 0.05, level: int = 7) -> "RegionCover":
        """The horizontal band ``T x (-w, w)`` (one fundamental domain in x)."""
        return cls.from_box(0.0, 1.0, -half_width, half_width, level)

    # ---- views
    @property
    def area(self) -> float:
        return len(self.cells) * 4.0 ** -self.level

    def outer(self) -> "RegionCover":
        return RegionCover.from_cells(self.cells, self.level)

    def witnesses(self, density: int = DEFAULT_DENSITY) -> "RegionCover":
        """``density x density`` midpoint samples per cell (exact dyadic rationals)."""
        h = 2.0 ** -self.level
        off = (np.arange(density) + 0.5) / density
        ox, oy = np.meshgrid(off, off, indexing="ij")
        ox, oy = ox.ravel(), oy.ravel()
        xs = ((self.cells[:, 0:1] + ox) * h).ravel()
        ys = ((self.cells[:, 1:2] + oy) * h).ravel()
        src = np.column_stack([xs, ys])
        fl = np.floor(src)
        origin = np.repeat(np.arange(len(self.cells)), density * density)
        return RegionCover(INNER, self.level, self.cells, 0, frac=src - fl,
                           shift=fl.astype(np.int64), source=src, origin=origin, density=density)

    @property
    def lifts(self) -> np.ndarray:
        """Lift coordinates ``shift + frac`` (float; fine while ``|shift| < 2**52``)."""
        return self.shift.astype(float) + self.frac

    def contains_source(self, pts) -> np.ndarray:
        """Membership of plane points in the source region (half-open cells)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = np.floor(pts * 2 ** self.level).astype(np.int64)
        keys = set(map(tuple, self.cells.tolist()))
        return np.array([tuple(c) in keys for c in idx.tolist()], dtype=bool)


# ------------------------------------------------------------------ iteration


def _lift_chunks(f: TorusEndomorphism, frac, shift, steps):
    kern = _backend.kernels
    n = len(frac)

    def work(r):
        return kern.lift_iterate(f.a_flat, f.ai_flat, *f.kernel_args(), frac[r, 0], frac[r, 1],
                                 shift[r, 0], shift[r, 1], steps)

    parts = _backend.parallel_map(work, [slice(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)])
    if not parts:
        return frac.copy(), shift.copy()
    fx = np.concatenate([p[0] for p in parts])
    fy = np.concatenate([p[1] for p in parts])
    sx = np.concatenate([p[2] for p in parts])
    sy = np.concatenate([p[3] for p in parts])
    return np.column_stack([fx, fy]), np.column_stack([sx, sy])


def _shift_growth(f: TorusEndomorphism) -> tuple[int, int]:
    A = f.linear_part
    norm = max(abs(A.a) + abs(A.b), abs(A.c) + abs(A.d))
    return norm, norm + math.ceil(sup_displacement_bound(f)) + 1


def _snap(boxes: np.ndarray, level: int, budget: int) -> np.ndarray:
    """Dyadic cells meeting any box (outward rounding keeps the cover a superset)."""
    s = 2 ** level
    i0 = np.floor(boxes[:, 0] * s).astype(np.int64)
    i1 = np.ceil(boxes[:, 1] * s).astype(np.int64)
    j0 = np.floor(boxes[:, 2] * s).astype(np.int64)
    j1 = np.ceil(boxes[:, 3] * s).astype(np.int64)
    total = int(np.sum((i1 - i0) * (j1 - j0)))
    if total > budget:
        raise CellBlowup(f"outer cover needs {total} cells at level {level} (budget {budget})")
    out = [np.stack(np.meshgrid(np.arange(a, b), np.arange(c, d), indexing="ij"), -1).reshape(-1, 2)
           for a, b, c, d in zip(i0, i1, j0, j1)]
    return np.unique(np.concatenate(out), axis=0)


def _box_step(f: TorusEndomorphism, boxes: np.ndarray, S: np.ndarray) -> np.ndarray:
    c = np.column_stack([(boxes[:, 0] + boxes[:, 1]) / 2, (boxes[:, 2] + boxes[:, 3]) / 2])
    h = np.column_stack([(boxes[:, 1] - boxes[:, 0]) / 2, (boxes[:, 3] - boxes[:, 2]) / 2])
    kern = _backend.kernels
    dx, dy = kern.displacement(*f.kernel_args(), c[:, 0], c[:, 1])
    img = c @ f.A.T + np.column_stack([dx, dy])
    # mean value theorem, entrywise: |f_i(x) - f_i(c)| <= sum_j S_ij |x_j - c_j|
    r = h @ S.T + BOX_GUARD * (1.0 + np.abs(img))
    return np.column_stack([img[:, 0] - r[:, 0], img[:, 0] + r[:, 0],
                            img[:, 1] - r[:, 1], img[:, 1] + r[:, 1]])


def iterate_region(f: TorusEndomorphism, U: RegionCover, n: int, refine_level: int | None = None,
                   budget: int = 2_000_000) -> RegionCover:
    """``n`` further forward steps of a cover or witness set.

    For outer covers ``refine_level`` re-snaps the boxes to dyadic cells
    after every step (tighter, but may raise :class:`CellBlowup`).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return U
    if U.kind == INNER:
        frac, shift = U.frac, U.shift
        norm, add = _shift_growth(f)
        for _ in range(n):
            big = int(np.abs(shift).max()) if shift.size else 0
            if big * norm + add >= _INT_LIMIT:
                raise LiftOverflow(f"lift translation would exceed int64 after step {U.n}")
            frac, shift = _lift_chunks(f, frac, shift, 1)
        return replace(U, n=U.n + n, frac=frac, shift=shift)
    S, _ = derivative_bounds(f)
    boxes = U.boxes
    for step in range(n):
        if refine_level is not None and (step > 0 or U.n > 0):
            cells = _snap(boxes, refine_level, budget)
            boxes = RegionCover.from_cells(cells, refine_level).boxes
        boxes = _box_step(f, boxes, S)
    return replace(U, n=U.n + n, boxes=boxes)


def sandwich_violations(inner: RegionCover, outer: RegionCover, tol: float = 1e-9) -> int:
    """Number of inner witnesses lying outside every outer box."""
    pts = inner.lifts
    b = outer.boxes
    if len(b) == len(outer.cells) and inner.origin is not None:
        own = b[inner.origin]  # each witness stays in its own cell's box
        inside = ((pts[:, 0] >= own[:, 0] - tol) & (pts[:, 0] <= own[:, 1] + tol)
                  & (pts[:, 1] >= own[:, 2] - tol) & (pts[:, 1] <= own[:, 3] + tol))
        return int((~inside).sum())
    bad = 0
    for p in pts:
        if not np.any((p[0] >= b[:, 0] - tol) & (p[0] <= b[:, 1] + tol)
                      & (p[1] >= b[:, 2] - tol) & (p[1] <= b[:, 3] + tol)):
            bad += 1
    return bad


# ------------------------------------------------------------------ essential pairs


@dataclass(frozen=True)
class EssentialityReport:
    n: int
    e1_pair: tuple[tuple[float, float], tuple[float, float]]
    e2_pair: tuple[tuple[float, float], tuple[float, float]]
    multiples: tuple[int, int]
    residuals: tuple[float, float]
    method: str = "direct"
    samples: int = 0

    def to_dict(self) -> dict:
        return {"n": self.n, "e1_pair": [list(p) for p in self.e1_pair],
                "e2_pair": [list(p) for p in self.e2_pair], "multiples": list(self.multiples),
                "residuals": list(self.residuals), "method": self.method, "samples": self.samples}


def relative_image(f: TorusEndomorphism, p, q, n: int, jac: bool = False):
    """``f~^n(q) - f~^n(p)`` for rows of ``p, q`` without forming large lifts.

    Uses ``d_{m+1} = A d_m + D(p_m + d_m) - D(p_m)`` along the torus orbit
    of ``p``.  With ``jac=True`` also returns ``D(f^n)`` at ``q``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    d = np.atleast_2d(np.asarray(q, dtype=float)) - p
    pm = np.mod(p, 1.0)
    J = np.broadcast_to(np.eye(2), d.shape[:1] + (2, 2)).copy() if jac else None
    field_ = f.displacement
    for _ in range(n):
        Dp = field_(pm)
        if jac:
            J = eval_derivative(f, pm + d) @ J
        d = d @ f.A.T + field_(pm + d) - Dp
        pm = np.mod(pm @ f.A.T + Dp, 1.0)
    return (d, J) if jac else d


def _polish(f, p, q, K, n, iters: int = 40):
    """Newton on ``f~^n(q) - f~^n(p) = K`` in ``q``; vectorized over rows."""
    q = q.copy()
    for _ in range(iters):
        d, J = relative_image(f, p, q, n, jac=True)
        F = d - K
        if np.max(np.abs(F)) <= 1e-13:
            break
        try:
            step = np.linalg.solve(J, F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        q = q - step
    res = np.max(np.abs(relative_image(f, p, q, n) - K), axis=1)
    return q, res


def _axis_type(K: np.ndarray) -> np.ndarray:
    """0 for nonzero multiples of e1, 1 for e2, -1 otherwise."""
    t = np.full(len(K), -1)
    t[(K[:, 1] == 0) & (K[:, 0] != 0)] = 0
    t[(K[:, 0] == 0) & (K[:, 1] != 0)] = 1
    return t


def _best_polished(f, U, W, ia, ib, K, n, tol):
    """Polish candidate pairs ``(ia, ib)`` and keep the best verified one."""
    p = W.source[ia]
    q, res = _polish(f, p, W.source[ib], K.astype(float), n)
    ok = np.isfinite(res) & (res <= tol) & U.contains_source(q) & np.all(np.isfinite(q), axis=1)
    if not ok.any():
        return None
    idx = np.nonzero(ok)[0]
    order = sorted(idx, key=lambda k: (int(np.abs(K[k]).sum()), float(res[k]), int(ia[k]), int(ib[k])))
    k = order[0]
    return (tuple(map(float, p[k])), tuple(map(float, q[k]))), int(K[k].sum()), float(res[k])


def _direct_candidates(W: RegionCover, max_per_type: int):
    frac = W.frac
    N = len(frac)
    # about ten neighbours per witness inside the occupied part of the torus
    occ = np.unique(np.minimum(np.floor(frac * 64).astype(np.int64), 63) @ np.array([64, 1])).size
    rho = min(0.05, 3.0 * math.sqrt(occ / 4096 / max(N, 1)))
    tree = cKDTree(np.clip(frac, 0.0, np.nextafter(1.0, 0.0)), boxsize=1.0)
    pairs = tree.query_pairs(rho, output_type="ndarray")
    out = {0: None, 1: None}
    if len(pairs) == 0:
        return out
    L = W.lifts
    delta = L[pairs[:, 1]] - L[pairs[:, 0]]
    K = np.rint(delta).astype(np.int64)
    err = np.max(np.abs(delta - K), axis=1)
    kind = _axis_type(K)
    for t in (0, 1):
        sel = np.nonzero(kind == t)[0]
        if sel.size:
            size = np.abs(K[sel]).sum(axis=1)
            sel = sel[np.lexsort((pairs[sel, 1], pairs[sel, 0], err[sel], size))][:max_per_type]
            out[t] = (pairs[sel, 0], pairs[sel, 1], K[sel])
    return out


def _blichfeldt_candidates(W: RegionCover, max_cells: int = 200_000):
    """Row/column pairs from Blichfeldt + pigeonhole on the occupied lift cells.

    The occupied cells approximate the image from the witnesses; they are not a
    guaranteed inner set, so every pair is re-polished and re-verified.
    """
    L = W.lifts
    out = {0: None, 1: None}
    tree = cKDTree(L)
    for M in (8, 4, 2, 1):
        cells = np.unique(np.floor(L * M).astype(np.int64), axis=0)
        if len(cells) > max_cells:
            continue
        lo = cells.min(axis=0) / M
        hi = (cells.max(axis=0) + 1) / M
        ell = int(math.floor(float(np.max(hi - lo)))) + 1
        if Fraction(len(cells), M * M) <= ell:
            continue
        res = blichfeldt_translate(CellSet.from_cells(cells.tolist(), Fraction(1, M)), ell)
        z = np.array([[float(a), float(b)] for a, b in res.points])
        ints = [(int(a + res.translation[0]), int(b + res.translation[1])) for a, b in res.points]
        base = np.min(np.array(ints), axis=0) - 1
        shifted = [(x - int(base[0]), y - int(base[1])) for x, y in ints]
        row, col = pigeonhole_pairs(shifted, ell)
        pos = {s: i for i, s in enumerate(shifted)}
        _, nearest = tree.query(z)
        for t, (a, b) in ((0, row), (1, col)):
            ia, ib = pos[a], pos[b]
            K = np.array([[b[0] - a[0], b[1] - a[1]]], dtype=np.int64)
            out[t] = (np.array([nearest[ia]]), np.array([nearest[ib]]), K)
        return out
    return out


def doubly_essential_witness(f: TorusEndomorphism, U: RegionCover, n_max: int = 20,
                             density: int | None = None, method: str = "direct",
                             tol: float = DISPLACEMENT_TOL, max_candidates: int = 32) -> EssentialityReport:
    """Smallest ``n <= n_max`` whose witness image holds an e1- and an e2-displaced pair.

    Pairs are polished by Newton so that ``f~^n(q) - f~^n(p)`` equals the
    integer vector exactly up to ``tol``; ``p`` and ``q`` are points of ``U``.
    The Blichfeldt route needs the witnesses to fill the image, so its
    default density is higher.
    """
    if method not in ("direct", "blichfeldt"):
        raise ValueError(f"unknown method {method!r}")
    if density is None:
        density = DEFAULT_DENSITY if method == "direct" else BLICHFELDT_DENSITY
    W = U.witnesses(density) if U.kind != INNER else U
    for n in range(n_max + 1):
        if n:
            W = iterate_region(f, W, 1)
        cands = (_direct_candidates(W, max_candidates) if method == "direct"
                 else _blichfeldt_candidates(W))
        found = {}
        for t in (0, 1):
            if cands[t] is not None:
                found[t] = _best_polished(f, U, W, *cands[t], n, tol)
        if found.get(0) and found.get(1):
            (p1, k1, r1), (p2, k2, r2) = found[0], found[1]
            return EssentialityReport(n, p1, p2, (k1, k2), (r1, r2), method, len(W.frac))
    raise NotFoundWithin(n_max, "doubly essential witness")


def verify_essential(f: TorusEndomorphism, rep: EssentialityReport, tol: float = DISPLACEMENT_TOL) -> bool:
    """Recompute both displacements and round them to the claimed lattice vectors."""
    for (p, q), axis, k in ((rep.e1_pair, 0, rep.multiples[0]), (rep.e2_pair, 1, rep.multiples[1])):
        d = relative_image(f, p, q, rep.n)[0]
        K = np.rint(d)
        target = np.zeros(2)
        target[axis] = k
        if k == 0 or not np.array_equal(K, target) or np.max(np.abs(d - K)) > tol:
            return False
    return True


@dataclass(frozen=True)
class IterateBound:
    N: int
    lhs: float  # 2 (1 + kappa) ||A^N||_2 + 2 kappa
    rhs: float  # lam_vol^N * Leb(B)
    log_lhs: float
    log_rhs: float

    def to_dict(self) -> dict:
        return {"N": self.N, "lhs": self.lhs, "rhs": self.rhs,
                "log_lhs": self.log_lhs, "log_rhs": self.log_rhs}


def essential_iterate_bound(kappa: float, leb_B: float, A: IntMat2, lam_vol: float,
                            n_max: int = 1_000_000) -> IterateBound:
    """Smallest ``N`` with ``2 (1 + kappa) ||A^N||_2 + 2 kappa < lam_vol^N Leb(B)``.

    Compared in log space with exact integer powers of ``A``.
    """
    if leb_B <= 0:
        raise PreconditionViolated("Leb(B) must be positive")
    rho = float(np.max(np.abs(np.linalg.eigvals(A.to_array()))))
    if lam_vol <= rho:
        raise NoFiniteN(f"lambda_vol = {lam_vol} does not exceed the spectral radius {rho}")
    log_lam, log_leb = math.log(lam_vol), math.log(leb_B)
    log_2k = math.log(2 * kappa) if kappa > 0 else -math.inf
    P = IntMat2.identity()
    for N in range(1, n_max + 1):
        P = P @ A
        log_lhs = float(np.logaddexp(math.log(2 * (1 + kappa)) + log_spectral_norm(P), log_2k))
        log_rhs = N * log_lam + log_leb
        if log_lhs < log_rhs:
            return IterateBound(N, _exp(log_lhs), _exp(log_rhs), log_lhs, log_rhs)
    raise NoFiniteN(f"no N <= {n_max}")


def _exp(v: float) -> float:
    return math.exp(v) if v < 700 else math.inf


# ------------------------------------------------------------------ covering


@dataclass(frozen=True)
class CoveringResult:
    n: int
    resolution: int
    density: int
    samples: int

    def to_dict(self) -> dict:
        return {"n": self.n, "resolution": self.resolution, "density": self.density,
                "samples": self.samples}


def _coverage(frac: np.ndarray, m: int) -> int:
    idx = np.minimum(np.floor(frac * m).astype(np.int64), m - 1)
    return int(np.unique(idx[:, 0] * m + idx[:, 1]).size)


def covering_witness(f: TorusEndomorphism, U: RegionCover, m: int = 32, n_max: int = 25,
                     density: int = DEFAULT_DENSITY, max_density: int = 256,
                     max_samples: int = MAX_SAMPLES) -> CoveringResult:
    """Smallest ``n <= n_max`` whose witness image meets all ``m*m`` torus cells.

    The sampling density doubles after each failed sweep while it stays
    within ``max_density`` and the sample count within ``max_samples``.  Failure raises :class:`NotFoundWithin`; its ``best``
    attribute holds the largest covered fraction seen.
    """
    kern = _backend.kernels
    best = 0.0
    d = density
    while True:
        W = U.witnesses(d)
        pts = W.frac
        for n in range(n_max + 1):
            if n:
                pts = _torus_chunks(f, kern, pts)
            hit = _coverage(pts, m)
            best = max(best, hit / (m * m))
            if hit == m * m:
                return CoveringResult(n, m, d, len(pts))
        if 2 * d > max_density or 4 * len(pts) > max_samples:
            break
        d *= 2
    err = NotFoundWithin(n_max, f"covering of the {m}x{m} grid")
    err.best = best
    raise err


def _torus_chunks(f, kern, pts):
    n = len(pts)

    def work(r):
        return np.column_stack(kern.torus_iterate(f.a_flat, *f.kernel_args(), pts[r, 0], pts[r, 1], 1))

    return np.concatenate(_backend.parallel_map(work, [slice(s, min(s + CHUNK, n))
                                                       for s in range(0, n, CHUNK)]))


# ------------------------------------------------------------------ export

CSV_COLUMNS = ("n", "x", "y", "lift_i", "lift_j")


def witness_rows(W: RegionCover):
    for (x, y), (i, j) in zip(W.frac.tolist(), W.shift.tolist()):
        yield (W.n, repr(x), repr(y), i, j)


def write_witness_csv(path, sets) -> None:
    """Write one or more witness sets with columns ``n, x, y, lift_i, lift_j``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for W in sets:
            w.writerows(witness_rows(W))
