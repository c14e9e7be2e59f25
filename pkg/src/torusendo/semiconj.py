"""Semiconjugacy to the linear part, fibre estimates and the annulus/conjugacy test.

The semiconjugacy is evaluated through the telescoping series

    h(x) = x + sum_{m >= 0} A^{-(m+1)} D(f^m(x)),     D = f~ - A,

which equals ``A^-n f~^n(x)`` at truncation ``n`` but only needs the orbit on
the torus.  Norms are sup norms throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import _backend
from .errors import EigenvalueTieError, NoIntegerEigenvalues, NotExpanding
from .intlinalg import IntMat2, integer_eigenvalues, inverse_power_matrix, inverse_power_norms
from .maps import TorusEndomorphism, sup_displacement_bound

MAX_POWERS = 600
R_MIN = 0.05  # orbit radius used when kappa = 0


def is_expanding(A: IntMat2) -> bool:
    """Both eigenvalues of modulus > 1, decided exactly (Jury test on the reversed polynomial)."""
    det, tr = A.det, A.trace
    return abs(det) > 1 and (det - tr + 1) * det > 0 and (det + tr + 1) * det > 0


@dataclass
class SemiconjParams:
    kappa0: float
    kappa: float
    power_norms: list          # ||A^-m||_inf for m = 1..K
    tail: float                # bound on sum_{m > K} ||A^-m||_inf
    rho: float                 # ||A^-M||_inf < 1 used for the tail
    M: int

    def tail_from(self, n: int) -> float:
        """Upper bound on ``sum_{m >= n} ||A^-m||``."""
        K = len(self.power_norms)
        if n > K:
            return self.tail
        return math.fsum(self.power_norms[n - 1:]) + self.tail

    def depth_for(self, tol: float) -> int:
        """Smallest ``n`` with truncation error ``kappa0 * tail_from(n + 1) <= tol``."""
        if self.kappa0 == 0:
            return 0
        for n in range(len(self.power_norms) + 1):
            if self.kappa0 * self.tail_from(n + 1) <= tol:
                return n
        raise ValueError(f"tolerance {tol} below the representable tail")


def kappa_bound(f: TorusEndomorphism) -> SemiconjParams:
    """Rigorous ``kappa >= |h~ - id|_inf`` from the series above."""
    A = f.linear_part
    if not is_expanding(A):
        raise NotExpanding(f"linear part {A} is not expanding")
    kappa0 = sup_displacement_bound(f)
    norms = inverse_power_norms(A, MAX_POWERS)
    M = next((i + 1 for i, v in enumerate(norms) if v < 1.0), None)
    if M is None:
        raise NotExpanding("no power of A^-1 is a sup-norm contraction within the cutoff")
    K = next((i + 1 for i, v in enumerate(norms) if v < 1e-18 and i + 1 >= M), MAX_POWERS - M)
    K = min(K, MAX_POWERS - M)
    rho = norms[M - 1]
    # sum_{m>K} ||A^-m|| <= sum_{j=1..M} ||A^-(K+j)|| / (1 - rho)
    tail = math.fsum(norms[K:K + M]) / (1.0 - rho)
    total = math.fsum(norms[:K]) + tail
    return SemiconjParams(kappa0, kappa0 * total, norms[:K], tail, rho, M)


def _split(pts):
    pts = np.asarray(pts, dtype=float)
    shift = np.floor(pts)
    frac = pts - shift
    wrap = frac >= 1.0
    frac[wrap] -= 1.0
    shift[wrap] += 1.0
    return frac, shift


def _series(f: TorusEndomorphism, frac: np.ndarray, n: int) -> np.ndarray:
    """``sum_{m<n} A^-(m+1) D(x_m)`` along the torus orbit of ``frac``."""
    kern = _backend.kernels
    args = f.kernel_args()
    x, y = frac[:, 0].copy(), frac[:, 1].copy()
    total = np.zeros_like(frac)
    for m in range(n):
        dx, dy = kern.displacement(*args, x, y)
        Binv = inverse_power_matrix(f.linear_part, m + 1)
        total[:, 0] += Binv[0, 0] * dx + Binv[0, 1] * dy
        total[:, 1] += Binv[1, 0] * dx + Binv[1, 1] * dy
        if m + 1 < n:
            x, y = kern.torus_iterate(f.a_flat, *args, x, y, 1)
    return total


def semiconj_eval_split(f, frac, shift, tol, params=None):
    """``h~`` at lifted points given as exact ``shift + frac``."""
    params = params or kappa_bound(f)
    n = params.depth_for(tol)
    frac = np.atleast_2d(np.asarray(frac, dtype=float))
    shift = np.atleast_2d(np.asarray(shift, dtype=float))
    return shift + (frac + _series(f, frac, n)), n


def semiconj_eval_many(f: TorusEndomorphism, pts, tol: float = 1e-8, params=None):
    """Vectorised ``h~``; returns ``(values, n)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    frac, shift = _split(np.atleast_2d(pts))
    return semiconj_eval_split(f, frac, shift, tol, params)


def semiconj_eval(f: TorusEndomorphism, x, tol: float = 1e-8, params=None, dps: int | None = None):
    """``h_n(x) = A^-n f~^n(x)`` with ``n`` chosen so the truncation error is ``<= tol``.

    The bound covers truncation of the series.  With ``dps`` the orbit is run
    in ``mpmath`` at that many digits instead of double precision.
    """
    if dps is not None:
        return _semiconj_mp(f, x, tol, dps, params)
    vals, _ = semiconj_eval_many(f, np.asarray(x, dtype=float)[None, :], tol, params)
    return vals[0]


def _semiconj_mp(f, x, tol, dps, params=None):
    import mpmath as mp

    params = params or kappa_bound(f)
    n = params.depth_for(tol)
    with mp.workdps(dps):
        A = mp.matrix(f.linear_part.rows())
        Ainv = A ** -1
        terms = [(c, t) for c, comp in enumerate(f.displacement.components) for t in comp]

        def D(p):
            out = [mp.mpf(0), mp.mpf(0)]
            for c, t in terms:
                th = 2 * mp.pi * (t.k[0] * p[0] + t.k[1] * p[1])
                out[c] += mp.mpf(t.coeff) * (mp.cos(th) if t.kind == "cos" else mp.sin(th))
            return mp.matrix(out)

        p = mp.matrix([mp.mpf(float(x[0])), mp.mpf(float(x[1]))])
        total = mp.matrix([0, 0])
        B = mp.eye(2)
        cur = mp.matrix([p[0] - mp.floor(p[0]), p[1] - mp.floor(p[1])])
        for _ in range(n):
            B = B * Ainv
            d = D(cur)
            total += B * d
            nxt = A * cur + d
            cur = mp.matrix([nxt[0] - mp.floor(nxt[0]), nxt[1] - mp.floor(nxt[1])])
        h = p + total
        return np.array([float(h[0]), float(h[1])])


def semiconj_defect(f: TorusEndomorphism, grid: int = 128, tol: float = 1e-8, params=None):
    """``max |h(f(p)) - A h(p)|_inf`` over the ``grid x grid`` lattice points.

    Returns ``(defect, bound)`` with ``bound = (|A|_inf + 1) tol``.
    """
    params = params or kappa_bound(f)
    i = np.arange(grid)
    X, Y = np.meshgrid(i / grid, i / grid, indexing="ij")
    p = np.stack([X.ravel(), Y.ravel()], axis=1)
    h_p, _ = semiconj_eval_many(f, p, tol, params)
    # f~(p) through the same kernel the series uses, so both orbits share bits
    fx, fy, sx, sy = _backend.kernels.lift_iterate(
        f.a_flat, f.ai_flat, *f.kernel_args(), p[:, 0], p[:, 1],
        np.zeros(len(p), dtype=np.int64), np.zeros(len(p), dtype=np.int64), 1)
    h_fp, _ = semiconj_eval_split(f, np.stack([fx, fy], 1), np.stack([sx, sy], 1).astype(float),
                                  tol, params)
    Ah = h_p @ f.A.T
    defect = float(np.max(np.abs(h_fp - Ah)))
    norm_A = float(np.abs(f.A).sum(axis=1).max())
    return defect, (norm_A + 1.0) * tol


# ------------------------------------------------------------------ fibres


@dataclass
class FiberEstimate:
    base: tuple
    radius: float
    depth: int
    offsets: np.ndarray = field(repr=False)   # witness - base, exact inputs of the orbit test
    diameter: float = 0.0
    direction: tuple = (0.0, 0.0)

    @property
    def witnesses(self) -> np.ndarray:
        return np.asarray(self.base) + self.offsets

    def to_dict(self) -> dict:
        return {"base": list(self.base), "radius": self.radius, "depth": self.depth,
                "diameter": self.diameter, "direction": list(self.direction),
                "n_witnesses": int(len(self.offsets))}


def _base_orbit(f, p, N):
    kern = _backend.kernels
    args = f.kernel_args()
    x, y = np.array([p[0]]), np.array([p[1]])
    px, py = np.empty(N + 1), np.empty(N + 1)
    for m in range(N + 1):
        px[m], py[m] = x[0], y[0]
        if m < N:
            x, y = kern.torus_iterate(f.a_flat, *args, x, y, 1)
    dpx, dpy = kern.displacement(*args, px, py)
    return px, py, dpx, dpy


def orbit_survival(f, p, offsets, r, N, orbit=None):
    """Steps survived by ``p + offset`` within sup-distance ``r`` of ``p``'s lifted orbit."""
    px, py, dpx, dpy = orbit if orbit is not None else _base_orbit(f, p, N)
    offsets = np.atleast_2d(offsets)
    steps, _, _ = _backend.kernels.relative_survival(
        f.a_flat, *f.kernel_args(), px, py, dpx, dpy,
        offsets[:, 0].copy(), offsets[:, 1].copy(), float(r))
    return steps


def _projective(u):
    u = np.asarray(u, dtype=float)
    n = np.hypot(*u)
    if n == 0:
        return (0.0, 0.0)
    u = u / n
    if u[0] < 0 or (u[0] == 0 and u[1] < 0):
        u = -u
    return (float(u[0]), float(u[1]))


def default_depth(params: SemiconjParams, search_radius: float, delta: float) -> int:
    """Smallest ``N`` with ``|A^-N| * 2 * search_radius < 0.01 * delta``."""
    for N, v in enumerate(params.power_norms, start=1):
        if v * 2 * search_radius < 0.01 * delta:
            return N
    return len(params.power_norms)


def estimate_fiber(f: TorusEndomorphism, p, r: float | None = None, N: int | None = None,
                   search_radius: float | None = None, samples: int = 400, seed: int = 0,
                   params: SemiconjParams | None = None, delta: float = 1e-3) -> FiberEstimate:
    """Lower estimate of ``diam h^-1(h(p))``.

    Candidates on a cross (axes and diagonals) and in a disc around ``p`` are
    kept when their lifted orbit stays within ``r`` of ``p``'s for ``N``
    steps; a second pass samples densely along the best surviving direction.
    """
    params = params or kappa_bound(f)
    kappa = params.kappa
    if r is None:
        r = 3 * kappa if kappa > 0 else R_MIN
    if kappa > 0 and r <= 2 * kappa:
        raise ValueError(f"r = {r} must exceed 2 kappa = {2 * kappa}")
    R = search_radius if search_radius is not None else (2 * kappa if kappa > 0 else r / 2)
    N = N if N is not None else default_depth(params, R, delta)
    p = tuple(float(c) for c in np.mod(np.asarray(p, dtype=float), 1.0))
    orbit = _base_orbit(f, p, N)
    rng = np.random.default_rng(seed)

    t = np.linspace(-R, R, 2 * (samples // 8) + 1)
    t = t[t != 0]
    dirs = np.array([(1, 0), (0, 1), (1, 1), (1, -1)], dtype=float)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    cross = (t[None, :, None] * dirs[:, None, :]).reshape(-1, 2)
    rad = R * np.sqrt(rng.random(samples))
    ang = 2 * np.pi * rng.random(samples)
    disc = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    cand = np.concatenate([cross, disc])
    keep = cand[orbit_survival(f, p, cand, r, N, orbit) == N]
    if len(keep):
        u = keep[np.argmax(np.hypot(keep[:, 0], keep[:, 1]))]
        u = u / np.hypot(*u)
        tt = np.linspace(-R, R, 2 * samples + 1)
        line = tt[tt != 0][:, None] * u[None, :]
        more = line[orbit_survival(f, p, line, r, N, orbit) == N]
        keep = np.concatenate([keep, more])
    offsets = np.concatenate([np.zeros((1, 2)), keep])
    diameter, direction = 0.0, (0.0, 0.0)
    if len(offsets) > 1:
        D = squareform(pdist(offsets))
        i, j = np.unravel_index(np.argmax(D), D.shape)
        diameter = float(D[i, j])
        direction = _projective(offsets[j] - offsets[i])
    return FiberEstimate(p, float(r), int(N), offsets, diameter, direction)


def verify_fiber(f: TorusEndomorphism, est: FiberEstimate) -> bool:
    steps = orbit_survival(f, est.base, est.offsets, est.radius, est.depth)
    return bool(np.all(steps == est.depth))


@dataclass
class DichotomyVerdict:
    """Numeric evidence only: finite depth cannot prove a fibre is a point."""

    kind: str                 # "ConjugacyEvidence" | "AnnulusCandidate"
    delta: float
    depth: int
    point: tuple | None = None
    diameter: float = 0.0
    direction: tuple | None = None
    fibers: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "depth": self.depth,
                "point": list(self.point) if self.point else None, "diameter": self.diameter,
                "direction": list(self.direction) if self.direction else None,
                "evidence_only": True}


def dichotomy_test(f: TorusEndomorphism, grid: int = 8, r: float | None = None, N: int | None = None,
                   delta: float = 0.01, samples: int = 400, seed: int = 0) -> DichotomyVerdict:
    """Scan fibres on a grid: all small gives conjugacy evidence, else an annulus candidate.

    Assumes the caller has certified partial hyperbolicity.
    """
    eig = integer_eigenvalues(f.linear_part)
    if eig is None:
        raise NoIntegerEigenvalues(f"{f.linear_part} has no integer eigenvalues")
    if abs(eig.lam1) == abs(eig.lam2):
        raise EigenvalueTieError(f"|lam1| = |lam2| = {abs(eig.lam1)}")
    params = kappa_bound(f)
    fibers = []
    for i in range(grid):
        for j in range(grid):
            fibers.append(estimate_fiber(f, (i / grid, j / grid), r=r, N=N, samples=samples,
                                         seed=seed, params=params, delta=delta))
    best = max(fibers, key=lambda e: e.diameter)
    depth = best.depth
    if best.diameter <= delta:
        return DichotomyVerdict("ConjugacyEvidence", delta, depth, fibers=fibers)
    return DichotomyVerdict("AnnulusCandidate", delta, depth, best.base, best.diameter,
                            best.direction, fibers)
