"""Grid certificates for cone-field invariance/expansion and strong volume expansion.

A check evaluates the derivative at the centre of every cell of an ``m x m``
grid and subtracts a Lipschitz slack that covers every other point of the
cell.  A ``Certified`` verdict is therefore a proof of the pointwise
condition on the whole torus (up to floating-point rounding, which is
covered by a small additive guard).
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .errors import NoIntegerEigenvalues
from .intlinalg import integer_eigenvalues
from .maps import TorusEndomorphism, derivative_bounds, lipschitz_bounds, sup_step_lipschitz

CERTIFIED, FAILED, INCONCLUSIVE = "Certified", "Failed", "Inconclusive"
ROUND_GUARD = 1e-12
ROWS_PER_CHUNK = 64


@dataclass(frozen=True)
class ConeSpec:
    """Constant cone ``|v2| <= s |v1|`` (horizontal) or ``|v1| <= s |v2|`` (vertical)."""

    slope: float = 1.0
    orientation: str = "horizontal"

    def __post_init__(self):
        if not (self.slope > 0 and math.isfinite(self.slope)):
            raise ValueError("cone slope must be positive and finite")
        if self.orientation not in ("horizontal", "vertical"):
            raise ValueError("orientation must be 'horizontal' or 'vertical'")

    def contains(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        a, b = (v[..., 0], v[..., 1]) if self.orientation == "horizontal" else (v[..., 1], v[..., 0])
        return np.abs(b) <= self.slope * np.abs(a)


@dataclass(frozen=True)
class GridSpec:
    m: int = 512
    iterate: int = 1
    lam: float = 2.0

    def __post_init__(self):
        if self.m < 2 or self.iterate < 1 or not self.lam > 1:
            raise ValueError("need m >= 2, iterate >= 1, lam > 1")


@dataclass
class Certificate:
    condition: str
    grid: int
    verdict: str
    worst_margin: float
    slack: float
    certified_margin: float
    witness: tuple | None = None
    params: dict = field(default_factory=dict)
    grids_tried: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("elapsed")
        return d


# ------------------------------------------------------------ 2x2 helpers


def _swap(M):
    """Conjugate by the coordinate swap (maps a vertical cone to a horizontal one)."""
    return M[..., 1, 1], M[..., 1, 0], M[..., 0, 1], M[..., 0, 0]


def _entries(M, cone: ConeSpec):
    M = np.asarray(M, dtype=float)
    if cone.orientation == "vertical":
        return _swap(M)
    return M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]


def _min_expansion_entries(m00, m01, m10, m11, s):
    q00 = m00 * m00 + m10 * m10
    q01 = m00 * m01 + m10 * m11
    q11 = m01 * m01 + m11 * m11
    n2 = 1.0 + s * s
    r_plus = (q00 + 2 * s * q01 + s * s * q11) / n2
    r_minus = (q00 - 2 * s * q01 + s * s * q11) / n2
    best = np.minimum(r_plus, r_minus)
    half = 0.5 * (q00 - q11)
    lam_min = 0.5 * (q00 + q11) - np.hypot(half, q01)
    # eigenvector of the smaller eigenvalue; pick the better-conditioned formula
    ax, ay = q01, lam_min - q00
    bx, by = lam_min - q11, q01
    use_a = ax * ax + ay * ay >= bx * bx + by * by
    vx = np.where(use_a, ax, bx)
    vy = np.where(use_a, ay, by)
    degenerate = (vx == 0) & (vy == 0)  # Q is scalar
    inside = degenerate | (np.abs(vy) <= s * np.abs(vx))
    best = np.where(inside, np.minimum(best, lam_min), best)
    return np.sqrt(np.maximum(best, 0.0))


def min_expansion_on_cone(M, cone: ConeSpec = ConeSpec()):
    """Exact ``min |Mv| / |v|`` over the cone (scalar or batched over leading axes).

    The Rayleigh quotient of ``M^T M`` is extremal at its eigenvectors, so the
    minimum over the sector is attained on a boundary ray or at the
    least-expanded singular direction when it lies inside.
    """
    out = _min_expansion_entries(*_entries(M, cone), cone.slope)
    return float(out) if np.ndim(out) == 0 else out


def _spec_norm(m00, m01, m10, m11):
    q00 = m00 * m00 + m10 * m10
    q01 = m00 * m01 + m10 * m11
    q11 = m01 * m01 + m11 * m11
    return np.sqrt(0.5 * (q00 + q11) + np.hypot(0.5 * (q00 - q11), q01))


# ------------------------------------------------------------ grid machinery


def _centres(m, rows):
    i = np.arange(rows.start, rows.stop)
    j = np.arange(m)
    X, Y = np.meshgrid((i + 0.5) / m, (j + 0.5) / m, indexing="ij")
    return X.ravel(), Y.ravel()


def _run_chunks(m, work):
    chunks = [range(s, min(s + ROWS_PER_CHUNK, m)) for s in range(0, m, ROWS_PER_CHUNK)]
    return _backend.parallel_map(work, chunks)


def _orbit_derivatives(f, x, y, n):
    """Derivative entries at ``c_0 .. c_{n-1}`` along the torus orbit of each centre."""
    kern = _backend.kernels
    out = []
    for i in range(n):
        out.append(kern.jacobian(f.a_flat, *f.kernel_args(), x, y))
        if i + 1 < n:
            x, y = kern.torus_iterate(f.a_flat, *f.kernel_args(), x, y, 1)
    return out


def _reduce_stats(parts):
    """Combine per-chunk summaries in chunk order (result independent of scheduling)."""
    worst = min(p["worst"] for p in parts)
    slack = max(p["slack"] for p in parts)
    cert = min(p["cert"] for p in parts)
    n_fail = sum(p["n_fail"] for p in parts)
    n_inc = sum(p["n_inc"] for p in parts)
    witness = None
    fails = [p for p in parts if p["n_fail"]]
    if fails:
        w = min(fails, key=lambda p: p["fail_margin"])
        witness = w["fail_point"]
    extra = {}
    for key in ("min_lower",):
        if key in parts[0]:
            extra[key] = min(p[key] for p in parts)
    return worst, slack, cert, n_fail, n_inc, witness, extra


def _summarize(x, y, margin, slack, fail_mask, inc_mask, **extra):
    d = {"worst": float(margin.min()), "slack": float(slack.max()),
         "cert": float((margin - slack).min()), "n_fail": int(fail_mask.sum()),
         "n_inc": int(inc_mask.sum())}
    if d["n_fail"]:
        idx = np.nonzero(fail_mask)[0]
        k = idx[np.argmin(margin[idx])]
        d["fail_margin"] = float(margin[k])
        d["fail_point"] = (float(x[k]), float(y[k]))
    d.update(extra)
    return d


def _cone_chunk(f, cone, ell, lam, m, rows):
    x, y = _centres(m, rows)
    r0 = 0.5 / m
    S, L = derivative_bounds(f)
    lip_f = sup_step_lipschitz(f)
    lf = float(np.sqrt((L ** 2).sum()))  # |dDf|_2 <= |dDf|_F <= lf |dp|_inf
    derivs = _orbit_derivatives(f, x, y, ell)
    m00 = np.ones_like(x); m01 = np.zeros_like(x); m10 = np.zeros_like(x); m11 = np.ones_like(x)
    norm_exact = np.ones_like(x)
    norm_pert = np.ones_like(x)
    for i, (d00, d01, d10, d11) in enumerate(derivs):
        m00, m01, m10, m11 = (d00 * m00 + d01 * m10, d00 * m01 + d01 * m11,
                              d10 * m00 + d11 * m10, d10 * m01 + d11 * m11)
        nrm = _spec_norm(d00, d01, d10, d11)
        eta_i = lf * r0 * lip_f ** i
        norm_exact = norm_exact * nrm
        norm_pert = norm_pert * (nrm + eta_i)
    eta = norm_pert - norm_exact
    eta = eta + ROUND_GUARD * (1.0 + norm_exact)
    if cone.orientation == "vertical":
        m00, m01, m10, m11 = m11, m10, m01, m00
    s = cone.slope
    vnorm = math.sqrt(1 + s * s)
    e = eta * vnorm
    slope_m, slope_s, first = [], [], []
    robust_ok = np.ones_like(x, dtype=bool)
    for sgn in (1.0, -1.0):
        w1 = m00 + sgn * s * m01
        w2 = m10 + sgn * s * m11
        aw1 = np.abs(w1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sl = np.where(aw1 > 0, np.abs(w2) / aw1, np.inf)
            worst = np.where(aw1 > e, (np.abs(w2) + e) / (aw1 - e), np.inf)
        slope_m.append(s - sl)
        slope_s.append(worst - sl)
        robust_ok &= (aw1 > e) & (worst < s)
        first.append(w1)
    same_sign = np.sign(first[0]) == np.sign(first[1])
    minexp = _min_expansion_entries(m00, m01, m10, m11, s)
    exp_m = minexp - lam
    margin = np.minimum(np.minimum(slope_m[0], slope_m[1]), exp_m)
    slack = np.maximum(np.maximum(slope_s[0], slope_s[1]), eta)
    cell_ok = robust_ok & same_sign & (exp_m > eta)
    center_bad = (slope_m[0] <= 0) | (slope_m[1] <= 0) | ~same_sign | (exp_m <= 0)
    # sign flip has no numeric margin; report it as -inf so it dominates
    margin = np.where(same_sign, margin, -np.inf)
    cert_margin = np.minimum(
        np.minimum(slope_m[0] - slope_s[0], slope_m[1] - slope_s[1]), exp_m - eta)
    d = _summarize(x, y, margin, slack, center_bad, ~cell_ok & ~center_bad)
    d["cert"] = float(np.where(same_sign, cert_margin, -np.inf).min())
    return d


def _sve_chunk(f, n, thr, m, rows):
    x, y = _centres(m, rows)
    r0 = 0.5 / m
    _, lip_det = lipschitz_bounds(f)
    lip_f = sup_step_lipschitz(f)
    prod = np.ones_like(x)
    lower = np.ones_like(x)
    for i, (d00, d01, d10, d11) in enumerate(_orbit_derivatives(f, x, y, n)):
        a = np.abs(d00 * d11 - d01 * d10)
        delta = lip_det * r0 * lip_f ** i + ROUND_GUARD * (1.0 + a)
        prod = prod * a
        lower = lower * np.maximum(a - delta, 0.0)
    margin = prod - thr
    slack = prod - lower
    fail = margin <= 0
    inc = ~fail & (lower <= thr)
    return _summarize(x, y, margin, slack, fail, inc, min_lower=float(lower.min()))


def _certify(condition, chunk_fn, grid, max_grid, params):
    t0 = time.perf_counter()
    m = grid
    tried = []
    while True:
        parts = _run_chunks(m, lambda rows: chunk_fn(m, rows))
        worst, slack, cert, n_fail, n_inc, witness, extra = _reduce_stats(parts)
        tried.append(m)
        if n_fail:
            verdict = FAILED
        elif n_inc == 0:
            verdict = CERTIFIED
        else:
            verdict = INCONCLUSIVE
        if verdict != INCONCLUSIVE or 2 * m > max_grid:
            break
        m *= 2
    p = dict(params)
    p.update(extra)
    return Certificate(condition, m, verdict, worst, slack, cert, witness, p, tried,
                       time.perf_counter() - t0)


def certify_cone_invariance(f: TorusEndomorphism, cone: ConeSpec = ConeSpec(), grid: int = 512,
                            iterate: int = 1, lam: float = 2.0,
                            max_grid: int | None = 8192) -> Certificate:
    """Certify ``Df^l C ⊂ int C`` and ``|Df^l v| >= lam |v|`` for all ``v`` in ``C``.

    Both boundary rays of the cone must land strictly inside it on the same
    side, after widening the image by the propagated Lipschitz slack.
    """
    GridSpec(grid, iterate, lam)
    params = {"cone_slope": cone.slope, "orientation": cone.orientation,
              "iterate": iterate, "lambda": lam}
    return _certify("cone_invariance",
                    lambda m, rows: _cone_chunk(f, cone, iterate, lam, m, rows),
                    grid, max_grid or grid, params)


def volume_threshold(f: TorusEndomorphism, n: int = 1) -> int:
    eig = integer_eigenvalues(f.linear_part)
    if eig is None:
        raise NoIntegerEigenvalues(f"linear part {f.linear_part} has no integer eigenvalues")
    return abs(eig.lam1) ** n


def certify_strong_volume_expansion(f: TorusEndomorphism, grid: int = 512, n: int = 1,
                                    max_grid: int | None = 8192) -> Certificate:
    """Certify ``|det Df^n| > |lam1|^n`` everywhere (the constant is taken as 1)."""
    if n < 1:
        raise ValueError("iterate n must be >= 1")
    thr = volume_threshold(f, n)
    params = {"iterate": n, "threshold": thr}
    cert = _certify("strong_volume_expansion",
                    lambda m, rows: _sve_chunk(f, n, thr, m, rows),
                    grid, max_grid or grid, params)
    lower = cert.params.pop("min_lower", None)
    if lower is not None:
        cert.params["min_det_lower"] = lower
        cert.params["volume_rate"] = lower ** (1.0 / n) if lower > 0 else 0.0
    return cert


# ------------------------------------------------------------ pointwise conditions


def cone_condition_pointwise(f: TorusEndomorphism, pts, cone: ConeSpec = ConeSpec(),
                             iterate: int = 1, lam: float = 2.0) -> np.ndarray:
    """Raw margin of the cone condition at each point (positive means satisfied)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    m00 = np.ones_like(x); m01 = np.zeros_like(x); m10 = np.zeros_like(x); m11 = np.ones_like(x)
    for d00, d01, d10, d11 in _orbit_derivatives(f, x, y, iterate):
        m00, m01, m10, m11 = (d00 * m00 + d01 * m10, d00 * m01 + d01 * m11,
                              d10 * m00 + d11 * m10, d10 * m01 + d11 * m11)
    if cone.orientation == "vertical":
        m00, m01, m10, m11 = m11, m10, m01, m00
    s = cone.slope
    margins = []
    firsts = []
    for sgn in (1.0, -1.0):
        w1 = m00 + sgn * s * m01
        w2 = m10 + sgn * s * m11
        with np.errstate(divide="ignore"):
            margins.append(s - np.abs(w2) / np.abs(w1))
        firsts.append(w1)
    exp_m = _min_expansion_entries(m00, m01, m10, m11, s) - lam
    out = np.minimum(np.minimum(margins[0], margins[1]), exp_m)
    return np.where(np.sign(firsts[0]) == np.sign(firsts[1]), out, -np.inf)


def sve_condition_pointwise(f: TorusEndomorphism, pts, n: int = 1) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    thr = volume_threshold(f, n)
    prod = np.ones(len(pts))
    for d00, d01, d10, d11 in _orbit_derivatives(f, pts[:, 0], pts[:, 1], n):
        prod *= np.abs(d00 * d11 - d01 * d10)
    return prod - thr
