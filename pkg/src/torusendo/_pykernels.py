"""Pure numpy implementation of the numerical kernels.

Mirrors ``_ckernels.pyx`` function for function.  Term tables are packed as
parallel arrays ``comp`` (0 or 1), ``coeff``, ``kind`` (0 = sin, 1 = cos),
``k1``, ``k2``; ``a`` is the linear part as four floats (row major) and
``ai`` the same as int64.
"""
import numpy as np

TWO_PI = 2.0 * np.pi


def displacement(comp, coeff, kind, k1, k2, xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    out = [np.zeros_like(xs), np.zeros_like(xs)]
    for t in range(len(coeff)):
        th = TWO_PI * (k1[t] * xs + k2[t] * ys)
        out[comp[t]] += coeff[t] * (np.cos(th) if kind[t] else np.sin(th))
    return out[0], out[1]


def jacobian(a, comp, coeff, kind, k1, k2, xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    d = [np.full_like(xs, a[0]), np.full_like(xs, a[1]),
         np.full_like(xs, a[2]), np.full_like(xs, a[3])]
    for t in range(len(coeff)):
        th = TWO_PI * (k1[t] * xs + k2[t] * ys)
        g = -np.sin(th) if kind[t] else np.cos(th)
        g = coeff[t] * TWO_PI * g
        r = 2 * comp[t]
        if k1[t]:
            d[r] += k1[t] * g
        if k2[t]:
            d[r + 1] += k2[t] * g
    return d[0], d[1], d[2], d[3]


def _reduce(u):
    fl = np.floor(u)
    fr = u - fl
    wrap = fr >= 1.0
    if wrap.any():
        fr[wrap] -= 1.0
        fl[wrap] += 1.0
    return fr, fl


def torus_iterate(a, comp, coeff, kind, k1, k2, xs, ys, n):
    x = np.array(xs, dtype=np.float64)
    y = np.array(ys, dtype=np.float64)
    for _ in range(n):
        dx, dy = displacement(comp, coeff, kind, k1, k2, x, y)
        ux = a[0] * x + a[1] * y + dx
        uy = a[2] * x + a[3] * y + dy
        x, _ = _reduce(ux)
        y, _ = _reduce(uy)
    return x, y


def lift_iterate(a, ai, comp, coeff, kind, k1, k2, fx, fy, sx, sy, n):
    x = np.array(fx, dtype=np.float64)
    y = np.array(fy, dtype=np.float64)
    sx = np.array(sx, dtype=np.int64)
    sy = np.array(sy, dtype=np.int64)
    for _ in range(n):
        dx, dy = displacement(comp, coeff, kind, k1, k2, x, y)
        ux = a[0] * x + a[1] * y + dx
        uy = a[2] * x + a[3] * y + dy
        x, flx = _reduce(ux)
        y, fly = _reduce(uy)
        sx, sy = (ai[0] * sx + ai[1] * sy + flx.astype(np.int64),
                  ai[2] * sx + ai[3] * sy + fly.astype(np.int64))
    return x, y, sx, sy


def relative_survival(a, comp, coeff, kind, k1, k2, px, py, dpx, dpy, dx, dy, r):
    """Track ``d_m = f^m(p + d_0) - f^m(p)`` on the lift while ``|d_m|_inf < r``.

    ``px, py`` hold the torus orbit of ``p`` for ``m = 0..N`` and ``dpx, dpy``
    the displacement field along it.  Returns ``(steps, dx, dy)``; ``steps``
    is the largest ``m <= N`` with ``|d_0|..|d_m| < r`` (``-1`` if ``d_0``
    already fails) and ``dx, dy`` the last displacement inside the ball.
    """
    dx = np.array(dx, dtype=np.float64)
    dy = np.array(dy, dtype=np.float64)
    N = len(px) - 1
    steps = np.full(dx.shape, -1, dtype=np.int64)
    alive = np.maximum(np.abs(dx), np.abs(dy)) < r
    idx = np.nonzero(alive)[0]
    steps[idx] = 0
    cx, cy = dx[idx], dy[idx]
    for m in range(N):
        if idx.size == 0:
            break
        qx, qy = displacement(comp, coeff, kind, k1, k2, px[m] + cx, py[m] + cy)
        nx = a[0] * cx + a[1] * cy + qx - dpx[m]
        ny = a[2] * cx + a[3] * cy + qy - dpy[m]
        ok = np.maximum(np.abs(nx), np.abs(ny)) < r
        dx[idx[ok]] = nx[ok]
        dy[idx[ok]] = ny[ok]
        steps[idx[ok]] = m + 1
        idx, cx, cy = idx[ok], nx[ok], ny[ok]
    return steps, dx, dy
