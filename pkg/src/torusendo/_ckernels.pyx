# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contract as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, floor, fabs, M_PI

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64

cdef double TWO_PI = 2.0 * M_PI


cdef struct Terms:
    Py_ssize_t n
    const i64 *comp
    const f64 *coeff
    const i64 *kind
    const i64 *k1
    const i64 *k2


cdef inline void _disp(Terms *T, double x, double y, double *ox, double *oy) noexcept nogil:
    cdef Py_ssize_t t
    cdef double th, v
    ox[0] = 0.0
    oy[0] = 0.0
    for t in range(T.n):
        th = TWO_PI * (T.k1[t] * x + T.k2[t] * y)
        if T.kind[t]:
            v = T.coeff[t] * cos(th)
        else:
            v = T.coeff[t] * sin(th)
        if T.comp[t]:
            oy[0] += v
        else:
            ox[0] += v


cdef inline double _reduce(double u, double *fl) noexcept nogil:
    cdef double f = floor(u)
    cdef double r = u - f
    if r >= 1.0:
        r -= 1.0
        f += 1.0
    fl[0] = f
    return r


cdef Terms _pack(i64[::1] comp, f64[::1] coeff, i64[::1] kind, i64[::1] k1, i64[::1] k2):
    cdef Terms T
    T.n = coeff.shape[0]
    if T.n:
        T.comp = &comp[0]
        T.coeff = &coeff[0]
        T.kind = &kind[0]
        T.k1 = &k1[0]
        T.k2 = &k2[0]
    return T


def _ints(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def _floats(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def displacement(comp, coeff, kind, k1, k2, xs, ys):
    cdef f64[::1] x = _floats(xs).ravel()
    cdef f64[::1] y = _floats(ys).ravel()
    shape = np.shape(xs)
    cdef Terms T = _pack(_ints(comp), _floats(coeff), _ints(kind), _ints(k1), _ints(k2))
    ox = np.empty(x.shape[0])
    oy = np.empty(x.shape[0])
    cdef f64[::1] vx = ox
    cdef f64[::1] vy = oy
    cdef Py_ssize_t i
    with nogil:
        for i in range(x.shape[0]):
            _disp(&T, x[i], y[i], &vx[i], &vy[i])
    return ox.reshape(shape), oy.reshape(shape)


def jacobian(a, comp, coeff, kind, k1, k2, xs, ys):
    cdef f64[::1] x = _floats(xs).ravel()
    cdef f64[::1] y = _floats(ys).ravel()
    shape = np.shape(xs)
    cdef f64[::1] cc = _floats(coeff)
    cdef i64[::1] cp = _ints(comp), kd = _ints(kind), q1 = _ints(k1), q2 = _ints(k2)
    cdef double a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3]
    cdef Py_ssize_t n = x.shape[0], nt = cc.shape[0], i, t
    o = np.empty((4, n))
    cdef f64[:, ::1] d = o
    cdef double th, g, e0, e1, e2, e3
    with nogil:
        for i in range(n):
            e0 = a0; e1 = a1; e2 = a2; e3 = a3
            for t in range(nt):
                th = TWO_PI * (q1[t] * x[i] + q2[t] * y[i])
                if kd[t]:
                    g = -sin(th)
                else:
                    g = cos(th)
                g = cc[t] * TWO_PI * g
                if cp[t]:
                    e2 += q1[t] * g
                    e3 += q2[t] * g
                else:
                    e0 += q1[t] * g
                    e1 += q2[t] * g
            d[0, i] = e0; d[1, i] = e1; d[2, i] = e2; d[3, i] = e3
    return tuple(o[j].reshape(shape) for j in range(4))


def torus_iterate(a, comp, coeff, kind, k1, k2, xs, ys, int n):
    ox = _floats(xs).copy()
    oy = _floats(ys).copy()
    cdef f64[::1] x = ox.ravel()
    cdef f64[::1] y = oy.ravel()
    cdef Terms T = _pack(_ints(comp), _floats(coeff), _ints(kind), _ints(k1), _ints(k2))
    cdef double a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3]
    cdef double dx, dy, ux, uy, fl
    cdef Py_ssize_t i
    cdef int s
    with nogil:
        for i in range(x.shape[0]):
            for s in range(n):
                _disp(&T, x[i], y[i], &dx, &dy)
                ux = a0 * x[i] + a1 * y[i] + dx
                uy = a2 * x[i] + a3 * y[i] + dy
                x[i] = _reduce(ux, &fl)
                y[i] = _reduce(uy, &fl)
    return ox, oy


def lift_iterate(a, ai, comp, coeff, kind, k1, k2, fx, fy, sx, sy, int n):
    ox = _floats(fx).copy()
    oy = _floats(fy).copy()
    osx = _ints(sx).copy()
    osy = _ints(sy).copy()
    cdef f64[::1] x = ox.ravel()
    cdef f64[::1] y = oy.ravel()
    cdef i64[::1] tx = osx.ravel()
    cdef i64[::1] ty = osy.ravel()
    cdef Terms T = _pack(_ints(comp), _floats(coeff), _ints(kind), _ints(k1), _ints(k2))
    cdef double a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3]
    cdef i64 b0 = ai[0], b1 = ai[1], b2 = ai[2], b3 = ai[3], nx, ny
    cdef double dx, dy, ux, uy, flx, fly
    cdef Py_ssize_t i
    cdef int s
    with nogil:
        for i in range(x.shape[0]):
            for s in range(n):
                _disp(&T, x[i], y[i], &dx, &dy)
                ux = a0 * x[i] + a1 * y[i] + dx
                uy = a2 * x[i] + a3 * y[i] + dy
                x[i] = _reduce(ux, &flx)
                y[i] = _reduce(uy, &fly)
                nx = b0 * tx[i] + b1 * ty[i] + <i64>flx
                ny = b2 * tx[i] + b3 * ty[i] + <i64>fly
                tx[i] = nx
                ty[i] = ny
    return ox, oy, osx, osy


def relative_survival(a, comp, coeff, kind, k1, k2, px, py, dpx, dpy, dx, dy, double r):
    cdef f64[::1] ppx = _floats(px), ppy = _floats(py)
    cdef f64[::1] qpx = _floats(dpx), qpy = _floats(dpy)
    odx = _floats(dx).copy()
    ody = _floats(dy).copy()
    cdef f64[::1] vx = odx, vy = ody
    cdef Terms T = _pack(_ints(comp), _floats(coeff), _ints(kind), _ints(k1), _ints(k2))
    cdef double a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3]
    cdef Py_ssize_t N = ppx.shape[0] - 1, i, m
    steps = np.full(vx.shape[0], -1, dtype=np.int64)
    cdef i64[::1] st = steps
    cdef double cx, cy, qx, qy, nx, ny
    with nogil:
        for i in range(vx.shape[0]):
            cx = vx[i]
            cy = vy[i]
            if not (fabs(cx) < r and fabs(cy) < r):
                continue
            st[i] = 0
            for m in range(N):
                _disp(&T, ppx[m] + cx, ppy[m] + cy, &qx, &qy)
                nx = a0 * cx + a1 * cy + qx - qpx[m]
                ny = a2 * cx + a3 * cy + qy - qpy[m]
                if not (fabs(nx) < r and fabs(ny) < r):
                    break
                cx = nx
                cy = ny
                st[i] = m + 1
            vx[i] = cx
            vy[i] = cy
    return steps, odx, ody
