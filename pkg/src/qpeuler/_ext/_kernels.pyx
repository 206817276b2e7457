# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: linear RK4 sweeps and batched Taylor inversion."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite

cnp.import_array()


def rk4_linear2(double[::1] q_nodes, double[::1] q_mid, double h,
                double u0, double v0, double shift=0.0):
    """Integrate u'' = (q - shift) u on a uniform grid; q sampled at nodes and midpoints."""
    cdef Py_ssize_t n = q_nodes.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] U = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] V = np.empty(n)
    cdef double[::1] u = U, v = V
    cdef double qa, qm, qb, k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v, uu, vv
    u[0] = u0
    v[0] = v0
    for i in range(n - 1):
        qa = q_nodes[i] - shift
        qm = q_mid[i] - shift
        qb = q_nodes[i + 1] - shift
        uu = u[i]
        vv = v[i]
        k1u = vv
        k1v = qa * uu
        k2u = vv + 0.5 * h * k1v
        k2v = qm * (uu + 0.5 * h * k1u)
        k3u = vv + 0.5 * h * k2v
        k3v = qm * (uu + 0.5 * h * k2u)
        k4u = vv + h * k3v
        k4v = qb * (uu + h * k3u)
        u[i + 1] = uu + h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
        v[i + 1] = vv + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
        if not (isfinite(u[i + 1]) and isfinite(v[i + 1])):
            return U, V, i + 1
    return U, V, -1


cdef inline double _horner(double[:, ::1] c, Py_ssize_t i, double x) nogil:
    cdef Py_ssize_t k
    cdef double p = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        p = p * x + c[k, i]
    return p


def taylor_invert(double[:, ::1] c, double[::1] target, double[::1] lo,
                  double[::1] hi, int maxiter=80, double xtol=4e-16):
    """Solve sum_k c[k, i] x^k = target[i] for x in [lo[i], hi[i]], per column.

    The polynomial is assumed monotone on each bracket; Newton steps that
    leave the current bracket are replaced by bisection.  The stopping test is
    relative to ``|x|`` so small displacements keep full precision.
    """
    cdef Py_ssize_t N = c.shape[0], npts = c.shape[1], i, k, it
    cdef cnp.ndarray[cnp.float64_t, ndim=1] X = np.empty(npts)
    cdef double[::1] xs = X
    cdef double a, b, x, p, dp, fa, fb, xn, sgn
    with nogil:
        for i in range(npts):
            a = lo[i]
            b = hi[i]
            fa = _horner(c, i, a) - target[i]
            fb = _horner(c, i, b) - target[i]
            sgn = 1.0 if fb >= fa else -1.0
            x = a - fa * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
            if not (x >= a and x <= b):
                x = 0.5 * (a + b)
            for it in range(maxiter):
                p = 0.0
                dp = 0.0
                for k in range(N - 1, -1, -1):
                    dp = dp * x + p
                    p = p * x + c[k, i]
                p -= target[i]
                if p == 0.0:
                    break
                if sgn * p > 0.0:
                    b = x
                else:
                    a = x
                xn = x - p / dp if dp != 0.0 else 0.5 * (a + b)
                if not (xn > a and xn < b):
                    xn = 0.5 * (a + b)
                if xn == x or fabs(xn - x) <= xtol * fabs(x) or b - a <= xtol * fabs(x):
                    x = xn
                    break
                x = xn
            xs[i] = x
    return X
