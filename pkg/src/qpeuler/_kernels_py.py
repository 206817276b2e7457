"""Pure-Python/NumPy fallbacks for the compiled kernels in ``_ext._kernels``."""

import numpy as np


def rk4_linear2(q_nodes, q_mid, h, u0, v0, shift=0.0):
    n = len(q_nodes)
    qn = [float(q) - shift for q in q_nodes]
    qm = [float(q) - shift for q in q_mid]
    u = [0.0] * n
    v = [0.0] * n
    u[0] = float(u0)
    v[0] = float(v0)
    hh = 0.5 * h
    for i in range(n - 1):
        uu = u[i]
        vv = v[i]
        k1v = qn[i] * uu
        k2u = vv + hh * k1v
        k2v = qm[i] * (uu + hh * vv)
        k3u = vv + hh * k2v
        k3v = qm[i] * (uu + hh * k2u)
        k4u = vv + h * k3v
        k4v = qn[i + 1] * (uu + h * k3u)
        u[i + 1] = uu + h * (vv + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
        v[i + 1] = vv + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
    U = np.array(u)
    V = np.array(v)
    bad = ~(np.isfinite(U) & np.isfinite(V))
    return U, V, (int(np.argmax(bad)) if bad.any() else -1)


def _horner(c, x):
    p = np.zeros_like(x)
    dp = np.zeros_like(x)
    for k in range(c.shape[0] - 1, -1, -1):
        dp = dp * x + p
        p = p * x + c[k]
    return p, dp


def taylor_invert(c, target, lo, hi, maxiter=80, xtol=4e-16):
    c = np.asarray(c, dtype=float)
    target = np.asarray(target, dtype=float)
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    fa = _horner(c, a)[0] - target
    fb = _horner(c, b)[0] - target
    sgn = np.where(fb >= fa, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(fb != fa, a - fa * (b - a) / (fb - fa), 0.5 * (a + b))
    x = np.where((x >= a) & (x <= b), x, 0.5 * (a + b))
    active = np.ones(x.shape, dtype=bool)
    for _ in range(maxiter):
        p, dp = _horner(c, x)
        p = p - target
        done = p == 0.0
        right = sgn * p > 0.0
        b = np.where(active & right & ~done, x, b)
        a = np.where(active & ~right & ~done, x, a)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = np.where(dp != 0.0, x - p / dp, 0.5 * (a + b))
        xn = np.where((xn > a) & (xn < b), xn, 0.5 * (a + b))
        conv = (xn == x) | (np.abs(xn - x) <= xtol * np.abs(x)) | (b - a <= xtol * np.abs(x))
        xn = np.where(done, x, xn)
        x = np.where(active, xn, x)
        active &= ~(conv | done)
        if not active.any():
            break
    return x
