# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-step kernels. Semantics match ``_pure`` to round-off."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _fmax(double a, double b) noexcept nogil:
    return a if a > b else b


cdef Py_ssize_t _thomas(const double[::1] sub, const double[::1] diag,
                        const double[::1] sup, const double[::1] rhs,
                        double[::1] out, double[::1] cp, double[::1] dp) noexcept nogil:
    """Return -1 on success, else the row where elimination broke down."""
    cdef Py_ssize_t n = diag.shape[0]
    cdef Py_ssize_t i
    cdef double denom = diag[0]
    if denom == 0.0:
        return 0
    cp[0] = sup[0] / denom
    dp[0] = rhs[0] / denom
    for i in range(1, n):
        denom = diag[i] - sub[i] * cp[i - 1]
        if denom == 0.0:
            return i
        cp[i] = sup[i] / denom if i < n - 1 else 0.0
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / denom
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return -1


def solve_tridiagonal(sub, diag, sup, rhs):
    """Solve a tridiagonal system; ``sub[0]`` and ``sup[-1]`` are ignored."""
    cdef double[::1] a = np.ascontiguousarray(sub, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(sup, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    out = np.empty(n)
    cdef double[::1] x = out
    cdef double[::1] cp = np.empty(n)
    cdef double[::1] dp = np.empty(n)
    cdef Py_ssize_t bad
    with nogil:
        bad = _thomas(a, b, c, d, x, cp, dp)
    if bad >= 0:
        return None, bad
    return out, -1


def fp_step(m, drift, double diffusion, double dt, double dx):
    """One implicit conservative step; returns ``(m_new, failed_row)``."""
    cdef double[::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(drift, dtype=np.float64)
    cdef Py_ssize_t n = mv.shape[0]
    cdef Py_ssize_t j
    cdef double a_face, cl, cr, w, lam
    cdef double d = diffusion / dx
    sub_a = np.zeros(n)
    diag_a = np.ones(n)
    sup_a = np.zeros(n)
    cdef double[::1] sub = sub_a
    cdef double[::1] diag = diag_a
    cdef double[::1] sup = sup_a
    out = np.empty(n)
    cdef double[::1] x = out
    cdef double[::1] cp = np.empty(n)
    cdef double[::1] dp = np.empty(n)
    cdef Py_ssize_t bad
    with nogil:
        for j in range(n - 1):
            a_face = 0.5 * (av[j] + av[j + 1])
            # hybrid flux: central for |Pe| <= 2, upwind beyond
            cl = _fmax(_fmax(a_face, d + 0.5 * a_face), 0.0)
            cr = _fmax(_fmax(-a_face, d - 0.5 * a_face), 0.0)
            # face j+1/2 couples cells j and j+1
            w = 0.5 * dx if j == 0 else dx
            lam = dt / w
            diag[j] += lam * cl
            sup[j] = -lam * cr
            w = 0.5 * dx if j + 1 == n - 1 else dx
            lam = dt / w
            diag[j + 1] += lam * cr
            sub[j + 1] = -lam * cl
        bad = _thomas(sub, diag, sup, mv, x, cp, dp)
    if bad >= 0:
        return None, bad
    return out, -1


def hjb_step(u_next, rhs, double diffusion, double dt, double dx):
    """One backward step, implicit diffusion; returns ``(u, failed_row)``."""
    cdef double[::1] un = np.ascontiguousarray(u_next, dtype=np.float64)
    cdef double[::1] fv = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = un.shape[0]
    cdef Py_ssize_t j
    cdef double r = diffusion * dt / (dx * dx)
    b_a = np.empty(n)
    cdef double[::1] b = b_a
    for j in range(n):
        b[j] = un[j] + dt * fv[j]
    if r == 0.0:
        return b_a, -1
    sub_a = np.full(n, -r)
    diag_a = np.full(n, 1.0 + 2.0 * r)
    sup_a = np.full(n, -r)
    cdef double[::1] sub = sub_a
    cdef double[::1] diag = diag_a
    cdef double[::1] sup = sup_a
    out = np.empty(n)
    cdef double[::1] x = out
    cdef double[::1] cp = np.empty(n)
    cdef double[::1] dp = np.empty(n)
    cdef Py_ssize_t bad
    cdef double b0 = b[0] - b[1]
    cdef double bn = b[n - 1] - b[n - 2]
    with nogil:
        # boundary rows: curvature at the edge equals curvature one node in
        diag[0] = 1.0
        sup[0] = -1.0
        b[0] = b0
        diag[n - 1] = 1.0
        sub[n - 1] = -1.0
        b[n - 1] = bn
        bad = _thomas(sub, diag, sup, b, x, cp, dp)
    if bad >= 0:
        return None, bad
    return out, -1


def em_step(double[::1] X, const double[::1] vgrid, double x0, double dx,
            double alpha, double beta, double b, double dt, double sdt,
            const double[::1] noise):
    """In-place Euler-Maruyama update for drift ``alpha*x + beta + b*v(x)``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t nv = vgrid.shape[0]
    cdef Py_ssize_t p, k
    cdef double x, s, f, v
    with nogil:
        for p in range(n):
            x = X[p]
            s = (x - x0) / dx
            if s <= 0.0:
                v = vgrid[0]
            elif s >= nv - 1:
                v = vgrid[nv - 1]
            else:
                k = <Py_ssize_t>s
                f = s - k
                v = vgrid[k] + f * (vgrid[k + 1] - vgrid[k])
            X[p] = x + (alpha * x + beta + b * v) * dt + sdt * noise[p]
