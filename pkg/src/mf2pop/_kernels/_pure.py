"""Numpy/scipy implementations of the time-step kernels.

Used when the compiled extension is missing or ``MF2POP_PURE_PYTHON=1``.
Every function returns ``(result, failed_row)`` with ``failed_row == -1`` on
success, mirroring the compiled module.
"""

import numpy as np
from scipy.linalg import LinAlgError, solve_banded


def solve_tridiagonal(sub, diag, sup, rhs):
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = np.asarray(sup, dtype=float)[:-1]
    ab[1] = diag
    ab[2, :-1] = np.asarray(sub, dtype=float)[1:]
    try:
        x = solve_banded((1, 1), ab, np.asarray(rhs, dtype=float), check_finite=False)
    except LinAlgError:
        return None, 0
    return x, -1


def fp_step(m, drift, diffusion, dt, dx):
    m = np.asarray(m, dtype=float)
    drift = np.asarray(drift, dtype=float)
    n = m.shape[0]
    a_face = 0.5 * (drift[:-1] + drift[1:])
    d = diffusion / dx
    cl = np.maximum(np.maximum(a_face, d + 0.5 * a_face), 0.0)
    cr = np.maximum(np.maximum(-a_face, d - 0.5 * a_face), 0.0)
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    lam = dt / w
    diag = np.ones(n)
    diag[:-1] += lam[:-1] * cl
    diag[1:] += lam[1:] * cr
    sup = np.zeros(n)
    sup[:-1] = -lam[:-1] * cr
    sub = np.zeros(n)
    sub[1:] = -lam[1:] * cl
    return solve_tridiagonal(sub, diag, sup, m)


def hjb_step(u_next, rhs, diffusion, dt, dx):
    b = np.asarray(u_next, dtype=float) + dt * np.asarray(rhs, dtype=float)
    r = diffusion * dt / (dx * dx)
    if r == 0.0:
        return b, -1
    n = b.shape[0]
    sub = np.full(n, -r)
    diag = np.full(n, 1.0 + 2.0 * r)
    sup = np.full(n, -r)
    diag[0] = diag[-1] = 1.0
    sup[0] = -1.0
    sub[-1] = -1.0
    rhs_vec = b.copy()
    rhs_vec[0] = b[0] - b[1]
    rhs_vec[-1] = b[-1] - b[-2]
    return solve_tridiagonal(sub, diag, sup, rhs_vec)


def em_step(X, vgrid, x0, dx, alpha, beta, b, dt, sdt, noise):
    xp = x0 + dx * np.arange(vgrid.shape[0])
    v = np.interp(X, xp, vgrid)
    X += (alpha * X + beta + b * v) * dt + sdt * noise
