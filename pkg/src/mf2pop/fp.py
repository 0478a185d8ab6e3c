"""Forward Fokker-Planck solver on a truncated interval with zero-flux ends.

Each step is a single implicit (backward-Euler) finite-volume update with the
hybrid face flux ``F_{j+1/2} = cL m_j - cR m_{j+1}``, where, with ``d = D/dx``
and ``a`` the face drift,

    cL = max(a, d + a/2, 0),   cR = max(-a, d - a/2, 0).

This is the centred flux while the cell Peclet number ``|a| dx / D`` stays
below 2 and first-order upwind beyond. Both coefficients are non-negative, so
the system matrix is an M-matrix: densities stay non-negative and mass is
conserved to round-off.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BlowUpError, CFLError, DomainError, NumericalError
from .grid import first_moment, mass, second_moment  # noqa: F401  (re-exported)

NEGATIVE_TOL = 1e-12
MASS_TOL = 1e-8
BOUNDARY_DENSITY_TOL = 1e-6


class BoundaryMassWarning(UserWarning):
    """Density at the truncation boundary is not negligible."""


@dataclass
class DensityField:
    """Density trajectories; ``values[k]`` has shape ``(nt + 1, nx)`` for population ``k + 1``."""

    values: np.ndarray
    clipped_mass: float = 0.0

    def __getitem__(self, i):
        if i not in (1, 2):
            raise DomainError(f"population index must be 1 or 2, got {i!r}")
        return self.values[i - 1]

    def slice(self, n):
        return self.values[0, n], self.values[1, n]

    def masses(self, grid):
        return mass(self.values, grid)


def check_cfl(drift, grid):
    amax = float(np.max(np.abs(drift)))
    if amax > 0.0 and grid.dt * amax > grid.dx * (1.0 + 1e-12):
        raise CFLError(amax, grid.dt, grid.dx)
    return amax


def step_fp(m_slice, drift_slice, sigma, grid):
    """Advance one density slice by ``grid.dt``.

    Returns ``(m_new, clipped)`` where ``clipped`` is the mass removed by
    zeroing round-off negatives.
    """
    m = np.asarray(m_slice, dtype=float)
    drift = np.asarray(drift_slice, dtype=float)
    if m.shape != (grid.nx,) or drift.shape != (grid.nx,):
        raise DomainError("slice and drift must be grid functions")
    if not np.all(np.isfinite(drift)):
        raise NumericalError("non-finite drift passed to the FP step")
    check_cfl(drift, grid)
    out, bad = _kernels.fp_step(m, drift, 0.5 * sigma * sigma, grid.dt, grid.dx)
    if bad >= 0:
        raise NumericalError(f"tridiagonal solve broke down at row {bad}")
    neg = out < 0.0
    clipped = 0.0
    if np.any(neg):
        if out.min() < -NEGATIVE_TOL:
            raise NumericalError(f"FP step produced a negative density {out.min():.3g}")
        clipped = float(-(out[neg] * grid.weights[neg]).sum())
        out[neg] = 0.0
    return out, clipped


def drift_field(model, i, grid, s, control):
    """g_i(x, m, v(x)) on the grid for the summary ``s``."""
    return np.broadcast_to(model.drift(i, grid.x, s, control), (grid.nx,)).astype(float)


def solve_fp(rho0, controls, model, grid, warn_boundary=True):
    """Forward sweep for both populations.

    ``controls`` has shape ``(2, nt + 1, nx)``; the drift on ``[t_n, t_{n+1}]``
    is ``g_i(x, m_n, v_i(x, t_n))``, so a measure-dependent drift sees the
    current density pair.
    """
    controls = np.asarray(controls, dtype=float)
    nt, nx = grid.nt, grid.nx
    if controls.shape != (2, nt + 1, nx):
        raise DomainError(f"controls must have shape {(2, nt + 1, nx)}, got {controls.shape}")
    m = np.empty((2, nt + 1, nx))
    for k in range(2):
        m[k, 0] = np.asarray(rho0[k], dtype=float)
    clipped = 0.0
    for n in range(nt):
        s = model.summarize(m[0, n], m[1, n], grid)
        for k in range(2):
            drift = drift_field(model, k + 1, grid, s, controls[k, n])
            try:
                m[k, n + 1], c = step_fp(m[k, n], drift, model.sigma[k], grid)
            except CFLError:
                raise
            except NumericalError as exc:
                raise BlowUpError(f"FP step failed for population {k + 1}: {exc}", n) from exc
            clipped += c
    if warn_boundary:
        check_boundary(m, grid)
    return DensityField(m, clipped)


def check_boundary(m, grid, tol=BOUNDARY_DENSITY_TOL):
    """Warn when the density at either end exceeds ``tol``; returns the max end value."""
    edge = float(np.max(np.abs(np.asarray(m)[..., [0, -1]])))
    if edge > tol:
        warnings.warn(
            f"boundary density {edge:.3g} exceeds {tol:.0e}; the truncated domain may be too small",
            BoundaryMassWarning,
            stacklevel=2,
        )
    return edge


def fp_residual(field, controls, model, grid):
    """Max over steps of |m_{n+1} - Step(m_n)|, the discrete operator residual."""
    m = field.values if isinstance(field, DensityField) else np.asarray(field)
    worst = 0.0
    for n in range(grid.nt):
        s = model.summarize(m[0, n], m[1, n], grid)
        for k in range(2):
            drift = drift_field(model, k + 1, grid, s, controls[k, n])
            nxt, _ = _kernels.fp_step(m[k, n], drift, 0.5 * model.sigma[k] ** 2, grid.dt, grid.dx)
            worst = max(worst, float(np.max(np.abs(m[k, n + 1] - nxt))))
    return worst
