"""Backward solver for the adjoint equations of each regime, for a frozen density trajectory.

The unknowns are labelled ``1, 2`` (the adjoint states ``u_1, u_2``) and, for
the Nash control problem with cross-population drifts, ``-1, -2`` (the
auxiliary states ``u_{-1}, u_{-2}``). ``u_{-i}`` diffuses with the volatility
of population ``-i``.

Time stepping: ``(I - dt D Lap) u_n = u_{n+1} + dt rhs(m_{n+1}, Du_{n+1})``,
implicit in the diffusion and explicit in the Hamiltonian. At the two ends the
second difference is extrapolated (curvature at the edge equals curvature one
node in), which is exact for quadratics.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BlowUpError, DomainError, NumericalError
from .model import ProblemKind, other


@dataclass
class AdjointField:
    """``u[label]`` has shape ``(nt + 1, nx)``; labels as in :func:`unknowns`."""

    kind: ProblemKind
    u: dict

    def __getitem__(self, label):
        try:
            return self.u[label]
        except KeyError:
            raise DomainError(f"unknown {label!r} not present for {self.kind.value}") from None

    @property
    def labels(self):
        return tuple(self.u)

    def slice(self, n):
        return {k: v[n] for k, v in self.u.items()}


def unknowns(kind, model):
    """Labels of the backward unknowns for ``kind`` under ``model``."""
    kind = ProblemKind.parse(kind)
    if kind is ProblemKind.NMFC_SC2 and model.cross_drift:
        raise DomainError("NMFC_SC2 requires vanishing cross drift kernels; use NMFC_SC1")
    if kind is ProblemKind.NMFC_SC1 and model.cross_drift:
        return (1, 2, -1, -2)
    return (1, 2)


def diffusion_of(label, model):
    """D = sigma^2 / 2 for the population whose operator acts on ``label``."""
    pop = label if label > 0 else other(-label)
    return model.diffusion(pop)


def gradient(u, grid):
    """Central differences inside, one-sided at the ends."""
    return np.gradient(np.asarray(u, dtype=float), grid.dx, edge_order=1, axis=-1)


def assemble_rhs(kind, label, grid, m, du, model, s=None):
    """Right-hand side of the backward equation of unknown ``label``.

    ``m`` is the density pair at one time, ``du`` maps labels to gradient
    slices (it must hold every unknown of the regime).
    """
    kind = ProblemKind.parse(kind)
    labels = unknowns(kind, model)
    if label not in labels:
        raise DomainError(f"unknown {label!r} is not part of the {kind.value} system")
    if s is None:
        s = model.summarize(m[0], m[1], grid)
    x = grid.x
    if label < 0:
        i = -label
        o = other(i)
        transport = du[label] * model.dhamiltonian_dq(o, x, s, du[o])
        return (
            transport
            + model.hamiltonian_kernel(i, o, grid, m, du)
            + model.drift_kernel(o, o, grid, m, du, du[label])
        )
    i = label
    rhs = np.broadcast_to(model.hamiltonian(i, x, s, du[i]), (grid.nx,)).astype(float)
    if kind is ProblemKind.MFG:
        return rhs
    if kind is ProblemKind.CMFC:
        return rhs + model.hamiltonian_kernel(1, i, grid, m, du) + model.hamiltonian_kernel(2, i, grid, m, du)
    rhs = rhs + model.hamiltonian_kernel(i, i, grid, m, du)
    if -i in labels:
        rhs = rhs + model.drift_kernel(other(i), i, grid, m, du, du[-i])
    return rhs


def terminal_values(kind, grid, m_T, model):
    """Terminal slices of every unknown, from h_i and the terminal coupling."""
    kind = ProblemKind.parse(kind)
    labels = unknowns(kind, model)
    s = model.summarize(m_T[0], m_T[1], grid)
    out = {}
    for label in labels:
        if label < 0:
            i = -label
            out[label] = np.asarray(model.terminal_kernel(i, other(i), grid, m_T), dtype=float)
            continue
        h = np.broadcast_to(model.terminal_cost(label, grid.x, s), (grid.nx,)).astype(float)
        if kind is ProblemKind.CMFC:
            h = h + model.terminal_coupling(label, grid, m_T)
        elif kind is not ProblemKind.MFG:
            h = h + model.terminal_kernel(label, label, grid, m_T)
        out[label] = h
    return out


def step_hjb(u_next, m_slice, kind, model, grid):
    """One backward step from the slices ``u_next`` (a label -> array mapping)."""
    kind = ProblemKind.parse(kind)
    du = {k: gradient(v, grid) for k, v in u_next.items()}
    s = model.summarize(m_slice[0], m_slice[1], grid)
    out = {}
    for label in u_next:
        rhs = assemble_rhs(kind, label, grid, m_slice, du, model, s=s)
        u, bad = _kernels.hjb_step(u_next[label], rhs, diffusion_of(label, model), grid.dt, grid.dx)
        if bad >= 0:
            raise NumericalError(f"tridiagonal solve broke down at row {bad}")
        out[label] = u
    return out


def solve_hjb(kind, m_traj, model, grid):
    """Full backward sweep given the density trajectory ``m_traj`` of shape ``(2, nt+1, nx)``."""
    kind = ProblemKind.parse(kind)
    m = m_traj.values if hasattr(m_traj, "values") else np.asarray(m_traj)
    nt = grid.nt
    if m.shape != (2, nt + 1, grid.nx):
        raise DomainError(f"density trajectory must have shape {(2, nt + 1, grid.nx)}")
    labels = unknowns(kind, model)
    u = {k: np.empty((nt + 1, grid.nx)) for k in labels}
    cur = terminal_values(kind, grid, (m[0, nt], m[1, nt]), model)
    for k in labels:
        u[k][nt] = cur[k]
    for n in range(nt - 1, -1, -1):
        cur = step_hjb(cur, (m[0, n + 1], m[1, n + 1]), kind, model, grid)
        for k in labels:
            if not np.all(np.isfinite(cur[k])):
                raise BlowUpError(f"non-finite values in u[{k}]", n)
            u[k][n] = cur[k]
    return AdjointField(kind, u)


def hjb_residual(kind, adjoint, m_traj, model, grid):
    """Max over steps of |u_n - Step(u_{n+1})| and mismatch of the terminal slices."""
    kind = ProblemKind.parse(kind)
    m = m_traj.values if hasattr(m_traj, "values") else np.asarray(m_traj)
    nt = grid.nt
    term = terminal_values(kind, grid, (m[0, nt], m[1, nt]), model)
    worst = max(float(np.max(np.abs(adjoint[k][nt] - term[k]))) for k in term)
    for n in range(nt - 1, -1, -1):
        pred = step_hjb(adjoint.slice(n + 1), (m[0, n + 1], m[1, n + 1]), kind, model, grid)
        worst = max(worst, max(float(np.max(np.abs(adjoint[k][n] - pred[k]))) for k in pred))
    return worst
