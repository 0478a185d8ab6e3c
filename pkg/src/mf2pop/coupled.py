"""Damped fixed-point iteration for the forward-backward system of each regime."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, MF2PopError, NumericalError, ParameterError
from .fp import DensityField, fp_residual, solve_fp
from .grid import l1_distance
from .hjb import AdjointField, gradient, hjb_residual, solve_hjb
from .model import ProblemKind


@dataclass(frozen=True)
class SolveConfig:
    damping: float = 0.5
    tol: float = 1e-7
    max_iters: int = 500
    warm_start: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ParameterError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ParameterError(f"max_iters must be a positive integer, got {self.max_iters}")


@dataclass
class Solution:
    kind: ProblemKind
    m: DensityField
    u: AdjointField
    controls: np.ndarray  # (2, nt + 1, nx)
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    warm_started: bool = False

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else np.inf


class SolverFailure(MF2PopError):
    """An inner solve failed during the fixed-point loop."""

    def __init__(self, iteration, cause):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {cause}")


def residual(m_a, m_b, grid):
    """sup over time of the L1 distance between two density trajectories (max over populations)."""
    a = m_a.values if isinstance(m_a, DensityField) else np.asarray(m_a)
    b = m_b.values if isinstance(m_b, DensityField) else np.asarray(m_b)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(l1_distance(a, b, grid)))


def extract_controls(u, m, model, grid):
    """v_i(x, t_n) = argmin for Du_i(x, t_n) and the density pair at t_n."""
    nt = grid.nt
    v = np.empty((2, nt + 1, grid.nx))
    for n in range(nt + 1):
        s = model.summarize(m[0, n], m[1, n], grid)
        for k in range(2):
            du = gradient(u[k + 1][n], grid)
            v[k, n] = np.broadcast_to(model.minimizer(k + 1, grid.x, s, du), (grid.nx,))
    return v


def _initial(rho0, grid, cfg):
    if cfg.warm_start is not None:
        m0 = np.array(cfg.warm_start, dtype=float)
        if m0.shape != (2, grid.nt + 1, grid.nx):
            raise DomainError("warm start must have shape (2, nt + 1, nx)")
        return m0
    rho = np.stack([np.asarray(r, dtype=float) for r in rho0])
    if rho.shape != (2, grid.nx):
        raise DomainError("rho0 must hold one grid function per population")
    return np.repeat(rho[:, None, :], grid.nt + 1, axis=1)


def solve_system(kind, model, rho0, grid, cfg=None, callback=None):
    """Picard iteration on the density trajectory.

    Each sweep solves the backward equations given ``m^k``, extracts the
    optimal feedback, runs the forward equations and relaxes
    ``m^{k+1} = (1 - w) m^k + w m_new``. Stops when ``residual(m^{k+1}, m^k) <= tol``
    or after ``max_iters`` sweeps; the returned adjoint and controls are
    recomputed from the final densities.
    """
    kind = ProblemKind.parse(kind)
    cfg = cfg or SolveConfig()
    m = _initial(rho0, grid, cfg)
    w = cfg.damping
    history = []
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        try:
            u = solve_hjb(kind, m, model, grid)
            v = extract_controls(u, m, model, grid)
            m_new = solve_fp(rho0 if cfg.warm_start is None else m[:, 0], v, model, grid, warn_boundary=False).values
        except NumericalError as exc:
            raise SolverFailure(it, exc) from exc
        m_next = (1.0 - w) * m + w * m_new if w < 1.0 else m_new
        res = residual(m_next, m, grid)
        history.append(res)
        m = m_next
        if callback is not None:
            callback(it, res)
        if not np.isfinite(res):
            break
        if res <= cfg.tol:
            converged = True
            break
    try:
        u = solve_hjb(kind, m, model, grid)
    except NumericalError as exc:
        raise SolverFailure(it, exc) from exc
    v = extract_controls(u, m, model, grid)
    return Solution(
        kind=kind,
        m=DensityField(m),
        u=u,
        controls=v,
        iterations=it,
        residual_history=history,
        converged=converged,
        warm_started=cfg.warm_start is not None,
    )


def pde_residuals(sol, model, grid):
    """Discrete FP and HJB operator residuals of a solution, as a dict."""
    return {
        "fp": fp_residual(sol.m, sol.controls, model, grid),
        "hjb": hjb_residual(sol.kind, sol.u, sol.m, model, grid),
    }
