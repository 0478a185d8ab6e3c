"""Solvers for two-population mean field games and mean field type control.

Modules: :mod:`model` (problem data), :mod:`fp` and :mod:`hjb` (forward and
backward PDE sweeps), :mod:`coupled` (fixed-point loop), :mod:`lq` (the
linear-quadratic ODE reduction), :mod:`particles` (McKean-Vlasov simulation),
:mod:`cli` (batch front end).
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .coupled import Solution, SolveConfig, residual, solve_system
from .errors import BlowUpError, CFLError, DomainError, MF2PopError, NumericalError, ParameterError
from .fp import DensityField, solve_fp, step_fp
from .grid import Grid1D, first_moment, mass, second_moment
from .hjb import AdjointField, assemble_rhs, solve_hjb, step_hjb
from .lq import LQParams, build_riccati_blocks, integrate_lq, reconstruct_value, riccati_residual
from .model import (
    CrowdParams,
    LocalLW,
    LQFamily,
    NonlocalAD,
    ProblemKind,
    check_hamiltonian_gradient,
    hamiltonian_eval,
    optimal_control,
)
from .particles import kde, simulate

__all__ = [
    "BACKEND",
    "AdjointField",
    "BlowUpError",
    "CFLError",
    "CrowdParams",
    "DensityField",
    "DomainError",
    "Grid1D",
    "LQFamily",
    "LQParams",
    "LocalLW",
    "MF2PopError",
    "NonlocalAD",
    "NumericalError",
    "ParameterError",
    "ProblemKind",
    "Solution",
    "SolveConfig",
    "assemble_rhs",
    "build_riccati_blocks",
    "check_hamiltonian_gradient",
    "first_moment",
    "hamiltonian_eval",
    "integrate_lq",
    "kde",
    "mass",
    "optimal_control",
    "reconstruct_value",
    "residual",
    "riccati_residual",
    "second_moment",
    "simulate",
    "solve_fp",
    "solve_hjb",
    "solve_system",
    "step_fp",
    "step_hjb",
]
