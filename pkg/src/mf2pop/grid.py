"""Uniform space-time mesh and trapezoid quadrature."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Grid1D:
    """Uniform mesh on ``[x_min, x_max]`` with ``nx`` nodes and ``nt`` steps up to ``T``."""

    x_min: float
    x_max: float
    nx: int
    nt: int
    T: float

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ParameterError(f"x_max must exceed x_min, got [{self.x_min}, {self.x_max}]")
        if int(self.nx) != self.nx or self.nx < 3:
            raise ParameterError(f"nx must be an integer >= 3, got {self.nx}")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ParameterError(f"nt must be a positive integer, got {self.nt}")
        if not self.T > 0:
            raise ParameterError(f"T must be positive, got {self.T}")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self):
        return self.T / self.nt

    @cached_property
    def x(self):
        x = np.linspace(self.x_min, self.x_max, self.nx)
        x.flags.writeable = False
        return x

    @cached_property
    def t(self):
        t = np.linspace(0.0, self.T, self.nt + 1)
        t.flags.writeable = False
        return t

    @cached_property
    def weights(self):
        """Trapezoid weights; also the control-volume widths of the FP scheme."""
        w = np.full(self.nx, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    def header(self):
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "nx": self.nx,
            "nt": self.nt,
            "T": self.T,
        }

    def same_as(self, other):
        return self.header() == other.header()


def integrate(values, grid):
    """Trapezoid integral over the last axis."""
    return np.asarray(values) @ grid.weights


def mass(density, grid):
    return integrate(density, grid)


def first_moment(density, grid):
    return integrate(np.asarray(density) * grid.x, grid)


def second_moment(density, grid):
    return integrate(np.asarray(density) * grid.x**2, grid)


def l1_distance(a, b, grid):
    return integrate(np.abs(np.asarray(a) - np.asarray(b)), grid)


def normalize(density, grid):
    """Rescale a sampled density to unit trapezoid mass."""
    density = np.asarray(density, dtype=float)
    total = mass(density, grid)
    if not total > 0:
        raise ParameterError("density has non-positive mass on the grid")
    return density / total
