"""Problem data for the two-population regimes: dynamics, costs, Hamiltonians.

Every family exposes the same pointwise interface

    drift(i, x, s, v), running_cost(i, x, s, v), terminal_cost(i, x, s),
    hamiltonian(i, x, s, q), minimizer(i, x, s, q)

where ``i`` is the population (1 or 2) and ``s = (s1, s2)`` is the summary of
the density pair that the family consumes (pointwise values, convolved values
or first moments; see :meth:`ModelFamily.summarize`). Coupling integrals
arising from functional derivatives are supplied in closed form by the
``*_kernel`` methods, all of which return grid functions.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _quad

from .errors import DomainError, ParameterError
from .grid import first_moment, integrate, mass


class ProblemKind(enum.Enum):
    CMFC = "CMFC"
    NMFC_SC1 = "NMFC_SC1"
    NMFC_SC2 = "NMFC_SC2"
    # NMFG and CMFG share one PDE system
    MFG = "MFG"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "_")
        if key in ("NMFG", "CMFG"):
            return cls.MFG
        try:
            return cls[key]
        except KeyError:
            raise DomainError(f"unknown problem kind {name!r}") from None


def gradient_of(du, label):
    """Gradient slice of unknown ``label`` from a label mapping or a (Du_1, Du_2) sequence."""
    if isinstance(du, dict):
        return np.asarray(du[label], dtype=float)
    return np.asarray(du[pop_index(label)], dtype=float)


def pop_index(i):
    """Validate a population label (1 or 2) and return the 0-based index."""
    if i not in (1, 2):
        raise DomainError(f"population index must be 1 or 2, got {i!r}")
    return i - 1


def other(i):
    pop_index(i)
    return 3 - i


class ModelFamily:
    """Base class; subclasses implement the pointwise maps and coupling kernels."""

    #: diffusion coefficient per population (a_i = sigma_i**2 / 2)
    sigma = (0.0, 0.0)
    #: True when some g_i depends on the other population's density
    cross_drift = False
    #: True when g_i depends on the density at all
    drift_depends_on_measure = False

    def diffusion(self, i):
        return 0.5 * self.sigma[pop_index(i)] ** 2

    def summarize(self, m1, m2, grid):
        raise NotImplementedError

    def drift(self, i, x, s, v):
        raise NotImplementedError

    def running_cost(self, i, x, s, v):
        raise NotImplementedError

    def terminal_cost(self, i, x, s):
        raise NotImplementedError

    def hamiltonian(self, i, x, s, q):
        raise NotImplementedError

    def minimizer(self, i, x, s, q):
        raise NotImplementedError

    def dhamiltonian_dq(self, i, x, s, q):
        # envelope theorem
        return self.drift(i, x, s, self.minimizer(i, x, s, q))

    def hamiltonian_kernel(self, j, k, grid, m, du):
        """x -> integral of d_{m_k} H_j(xi, m, Du_j(xi))(x) m_j(xi) dxi."""
        raise NotImplementedError

    def drift_kernel(self, j, k, grid, m, du, weight):
        """x -> integral of weight(xi) d_{m_k}(dH_j/dq_j)(xi, m, Du_j(xi))(x) m_j(xi) dxi."""
        return np.zeros(grid.nx)

    def terminal_kernel(self, j, k, grid, m):
        """x -> integral of d_{m_k} h_j(xi, m_T)(x) m_j(xi, T) dxi."""
        return np.zeros(grid.nx)

    def coupling_self(self, i, grid, m, du):
        return self.hamiltonian_kernel(i, i, grid, m, du)

    def coupling_cross(self, i, grid, m, du):
        return self.hamiltonian_kernel(other(i), i, grid, m, du)

    def terminal_coupling(self, i, grid, m):
        return self.terminal_kernel(1, i, grid, m) + self.terminal_kernel(2, i, grid, m)

    def drift_affine(self, i, s):
        """Coefficients ``(alpha, beta, b)`` with drift = alpha*x + beta + b*v."""
        raise NotImplementedError

    def particle_summary(self, X1, X2):
        """Summary of an empirical measure pair, for McKean-Vlasov drifts."""
        return None


# ---------------------------------------------------------------------------
# crowd aversion


def _as_callable(psi):
    if psi is None:
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if callable(psi):
        return psi
    c = float(psi)
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


@dataclass(frozen=True)
class CrowdParams:
    """Parameters of the crowd-aversion families.

    ``variant`` is ``"local_lw"`` (pointwise congestion cost) or
    ``"nonlocal_ad"`` (cost through the convolution with a mollified ball
    indicator, weights ``Lambda``). ``terminal`` holds the potentials
    ``psi_i`` as callables of ``x``.
    """

    lam: float = 0.0
    sigma: float = 1.0
    variant: str = "local_lw"
    Lambda: tuple = None
    radius: float = None
    delta: float = None
    terminal: tuple = field(default=(None, None))

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if self.variant not in ("local_lw", "nonlocal_ad"):
            raise ParameterError(f"unknown crowd variant {self.variant!r}")
        if self.variant == "nonlocal_ad":
            lam = np.asarray(self.Lambda, dtype=float)
            if lam.shape != (2, 2):
                raise ParameterError("Lambda must be a 2x2 matrix")
            if np.any(lam < 0):
                raise ParameterError("Lambda must be elementwise non-negative")
            if self.radius is None or not self.radius > 0:
                raise ParameterError("kernel radius must be > 0")
            if self.delta is None or not self.delta > 0:
                raise ParameterError("mollifier width must be > 0")
        if len(self.terminal) != 2:
            raise ParameterError("terminal must hold one potential per population")


class _CrowdBase(ModelFamily):
    def __init__(self, params):
        self.params = params
        self.sigma = (params.sigma, params.sigma)
        self._psi = tuple(_as_callable(p) for p in params.terminal)

    def drift(self, i, x, s, v):
        pop_index(i)
        return np.asarray(v, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def minimizer(self, i, x, s, q):
        pop_index(i)
        return -np.asarray(q, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def running_cost(self, i, x, s, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * v * v + self._congestion(i, x, s)

    def hamiltonian(self, i, x, s, q):
        q = np.asarray(q, dtype=float)
        return -0.5 * q * q + self._congestion(i, x, s)

    def terminal_cost(self, i, x, s):
        return np.asarray(self._psi[pop_index(i)](np.asarray(x, dtype=float)), dtype=float)

    def drift_affine(self, i, s):
        pop_index(i)
        return 0.0, 0.0, 1.0


class LocalLW(_CrowdBase):
    """Local congestion cost ``m_i(x) + lam * m_{-i}(x)`` and drift = control."""

    def summarize(self, m1, m2, grid):
        return (np.asarray(m1, dtype=float), np.asarray(m2, dtype=float))

    def _weight(self, j, k):
        return 1.0 if j == k else self.params.lam

    def _congestion(self, i, x, s):
        k = pop_index(i)
        return np.asarray(s[k], dtype=float) + self.params.lam * np.asarray(s[1 - k], dtype=float)

    def hamiltonian_kernel(self, j, k, grid, m, du):
        # d_{m_k} H_j(xi)(x) is a Dirac mass at xi = x
        return self._weight(j, k) * np.asarray(m[pop_index(j)], dtype=float)


def _bump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


class _BumpCDF:
    """Cumulative distribution of the unit-mass bump on [-1, 1].

    Only the left half is integrated; the right half uses ``1 - CDF(-z)`` so
    the tabulated kernel is even to round-off.
    """

    def __init__(self):
        self.norm = 2.0 * self._left(0.0)

    @staticmethod
    def _left(z):
        return _quad.quad(lambda t: float(_bump(t)), -1.0, z, epsabs=1e-14, epsrel=1e-13)[0]

    def __call__(self, z):
        if z <= -1.0:
            return 0.0
        if z >= 1.0:
            return 1.0
        if z > 0.0:
            return 1.0 - self(-z)
        return self._left(z) / self.norm


def mollified_ball_kernel(offsets, radius, delta):
    """phi(y) = (gamma_delta * normalized indicator of [-r, r])(y), at the given offsets."""
    cdf = _BumpCDF()
    vals = [
        (cdf((y + radius) / delta) - cdf((y - radius) / delta)) / (2.0 * radius)
        for y in np.asarray(offsets, dtype=float)
    ]
    return np.array(vals)


class NonlocalAD(_CrowdBase):
    """Non-local congestion cost ``sum_k Lambda[i,k] (phi * m_k)(x)``.

    The kernel is tabulated once on ``grid``; convolutions use trapezoid
    weights so that ``phi * m`` is a matrix-vector product.
    """

    symmetry_tol = 1e-12

    def __init__(self, params, grid):
        if params.variant != "nonlocal_ad":
            raise ParameterError("NonlocalAD needs variant='nonlocal_ad'")
        super().__init__(params)
        self.grid = grid
        self.Lambda = np.asarray(params.Lambda, dtype=float)
        nx = grid.nx
        offsets = np.arange(-(nx - 1), nx) * grid.dx
        self.phi_table = mollified_ball_kernel(offsets, params.radius, params.delta)
        idx = np.arange(nx)
        diff = idx[:, None] - idx[None, :] + (nx - 1)
        # conv[k, l] = phi(x_k - x_l) w_l ; conv_bar uses phi(x_l - x_k)
        self.conv = self.phi_table[diff] * grid.weights[None, :]
        self.conv_bar = self.phi_table[(2 * (nx - 1)) - diff] * grid.weights[None, :]
        self.kernel_asymmetry = float(np.max(np.abs(self.phi_table - self.phi_table[::-1])))
        # an even mollifier makes phi even, so phi * m == phi_bar * m
        if self.kernel_asymmetry > self.symmetry_tol:
            raise ParameterError(f"tabulated kernel is not even: defect {self.kernel_asymmetry:.3g}")

    def _check_grid(self, grid):
        if grid is not self.grid and not grid.same_as(self.grid):
            raise DomainError("NonlocalAD was tabulated on a different grid")

    def convolve(self, m):
        return self.conv @ np.asarray(m, dtype=float)

    def convolve_reflected(self, m):
        return self.conv_bar @ np.asarray(m, dtype=float)

    def symmetry_defect(self, m):
        """sup-norm of phi*m - phi_bar*m."""
        return float(np.max(np.abs(self.convolve(m) - self.convolve_reflected(m))))

    def summarize(self, m1, m2, grid):
        self._check_grid(grid)
        return (self.convolve(m1), self.convolve(m2))

    def _congestion(self, i, x, s):
        k = pop_index(i)
        return self.Lambda[k, 0] * np.asarray(s[0], dtype=float) + self.Lambda[k, 1] * np.asarray(
            s[1], dtype=float
        )

    def hamiltonian_kernel(self, j, k, grid, m, du):
        self._check_grid(grid)
        jj, kk = pop_index(j), pop_index(k)
        return self.Lambda[jj, kk] * self.convolve_reflected(m[jj])


def crowd_family(params, grid=None):
    if params.variant == "local_lw":
        return LocalLW(params)
    if grid is None:
        raise ParameterError("NonlocalAD needs the grid to tabulate its kernel")
    return NonlocalAD(params, grid)


# ---------------------------------------------------------------------------
# linear-quadratic, scalar state and control


def _scalar(a):
    return np.asarray(a, dtype=float)[..., 0, 0]


class LQFamily(ModelFamily):
    """Scalar linear-quadratic family; the density enters through first moments only.

    ``params`` is an :class:`mf2pop.lq.LQParams` with ``n == d == 1``.
    """

    drift_depends_on_measure = True

    def __init__(self, params):
        if params.n != 1 or params.d != 1:
            raise ParameterError("the PDE path supports scalar LQ models only (n = d = 1)")
        self.params = params
        p = params
        self.sigma = (float(p.sigma[0]), float(p.sigma[1]))
        self.A = _scalar(p.A)
        self.Abar = _scalar(p.Abar)
        self.B = _scalar(p.B)
        self.Q = _scalar(p.Q)
        self.Qbar = _scalar(p.Qbar)
        self.R = _scalar(p.R)
        self.S = _scalar(p.S)
        self.QT = _scalar(p.QT)
        self.QbarT = _scalar(p.QbarT)
        self.ST = _scalar(p.ST)
        self.cross_drift = bool(self.Abar[0, 1] != 0.0 or self.Abar[1, 0] != 0.0)

    def summarize(self, m1, m2, grid):
        return (float(first_moment(m1, grid)), float(first_moment(m2, grid)))

    def particle_summary(self, X1, X2):
        return (float(np.mean(X1)), float(np.mean(X2)))

    def _mean_drift(self, k, s):
        return self.Abar[k, 0] * s[0] + self.Abar[k, 1] * s[1]

    def drift(self, i, x, s, v):
        k = pop_index(i)
        return self.A[k] * np.asarray(x, dtype=float) + self._mean_drift(k, s) + self.B[k] * np.asarray(v, dtype=float)

    def _state_cost(self, k, x, s, Q, Qbar, S):
        x = np.asarray(x, dtype=float)
        c = Q[k] * x * x
        for j in range(2):
            d = x - S[k, j] * s[j]
            c = c + Qbar[k, j] * d * d
        return 0.5 * c

    def running_cost(self, i, x, s, v):
        k = pop_index(i)
        v = np.asarray(v, dtype=float)
        return self._state_cost(k, x, s, self.Q, self.Qbar, self.S) + 0.5 * self.R[k] * v * v

    def terminal_cost(self, i, x, s):
        k = pop_index(i)
        return self._state_cost(k, x, s, self.QT, self.QbarT, self.ST)

    def minimizer(self, i, x, s, q):
        k = pop_index(i)
        return -(self.B[k] / self.R[k]) * np.asarray(q, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def hamiltonian(self, i, x, s, q):
        k = pop_index(i)
        x = np.asarray(x, dtype=float)
        q = np.asarray(q, dtype=float)
        return (
            q * (self.A[k] * x + self._mean_drift(k, s))
            - 0.5 * q * q * self.B[k] ** 2 / self.R[k]
            + self._state_cost(k, x, s, self.Q, self.Qbar, self.S)
        )

    def hamiltonian_kernel(self, j, k, grid, m, du):
        jj, kk = pop_index(j), pop_index(k)
        mj = m[jj]
        pj = float(integrate(gradient_of(du, j) * mj, grid))
        mbar_j = float(first_moment(mj, grid))
        mbar_k = float(first_moment(m[kk], grid))
        mass_j = float(mass(mj, grid))
        S = self.S[jj, kk]
        coef = pj * self.Abar[jj, kk] - S * self.Qbar[jj, kk] * (mbar_j - S * mbar_k * mass_j)
        return coef * grid.x

    def drift_kernel(self, j, k, grid, m, du, weight):
        jj, kk = pop_index(j), pop_index(k)
        w = float(integrate(np.asarray(weight) * m[jj], grid))
        return w * self.Abar[jj, kk] * grid.x

    def terminal_kernel(self, j, k, grid, m):
        jj, kk = pop_index(j), pop_index(k)
        mj = m[jj]
        mbar_j = float(first_moment(mj, grid))
        mbar_k = float(first_moment(m[kk], grid))
        mass_j = float(mass(mj, grid))
        S = self.ST[jj, kk]
        coef = -S * self.QbarT[jj, kk] * (mbar_j - S * mbar_k * mass_j)
        return coef * grid.x

    def drift_affine(self, i, s):
        k = pop_index(i)
        return float(self.A[k]), float(self._mean_drift(k, s)), float(self.B[k])


# ---------------------------------------------------------------------------
# operations


def hamiltonian_eval(model, i, x, s, q):
    """H_i(x, m, q) for the summary ``s`` of the density pair."""
    return model.hamiltonian(i, x, s, q)


def optimal_control(model, i, x, s, q):
    """The minimizer of ``f_i + q g_i`` over controls."""
    return model.minimizer(i, x, s, q)


def check_hamiltonian_gradient(model, i, x, s, q, h=1e-5):
    """Compare the envelope-theorem dH/dq with a central difference.

    Returns ``(analytic, finite_difference, relative_error)`` where the
    relative error is ``|analytic - fd| / (1 + |analytic|)``.
    """
    if not h > 0:
        raise DomainError("finite-difference step must be positive")
    analytic = np.asarray(model.dhamiltonian_dq(i, x, s, q), dtype=float)
    q = np.asarray(q, dtype=float)
    fd = (model.hamiltonian(i, x, s, q + h) - model.hamiltonian(i, x, s, q - h)) / (2.0 * h)
    fd = np.asarray(fd, dtype=float)
    rel = np.abs(analytic - fd) / (1.0 + np.abs(analytic))
    if rel.ndim == 0:
        return float(analytic), float(fd), float(rel)
    return analytic, fd, rel
