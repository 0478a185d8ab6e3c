"""Euler-Maruyama simulation of the two-population McKean-Vlasov dynamics.

The particles follow ``dX = g_i(X, law, v_i(X, t)) dt + sigma_i dW`` under a
frozen feedback ``v_i`` given on the PDE grid. The drift of every family is
affine in ``x`` and ``v`` once the measure summary is fixed, which lets the
inner loop run in the compiled kernel.

Random streams are keyed by ``(seed, population, step)``, so results do not
depend on how seeds are spread across threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from . import _kernels
from .errors import BlowUpError, DomainError, ParameterError
from .grid import normalize


@dataclass
class ParticleRun:
    """Per-step sample moments and optional position snapshots of one seed."""

    seed: int
    N: int
    t: np.ndarray
    moments: np.ndarray  # (nt + 1, 2, 2): [step, population, (mean, second moment)]
    snapshots: dict = field(default_factory=dict)  # step -> (2, N)

    def positions(self, step):
        try:
            return self.snapshots[step]
        except KeyError:
            raise DomainError(f"no snapshot stored for step {step}") from None


def _rng(seed, pop, step):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(pop), int(step)]))


def sample_initial(rho, grid, N, rng):
    """Exact inverse-CDF samples from the piecewise-linear interpolant of ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ParameterError("initial density must be non-negative")
    rho = normalize(rho, grid)
    dx = grid.dx
    cell = 0.5 * dx * (rho[:-1] + rho[1:])
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    cdf /= cdf[-1]
    u = rng.random(N)
    k = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.nx - 2)
    # rescale the remaining mass to the cell's un-normalized units
    r = (u - cdf[k]) * (cell.sum())
    a = rho[k]
    b = rho[k + 1]
    disc = np.sqrt(np.maximum(a * a + 2.0 * (b - a) * r / dx, 0.0))
    denom = a + disc
    s = np.where(denom > 0, 2.0 * r / np.where(denom > 0, denom, 1.0), 0.0)
    return grid.x[k] + np.clip(s, 0.0, dx)


def silverman_bandwidth(X):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    std = X.std(ddof=1)
    iqr = np.subtract(*np.percentile(X, [75, 25]))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 0.9 * spread * n ** (-0.2)


def kde(X, grid, bandwidth=None):
    """Gaussian KDE on the grid nodes, renormalized to unit trapezoid mass.

    The default bandwidth is Silverman's rule, floored at ``grid.dx``.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise DomainError("kde needs at least two particles")
    if bandwidth is None:
        h = silverman_bandwidth(X)
        h = max(h, grid.dx) if np.isfinite(h) else grid.dx
    else:
        h = float(bandwidth)
        if not h > 0:
            raise DomainError("bandwidth must be positive")
    std = X.std(ddof=1)
    if std > 0:
        dens = gaussian_kde(X, bw_method=h / std)(grid.x)
    else:
        dens = np.exp(-0.5 * ((grid.x - X[0]) / h) ** 2)
    return normalize(dens, grid)


def _summary(model, X, grid):
    if not model.drift_depends_on_measure:
        return None
    s = model.particle_summary(X[0], X[1])
    if s is None:
        s = model.summarize(kde(X[0], grid), kde(X[1], grid), grid)
    return s


def simulate(model, controls, rho0, N, seed, grid, snapshot_steps=(), check_every=1):
    """Simulate ``N`` particles per population with the grid's time step.

    ``controls`` has shape ``(2, nt + 1, nx)``; off-grid values are linear
    interpolants, extrapolated by the nearest end value.
    """
    if N < 2:
        raise DomainError("N must be >= 2")
    controls = np.asarray(controls, dtype=float)
    nt, nx = grid.nt, grid.nx
    if controls.shape != (2, nt + 1, nx):
        raise DomainError(f"controls must have shape {(2, nt + 1, nx)}")
    dt = grid.dt
    width = grid.x_max - grid.x_min
    lo, hi = grid.x_min - width, grid.x_max + width
    X = np.stack([sample_initial(rho0[k], grid, N, _rng(seed, k + 1, 0)) for k in range(2)])
    moments = np.empty((nt + 1, 2, 2))
    snaps = {}
    want = set(int(s) for s in snapshot_steps)

    def record(n):
        moments[n, :, 0] = X.mean(axis=1)
        moments[n, :, 1] = np.einsum("kp,kp->k", X, X) / N
        if n in want:
            snaps[n] = X.copy()

    record(0)
    for n in range(nt):
        s = _summary(model, X, grid)
        for k in range(2):
            alpha, beta, b = model.drift_affine(k + 1, s)
            sig = model.sigma[k]
            noise = _rng(seed, k + 1, n + 1).standard_normal(N) if sig > 0 else np.zeros(N)
            _kernels.em_step(X[k], controls[k, n], grid.x_min, grid.dx, alpha, beta, b, dt, sig * np.sqrt(dt), noise)
        if (n + 1) % check_every == 0 or n + 1 == nt:
            if not np.all(np.isfinite(X)) or X.min() < lo or X.max() > hi:
                raise BlowUpError("particle left the domain by more than one domain width", n + 1)
        record(n + 1)
    return ParticleRun(seed=int(seed), N=N, t=np.array(grid.t), moments=moments, snapshots=snaps)


def simulate_many(model, controls, rho0, N, seeds, grid, threads=1, snapshot_steps=()):
    """Run :func:`simulate` for each seed; results keep the order of ``seeds``."""
    seeds = list(seeds)

    def one(sd):
        return simulate(model, controls, rho0, N, sd, grid, snapshot_steps=snapshot_steps)

    if threads <= 1:
        return [one(sd) for sd in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seeds))


def pooled_moments(runs):
    """Mean over seeds and standard error (std over seeds / sqrt(#seeds))."""
    mom = np.stack([r.moments for r in runs])
    mean = mom.mean(axis=0)
    se = mom.std(axis=0, ddof=1) / np.sqrt(mom.shape[0])
    return mean, se
