import numpy as np
import pytest

from mf2pop.coupled import SolveConfig, extract_controls, pde_residuals, residual, solve_system
from mf2pop.errors import DomainError, ParameterError
from mf2pop.grid import Grid1D, normalize
from mf2pop.model import CrowdParams, LocalLW, optimal_control

G = Grid1D(-3.0, 3.0, 61, 20, 0.5)


def gauss(c, w=0.3):
    return normalize(np.exp(-0.5 * ((G.x - c) / w) ** 2), G)


def traj(rho):
    return np.broadcast_to(rho, (2, G.nt + 1, G.nx)).copy()


def model(lam=0.6):
    psi = (lambda x: 0.5 * (x - 0.5) ** 2, lambda x: 0.5 * (x + 0.5) ** 2)
    return LocalLW(CrowdParams(lam=lam, sigma=0.4, terminal=psi))


RHO0 = (gauss(-0.8), gauss(0.8))


def test_residual_examples():
    a = traj(gauss(0.0))
    assert residual(a, a, G) == 0.0
    b = a.copy()
    b[1, 5] += 1.0  # a unit bump over the domain of length 6
    assert residual(a, b, G) == pytest.approx(6.0)
    g = Grid1D(0.0, 4.0, 401, 1, 1.0)
    hat = np.maximum(0.0, 1.0 - np.abs(g.x - 1.0))
    shifted = np.maximum(0.0, 1.0 - np.abs(g.x - 3.0))
    pa, pb = np.stack([hat, hat])[:, None], np.stack([shifted, shifted])[:, None]
    assert residual(pa, pb, g) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(DomainError):
        residual(a, a[:, :-1], G)


@pytest.mark.parametrize("kw", [dict(damping=0.0), dict(damping=1.5), dict(tol=0.0), dict(max_iters=0)])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        SolveConfig(**kw)


def test_returns_unconverged_after_max_iters():
    sol = solve_system("MFG", model(), RHO0, G, SolveConfig(max_iters=1))
    assert not sol.converged and sol.iterations == 1
    assert len(sol.residual_history) == 1


def test_converges_with_consistent_outputs():
    m = model()
    history = []
    sol = solve_system("CMFC", m, RHO0, G, SolveConfig(tol=1e-9), callback=lambda k, r: history.append(r))
    assert sol.converged and sol.final_residual <= 1e-9
    assert history == sol.residual_history
    res = pde_residuals(sol, m, G)
    assert res["fp"] <= 1e-9 and res["hjb"] <= 1e-9
    np.testing.assert_allclose(sol.controls, extract_controls(sol.u, sol.m.values, m, G))
    # controls are the minimizer of the Hamiltonian at the computed gradient
    du = np.gradient(sol.u[1][3], G.dx, edge_order=1)
    s = (sol.m.values[0, 3], sol.m.values[1, 3])
    np.testing.assert_allclose(sol.controls[0, 3], optimal_control(m, 1, G.x, s, du))


def test_warm_start_reuses_solution():
    m = model()
    cold = solve_system("MFG", m, RHO0, G, SolveConfig(tol=1e-9))
    warm = solve_system("MFG", m, RHO0, G, SolveConfig(tol=1e-9, warm_start=cold.m.values))
    assert warm.warm_started and warm.iterations <= 2
    assert residual(warm.m, cold.m, G) <= 1e-8
    with pytest.raises(DomainError):
        solve_system("MFG", m, RHO0, G, SolveConfig(warm_start=np.zeros((2, 3, 3))))


def test_regimes_differ():
    m = model()
    a = solve_system("MFG", m, RHO0, G, SolveConfig(tol=1e-9))
    b = solve_system("CMFC", m, RHO0, G, SolveConfig(tol=1e-9))
    assert residual(a.m, b.m, G) > 1e-4
