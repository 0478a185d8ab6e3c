"""Acceptance gate: one test per criterion, summarized at the end of the pytest run."""

import time

import numpy as np
import pytest

from mf2pop.coupled import SolveConfig, pde_residuals, solve_system
from mf2pop.fp import solve_fp
from mf2pop.grid import Grid1D, first_moment, mass
from mf2pop.lq import LQParams, integrate_lq, riccati_residual
from mf2pop.model import CrowdParams, LocalLW, LQFamily, NonlocalAD, check_hamiltonian_gradient
from mf2pop.runner import lq_value_error, moment_zscores, solution_distance
from mf2pop.particles import simulate_many
from mf2pop.scenario import Scenario

TANH1 = 0.7615941559557649
TOL = 1e-7


def fmt(v):
    return f"{v:.3g}"


@pytest.fixture(scope="module")
def crowd_grid():
    return Grid1D(-3.0, 3.0, 201, 200, 0.5)


def _gauss(grid, c, w):
    rho = np.exp(-0.5 * ((grid.x - c) / w) ** 2)
    return rho / mass(rho, grid)


def _psi():
    return (lambda x: 0.5 * (x - 0.5) ** 2, lambda x: 0.5 * (x + 0.5) ** 2)


@pytest.fixture(scope="module")
def crowd_rho(crowd_grid):
    return (_gauss(crowd_grid, -0.8, 0.3), _gauss(crowd_grid, 0.8, 0.3))


@pytest.fixture(scope="module")
def crowd_solutions(crowd_grid, crowd_rho):
    out = {}
    for key, kind, lam in [("nmfc", "NMFC_SC2", 0.6), ("cmfc", "CMFC", 0.3), ("mfg", "MFG", 0.6)]:
        model = LocalLW(CrowdParams(lam=lam, sigma=0.4, terminal=_psi()))
        out[key] = (model, solve_system(kind, model, crowd_rho, crowd_grid, SolveConfig(tol=TOL)))
    return out


def lq_params(grid, rho):
    return LQParams.create(
        A=0.1,
        Abar=[[0.05, 0.0], [0.0, 0.05]],
        B=1.0,
        R=1.0,
        Q=0.5,
        Qbar=0.5,
        S=0.2,
        QT=0.5,
        QbarT=0.5,
        ST=0.2,
        sigma=0.3,
        T=grid.T,
        mbar0=[first_moment(r, grid) for r in rho],
    )


@pytest.fixture(scope="module")
def lq_case():
    grid = Grid1D(-3.0, 3.0, 401, 500, 0.5)
    rho = (_gauss(grid, -0.5, 0.4), _gauss(grid, 0.7, 0.4))
    params = lq_params(grid, rho)
    model = LQFamily(params)
    t0 = time.perf_counter()
    sol = solve_system("CMFC", model, rho, grid, SolveConfig(tol=TOL))
    state = integrate_lq("CMFC", params, 1000)
    elapsed = time.perf_counter() - t0
    return grid, rho, params, model, sol, state, elapsed


@pytest.mark.acceptance(criterion=1, title="FP mass conservation, T=1, nx=401, nt=2000, < 5 s per solve")
def test_c1_mass_conservation(record_property):
    grid = Grid1D(-4.0, 4.0, 401, 2000, 1.0)
    rho = (_gauss(grid, -1.0, 0.5), _gauss(grid, 1.0, 0.3))
    model = LocalLW(CrowdParams(lam=0.5, sigma=0.5))
    # a bounded, spatially varying feedback exercising both flux branches
    v = np.broadcast_to(-np.tanh(2.0 * grid.x) * (1.0 + 0.5 * np.sin(3 * grid.t))[:, None], (grid.nt + 1, grid.nx))
    controls = np.stack([v, 0.7 * v])
    t0 = time.perf_counter()
    field = solve_fp(rho, controls, model, grid)
    elapsed = time.perf_counter() - t0
    defect = float(np.max(np.abs(mass(field.values, grid) - 1.0)))
    record_property("mass_defect", fmt(defect))
    record_property("seconds", fmt(elapsed))
    assert defect <= 1e-8
    assert field.values.min() >= 0.0
    assert elapsed < 5.0


@pytest.mark.acceptance(criterion=2, title="LQ CMFC PDE value vs Riccati reconstruction, <= 2% on central 80%")
def test_c2_lq_cross_check(lq_case, record_property):
    grid, _, _, _, sol, state, elapsed = lq_case
    err = lq_value_error(sol, state, grid)
    record_property("rel_error", fmt(err))
    record_property("seconds", fmt(elapsed))
    assert sol.converged
    assert err <= 0.02
    assert elapsed < 120.0


@pytest.mark.acceptance(criterion=3, title="tanh closed form P(0) to 1e-8 at nt=1000, RK4 order >= 14x")
def test_c3_riccati_closed_form(record_property):
    p = LQParams.create(Q=1.0, sigma=0.3, T=1.0, mbar0=[1.0, -0.5])
    err = {}
    for nt in (10, 20, 40, 1000):
        st = integrate_lq("CMFC", p, nt)
        err[nt] = abs(st.P[0, 0, 0, 0] - TANH1)
    ratios = (err[10] / err[20], err[20] / err[40])
    record_property("err_nt1000", fmt(err[1000]))
    record_property("ratios", "/".join(fmt(r) for r in ratios))
    assert err[1000] <= 1e-8
    assert min(ratios) >= 14.0


@pytest.mark.acceptance(criterion=4, title="CMFC K symmetric, CMFG K differs, nu-relation in both regimes")
def test_c4_symmetric_vs_nonsymmetric(lq_case, record_property):
    _, _, params, _, _, cmfc, _ = lq_case
    cmfg = integrate_lq("CMFG", params, 1000)
    sym = cmfc.symmetry_defect()
    res = riccati_residual("CMFC", params, cmfc.K)
    res_g = riccati_residual("CMFG", params, cmfg.K)
    diff = float(np.max(np.abs(cmfc.K - cmfg.K)))
    nu = max(cmfc.nu_relation_residual, cmfg.nu_relation_residual)
    record_property("K_sym", fmt(sym))
    record_property("residual", fmt(max(res, res_g)))
    record_property("K_diff", fmt(diff))
    record_property("nu_rel", fmt(nu))
    assert sym <= 1e-8
    assert res <= 1e-6 and res_g <= 1e-6
    assert diff > 1e-3
    assert nu <= 1e-6


@pytest.mark.acceptance(criterion=5, title="NMFC(0.6) == CMFC(0.3) within 2 tol; MFG(0.6) differs by > 10 tol")
def test_c5_lambda_rescaling(crowd_solutions, record_property):
    nm, cm, mf = (crowd_solutions[k][1] for k in ("nmfc", "cmfc", "mfg"))
    assert nm.converged and cm.converged and mf.converged
    dm, du = solution_distance(nm, cm)
    far = min(max(solution_distance(mf, nm)), max(solution_distance(mf, cm)))
    record_property("equiv_m", fmt(dm))
    record_property("equiv_u", fmt(du))
    record_property("mfg_gap", fmt(far))
    assert dm <= 2 * TOL and du <= 2 * TOL
    assert far > 10 * TOL


def _single_runs(kind, make_model, rho, grid, iterations):
    # the same solver on the pairs (rho_i, rho_i), forced to the same sweep count
    cfg = SolveConfig(tol=1e-300, max_iters=iterations)
    return [solve_system(kind, make_model(), (r, r), grid, cfg) for r in rho]


@pytest.mark.acceptance(criterion=6, title="lambda=0 / diagonal Lambda reproduce independent single solves")
def test_c6_decoupling(crowd_grid, crowd_rho, record_property):
    worst = 0.0
    cases = [
        ("CMFC", lambda: LocalLW(CrowdParams(lam=0.0, sigma=0.4, terminal=_psi()))),
        ("MFG", lambda: LocalLW(CrowdParams(lam=0.0, sigma=0.4, terminal=_psi()))),
        (
            "CMFC",
            lambda: NonlocalAD(
                CrowdParams(
                    sigma=0.4,
                    variant="nonlocal_ad",
                    Lambda=((1.0, 0.0), (0.0, 0.7)),
                    radius=0.3,
                    delta=0.1,
                    terminal=_psi(),
                ),
                crowd_grid,
            ),
        ),
    ]
    for kind, make in cases:
        joint = solve_system(kind, make(), crowd_rho, crowd_grid, SolveConfig(tol=TOL))
        singles = _single_runs(kind, make, crowd_rho, crowd_grid, joint.iterations)
        for k in range(2):
            worst = max(
                worst,
                float(np.max(np.abs(joint.m.values[k] - singles[k].m.values[k]))),
                float(np.max(np.abs(joint.u[k + 1] - singles[k].u[k + 1]))),
            )
    record_property("max_node_diff", fmt(worst))
    assert worst <= 1e-12


@pytest.mark.acceptance(criterion=7, title="envelope dH/dq vs central differences at 100 probes per family")
def test_c7_gradient_checks(crowd_grid, record_property):
    rng = np.random.default_rng(7)
    nonlocal_model = NonlocalAD(
        CrowdParams(sigma=0.4, variant="nonlocal_ad", Lambda=((1.0, 0.4), (0.3, 1.0)), radius=0.3, delta=0.1),
        crowd_grid,
    )
    lq = LQFamily(
        LQParams.create(A=0.3, Abar=[[0.2, -0.1], [0.15, 0.05]], B=1.5, R=2.0, Q=0.5, Qbar=0.4, S=0.3, sigma=0.3)
    )
    families = {"local_lw": LocalLW(CrowdParams(lam=0.5, sigma=0.4)), "nonlocal_ad": nonlocal_model, "lq": lq}
    worst = 0.0
    for name, model in families.items():
        for _ in range(100):
            i = int(rng.integers(1, 3))
            x = rng.uniform(-3, 3)
            q = rng.uniform(-5, 5)
            s = tuple(rng.uniform(0, 2, 2)) if name != "lq" else tuple(rng.uniform(-1, 1, 2))
            _, _, rel = check_hamiltonian_gradient(model, i, x, s, q, h=1e-5)
            worst = max(worst, rel)
    record_property("max_rel_error", fmt(worst))
    assert worst <= 1e-6


def _particle_case(scn_name):
    scn = Scenario.load(scn_name)
    model = scn.model()
    sol = solve_system(scn.kind, model, scn.rho0, scn.grid, scn.solve)
    spec = scn.config["particles"]
    runs = simulate_many(model, sol.controls, scn.rho0, spec["N"], range(spec["seed"], spec["seed"] + spec["seeds"]), scn.grid)
    _, _, z = moment_zscores(runs, sol, scn.grid)
    return sol, spec, z


@pytest.mark.slow
@pytest.mark.acceptance(criterion=8, title="particle vs FP moments within 3 SE, N=5e4, 20 seeds, < 3 min")
def test_c8_particle_validation(record_property):
    t0 = time.perf_counter()
    zmax = {}
    for name in ("lq_particles", "lw_particles"):
        sol, spec, z = _particle_case(name)
        assert sol.converged
        assert spec["N"] == 50_000 and spec["seeds"] == 20
        zmax[name] = float(np.max(z[1:]))
    elapsed = time.perf_counter() - t0
    for k, v in zmax.items():
        record_property(f"max_z_{k}", fmt(v))
    record_property("seconds", fmt(elapsed))
    assert max(zmax.values()) <= 3.0
    assert elapsed < 180.0


@pytest.mark.acceptance(criterion=9, title="nonlocal kernel symmetry <= 1e-12 and CMFC/NMFC identification")
def test_c9_nonlocal_symmetry(crowd_grid, crowd_rho, record_property):
    Lam = np.array([[1.0, 0.6], [0.6, 0.8]])
    base = dict(sigma=0.4, variant="nonlocal_ad", radius=0.3, delta=0.1, terminal=_psi())
    nmfc_model = NonlocalAD(CrowdParams(Lambda=tuple(map(tuple, Lam)), **base), crowd_grid)
    half = Lam.copy()
    half[0, 1] *= 0.5
    half[1, 0] *= 0.5
    cmfc_model = NonlocalAD(CrowdParams(Lambda=tuple(map(tuple, half)), **base), crowd_grid)
    rng = np.random.default_rng(9)
    defect = max(nmfc_model.symmetry_defect(m) for m in [*crowd_rho, *rng.random((5, crowd_grid.nx))])
    a = solve_system("NMFC_SC2", nmfc_model, crowd_rho, crowd_grid, SolveConfig(tol=TOL))
    b = solve_system("CMFC", cmfc_model, crowd_rho, crowd_grid, SolveConfig(tol=TOL))
    dm, du = solution_distance(a, b)
    record_property("symmetry_defect", fmt(defect))
    record_property("identification", fmt(max(dm, du)))
    assert defect <= 1e-12
    assert max(dm, du) <= 2 * TOL


@pytest.mark.acceptance(criterion=10, title="discrete FP and HJB residuals <= 10 tol for converged solutions")
def test_c10_discrete_residuals(crowd_solutions, lq_case, crowd_grid, record_property):
    grid_lq, _, _, lq_model, lq_sol, _, _ = lq_case
    cases = [(m, s, crowd_grid) for m, s in crowd_solutions.values()] + [(lq_model, lq_sol, grid_lq)]
    worst = 0.0
    for model, sol, grid in cases:
        assert sol.converged
        res = pde_residuals(sol, model, grid)
        worst = max(worst, res["fp"], res["hjb"])
    record_property("max_residual", fmt(worst))
    assert worst <= 10 * TOL
