import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from mf2pop.errors import DomainError, ParameterError
from mf2pop.grid import Grid1D, mass
from mf2pop.lq import LQParams
from mf2pop.model import (
    CrowdParams,
    LocalLW,
    LQFamily,
    NonlocalAD,
    ProblemKind,
    check_hamiltonian_gradient,
    crowd_family,
    hamiltonian_eval,
    mollified_ball_kernel,
    optimal_control,
)

finite = st.floats(-5, 5, allow_nan=False)
GRID = Grid1D(-2.0, 2.0, 81, 10, 1.0)


def local(lam=0.5):
    return LocalLW(CrowdParams(lam=lam, sigma=0.4))


def nonlocal_model(Lambda=((1.0, 0.5), (0.25, 1.0))):
    return NonlocalAD(CrowdParams(sigma=0.4, variant="nonlocal_ad", Lambda=Lambda, radius=0.3, delta=0.1), GRID)


def lq_scalar(**kw):
    base = dict(A=0.0, Abar=0.0, B=1.0, R=1.0, Q=1.0, Qbar=0.0, S=0.0, sigma=0.3)
    base.update(kw)
    return LQFamily(LQParams.create(**base))


def lq_generic():
    return lq_scalar(A=0.3, Abar=[[0.2, -0.1], [0.15, 0.05]], B=1.5, R=2.0, Q=0.5, Qbar=0.4, S=0.3)


# ---------------------------------------------------------------------------
# examples


def test_local_hamiltonian_example():
    assert hamiltonian_eval(local(0.5), 1, 0.0, (0.2, 0.1), 1.0) == pytest.approx(-0.25, abs=1e-15)


def test_lq_hamiltonian_example():
    assert hamiltonian_eval(lq_scalar(), 1, 2.0, (0.0, 0.0), 3.0) == pytest.approx(-2.5, abs=1e-14)


def test_zero_costate_gives_running_cost_at_minimizer():
    m = local(0.7)
    s = (0.3, 0.4)
    v0 = optimal_control(m, 2, 0.5, s, 0.0)
    assert v0 == 0.0
    assert hamiltonian_eval(m, 2, 0.5, s, 0.0) == pytest.approx(m.running_cost(2, 0.5, s, v0))


def test_optimal_control_examples():
    assert optimal_control(local(), 1, 0.0, (0.0, 0.0), 3.0) == -3.0
    assert optimal_control(lq_scalar(R=2.0), 1, 0.0, (0.0, 0.0), 4.0) == pytest.approx(-2.0)


def test_gradient_check_examples():
    a, fd, rel = check_hamiltonian_gradient(local(), 1, 0.0, (0.2, 0.1), 1.0, h=1e-5)
    assert a == -1.0 and fd == pytest.approx(-1.0, abs=1e-9) and rel < 1e-8
    m = lq_generic()
    s = (0.4, -0.2)
    a, fd, rel = check_hamiltonian_gradient(m, 1, 1.3, s, 3.0)
    expected = 0.3 * 1.3 + (0.2 * 0.4 - 0.1 * -0.2) - (1.5**2 / 2.0) * 3.0
    assert a == pytest.approx(expected, rel=1e-14)
    assert rel < 1e-6


def test_gradient_check_rejects_bad_step():
    with pytest.raises(DomainError):
        check_hamiltonian_gradient(local(), 1, 0.0, (0.0, 0.0), 1.0, h=0.0)


def test_unknown_population_is_domain_error():
    with pytest.raises(DomainError):
        hamiltonian_eval(local(), 3, 0.0, (0.0, 0.0), 1.0)
    with pytest.raises(DomainError):
        optimal_control(lq_scalar(), 0, 0.0, (0.0, 0.0), 1.0)


def test_problem_kind_parse():
    assert ProblemKind.parse("NMFG") is ProblemKind.MFG
    assert ProblemKind.parse("cmfg") is ProblemKind.MFG
    assert ProblemKind.parse("nmfc-sc2") is ProblemKind.NMFC_SC2
    with pytest.raises(DomainError):
        ProblemKind.parse("nash")


# ---------------------------------------------------------------------------
# construction errors


@pytest.mark.parametrize(
    "kw",
    [
        dict(lam=-0.1),
        dict(sigma=0.0),
        dict(variant="other"),
        dict(variant="nonlocal_ad", Lambda=((1, -1), (0, 1)), radius=0.3, delta=0.1),
        dict(variant="nonlocal_ad", Lambda=((1, 0), (0, 1)), radius=0.0, delta=0.1),
        dict(variant="nonlocal_ad", Lambda=((1, 0), (0, 1)), radius=0.3, delta=-1.0),
    ],
)
def test_crowd_params_validation(kw):
    with pytest.raises(ParameterError):
        CrowdParams(**kw)


def test_singular_R_rejected_at_construction():
    with pytest.raises(ParameterError):
        LQParams.create(R=0.0)


def test_lq_family_requires_scalar_state():
    with pytest.raises(ParameterError):
        LQFamily(LQParams.create(n=2, d=1, B=[[[1.0], [0.0]], [[1.0], [0.0]]], sigma=0.1))


def test_nonlocal_needs_grid():
    with pytest.raises(ParameterError):
        crowd_family(CrowdParams(variant="nonlocal_ad", Lambda=((1, 0), (0, 1)), radius=0.3, delta=0.1))


# ---------------------------------------------------------------------------
# properties


FAMILIES = {"local": local(), "nonlocal": nonlocal_model(), "lq": lq_generic()}


@settings(max_examples=60, deadline=None)
@given(
    name=st.sampled_from(sorted(FAMILIES)),
    i=st.sampled_from([1, 2]),
    x=finite,
    s1=st.floats(0, 2),
    s2=st.floats(0, 2),
    q=finite,
    v=finite,
)
def test_hamiltonian_is_inf_and_attained(name, i, x, s1, s2, q, v):
    m = FAMILIES[name]
    s = (s1, s2)
    H = m.hamiltonian(i, x, s, q)
    vhat = m.minimizer(i, x, s, q)
    attained = m.running_cost(i, x, s, vhat) + q * m.drift(i, x, s, vhat)
    assert H == pytest.approx(attained, rel=1e-12, abs=1e-12)
    assert m.running_cost(i, x, s, v) + q * m.drift(i, x, s, v) >= H - 1e-12


def test_minimizer_optimal_against_many_probes():
    rng = np.random.default_rng(1)
    for m in FAMILIES.values():
        for _ in range(10):
            i = int(rng.integers(1, 3))
            x, q = rng.uniform(-3, 3), rng.uniform(-4, 4)
            s = tuple(rng.uniform(0, 1, 2))
            v = rng.uniform(-10, 10, 1000)
            vals = m.running_cost(i, x, s, v) + q * m.drift(i, x, s, v)
            assert vals.min() >= m.hamiltonian(i, x, s, q) - 1e-12


@settings(max_examples=50, deadline=None)
@given(name=st.sampled_from(sorted(FAMILIES)), x=finite, q=finite, s1=st.floats(0, 2), s2=st.floats(0, 2))
def test_envelope_property(name, x, q, s1, s2):
    _, _, rel = check_hamiltonian_gradient(FAMILIES[name], 1, x, (s1, s2), q, h=1e-5)
    assert rel <= 1e-6


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(0, 3), dlam=st.floats(0.01, 1), q=finite)
def test_congestion_monotone_in_lambda(lam, dlam, q):
    s = (0.3, 0.2)
    assert local(lam + dlam).hamiltonian(1, 0.0, s, q) > local(lam).hamiltonian(1, 0.0, s, q)


# ---------------------------------------------------------------------------
# coupling kernels


def _gauss(c, w):
    rho = np.exp(-0.5 * ((GRID.x - c) / w) ** 2)
    return rho / mass(rho, GRID)


def test_local_coupling_matches_delta_quadrature():
    """The Dirac kernel integrated with trapezoid weights reproduces the pointwise closed form."""
    lam = 0.4
    m = local(lam)
    dens = (_gauss(-0.3, 0.4), _gauss(0.5, 0.3))
    w = GRID.weights
    for j in (1, 2):
        for k in (1, 2):
            weight = 1.0 if j == k else lam
            # discrete delta at node l: 1/w_l, so sum_xi weight * delta_l(xi) m_j(xi) w(xi)
            direct = np.array([weight * (1.0 / w[l]) * dens[j - 1][l] * w[l] for l in range(GRID.nx)])
            np.testing.assert_allclose(m.hamiltonian_kernel(j, k, GRID, dens, None), direct, rtol=1e-14)
    assert np.allclose(m.coupling_self(1, GRID, dens, None), dens[0])
    assert np.allclose(m.coupling_cross(1, GRID, dens, None), lam * dens[1])


def test_mollified_kernel_properties():
    offs = np.linspace(-1, 1, 401)
    phi = mollified_ball_kernel(offs, 0.3, 0.1)
    assert np.all(phi >= 0)
    np.testing.assert_allclose(phi, phi[::-1], atol=1e-15)
    # unit mass, flat top 1/(2r) away from the edges
    assert trapezoid(phi, offs) == pytest.approx(1.0, abs=1e-6)
    assert phi[200] == pytest.approx(1 / 0.6, rel=1e-12)
    assert phi[0] == 0.0


def test_nonlocal_symmetry_and_kernel():
    m = nonlocal_model()
    rng = np.random.default_rng(3)
    for _ in range(5):
        dens = rng.random(GRID.nx)
        assert m.symmetry_defect(dens) <= 1e-12
    dens = (_gauss(-0.3, 0.4), _gauss(0.5, 0.3))
    k = m.hamiltonian_kernel(2, 1, GRID, dens, None)
    np.testing.assert_allclose(k, 0.25 * m.convolve(dens[1]), atol=1e-14)


def test_nonlocal_rejects_foreign_grid():
    m = nonlocal_model()
    other = Grid1D(-2.0, 2.0, 41, 10, 1.0)
    with pytest.raises(DomainError):
        m.summarize(np.ones(41), np.ones(41), other)


def test_lq_kernels_depend_on_first_moments():
    m = lq_generic()
    dens = (_gauss(-0.3, 0.4), _gauss(0.5, 0.3))
    du = (0.7 * GRID.x + 0.1, -0.2 * GRID.x)
    k = m.hamiltonian_kernel(1, 2, GRID, dens, du)
    mb = [float(np.sum(GRID.weights * GRID.x * d)) for d in dens]
    p1 = float(np.sum(GRID.weights * du[0] * dens[0]))
    coef = p1 * -0.1 - 0.3 * 0.4 * (mb[0] - 0.3 * mb[1])
    np.testing.assert_allclose(k, coef * GRID.x, atol=1e-13)
    assert m.cross_drift
    assert not lq_scalar().cross_drift
