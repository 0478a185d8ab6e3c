import numpy as np
import pytest

from mf2pop.errors import ParameterError
from mf2pop.grid import Grid1D, first_moment, l1_distance, mass, normalize, second_moment


@pytest.mark.parametrize(
    "args",
    [(1.0, 0.0, 11, 10, 1.0), (0.0, 1.0, 2, 10, 1.0), (0.0, 1.0, 11, 0, 1.0), (0.0, 1.0, 11, 10, 0.0), (0.0, 1.0, 10.5, 10, 1.0)],
)
def test_invalid_grid(args):
    with pytest.raises(ParameterError):
        Grid1D(*args)


def test_nodes_and_weights():
    g = Grid1D(0.0, 1.0, 11, 4, 2.0)
    assert g.dx == pytest.approx(0.1) and g.dt == 0.5
    assert g.x[-1] == 1.0 and g.t[-1] == 2.0
    assert g.weights.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        g.x[0] = 5.0


def test_moment_examples():
    g = Grid1D(0.0, 1.0, 101, 1, 1.0)
    u = np.ones(g.nx)
    assert mass(u, g) == pytest.approx(1.0, abs=1e-14)
    assert first_moment(u, g) == pytest.approx(0.5, abs=1e-14)
    hat = 1.0 - np.abs(2.0 * g.x - 1.0)
    assert mass(hat, g) == pytest.approx(0.5, abs=1e-14)
    assert first_moment(hat, g) / mass(hat, g) == pytest.approx(0.5, abs=1e-14)


def test_gaussian_moments():
    g = Grid1D(-8.0, 8.0, 801, 1, 1.0)
    rho = normalize(np.exp(-0.5 * ((g.x - 0.7) / 0.9) ** 2), g)
    assert mass(rho, g) == pytest.approx(1.0, abs=1e-14)
    assert first_moment(rho, g) == pytest.approx(0.7, abs=1e-10)
    assert second_moment(rho, g) - 0.7**2 == pytest.approx(0.81, abs=1e-8)


def test_l1_and_normalize_errors():
    g = Grid1D(0.0, 1.0, 11, 1, 1.0)
    assert l1_distance(np.ones(11), np.ones(11), g) == 0.0
    with pytest.raises(ParameterError):
        normalize(np.zeros(11), g)


def test_same_as():
    assert Grid1D(0.0, 1.0, 11, 4, 1.0).same_as(Grid1D(0.0, 1.0, 11, 4, 1.0))
    assert not Grid1D(0.0, 1.0, 11, 4, 1.0).same_as(Grid1D(0.0, 1.0, 21, 4, 1.0))
