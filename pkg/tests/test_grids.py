import numpy as np
import pytest

from tcmerton.errors import GridError, IntegrityError
from tcmerton.grids import (Grid, ScalarField2D, deriv_y, deriv_yy)
from tcmerton.model import CRRAUtility, MarketModel


def test_regular_grid_properties():
    g = Grid.regular(1.0, -2.0, 2.0, 11, 21)
    assert g.T == 1.0
    assert g.n_t == 11 and g.n_y == 21
    assert g.dt == pytest.approx(0.1)
    assert g.dy == pytest.approx(0.2)


def test_grid_validation():
    with pytest.raises(GridError):
        Grid.regular(1.0, 2.0, -2.0, 11, 21)  # reversed y-range
    with pytest.raises(GridError):
        Grid.regular(1.0, -2.0, 2.0, 2, 21)   # too few t nodes
    with pytest.raises(GridError):
        Grid.regular(1.0, -2.0, 2.0, 11, 4)   # too few y nodes
    with pytest.raises(GridError):
        Grid(np.array([0.1, 0.5, 1.0]), np.linspace(-1, 1, 5))  # t0 != 0
    with pytest.raises(GridError):
        Grid(np.array([0.0, 0.3, 1.0]), np.linspace(-1, 1, 5))  # nonuniform


def test_for_wealth_range_covers_requested_interval():
    m = MarketModel(r=0.03, mu=0.09, sigma=0.2, T=1.0)
    u = CRRAUtility(gamma=0.5)
    g = Grid.for_wealth_range(m, u, 0.5, 2.0, 11, 51)
    assert g.y_nodes[0] < np.log(u.Uprime(2.0)) < g.y_nodes[-1]
    assert g.y_nodes[0] < np.log(u.Uprime(0.5)) < g.y_nodes[-1]


def test_deriv_y_exact_on_quartic():
    # interior central and edge-biased first-derivative stencils are
    # exact through degree 4
    y = np.linspace(-1, 2, 17)
    v = 2.0 + y - 0.5 * y ** 2 + 0.25 * y ** 3 - 0.1 * y ** 4
    ref = 1.0 - y + 0.75 * y ** 2 - 0.4 * y ** 3
    got = deriv_y(v, y[1] - y[0])
    assert np.max(np.abs(got - ref)) < 1e-11


def test_deriv_yy_exact_on_cubic():
    y = np.linspace(-1, 2, 17)
    v = 2.0 + y - 0.5 * y ** 2 + 0.25 * y ** 3
    ref = -1.0 + 1.5 * y
    got = deriv_yy(v, y[1] - y[0])
    assert np.max(np.abs(got - ref)) < 1e-11


def test_deriv_convergence_rate_on_sine():
    errs = []
    for n in (41, 81):
        y = np.linspace(0, np.pi, n)
        e1 = np.max(np.abs(deriv_y(np.sin(y), y[1] - y[0]) - np.cos(y)))
        errs.append(e1)
    # 4th-order interior, at least 3rd-order edges
    assert errs[0] / errs[1] > 7.0


def test_deriv_along_last_axis_of_matrix():
    y = np.linspace(0, 1, 9)
    V = np.vstack([y ** 2, 3 * y ** 2])
    got = deriv_y(V, y[1] - y[0])
    assert np.allclose(got[0], 2 * y, atol=1e-12)
    assert np.allclose(got[1], 6 * y, atol=1e-12)


def test_field_shape_and_finiteness():
    g = Grid.regular(1.0, -1.0, 1.0, 5, 7)
    with pytest.raises(GridError):
        ScalarField2D(g, np.zeros((5, 6)))
    bad = np.zeros((5, 7))
    bad[2, 3] = np.nan
    with pytest.raises(IntegrityError):
        ScalarField2D(g, bad)


def test_bilinear_interpolation_exact_on_bilinear_function():
    g = Grid.regular(1.0, -1.0, 1.0, 11, 11)
    f = ScalarField2D.from_function(g, lambda t, y: 2 + 3 * t - y + 0.5 * t * y)
    rng = np.random.default_rng(1)
    t = rng.uniform(0, 1, 40)
    y = rng.uniform(-1, 1, 40)
    ref = 2 + 3 * t - y + 0.5 * t * y
    assert np.max(np.abs(f(t, y) - ref)) < 1e-12


def test_bilinear_clamps_outside_box():
    g = Grid.regular(1.0, -1.0, 1.0, 5, 5)
    f = ScalarField2D.from_function(g, lambda t, y: y)
    assert f(0.5, 5.0) == pytest.approx(1.0)
    assert f(0.5, -5.0) == pytest.approx(-1.0)
    assert f(2.0, 0.0) == pytest.approx(0.0)


def test_field_constant_and_derivatives():
    g = Grid.regular(1.0, -1.0, 1.0, 5, 9)
    f = ScalarField2D.constant(g, 3.0)
    assert np.all(f.values == 3.0)
    assert np.max(np.abs(f.d_dy().values)) < 1e-12
    assert np.max(np.abs(f.d2_dy2().values)) < 1e-12
