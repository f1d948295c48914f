from __future__ import annotations

import csv
import math

import numpy as np
import pytest
import sympy as sp
from conftest import fd_derivative, rel_err

from jetprop.multiindex import total_basis
from jetprop.targets import (
    FourierTarget2D,
    circle_grid,
    disk_test_grid,
    export_csv,
    fourier2d_jet,
    helix_derivative,
    helix_jet,
    helix_parameters,
    phi_jet,
    poisson_analytic,
    poisson_analytic_jet,
    square_grid,
)


def _as_set(points):
    return {tuple(np.round(p, 12) + 0.0) for p in points.T}


def test_square_grid_counts():
    assert square_grid(27).shape == (2, 729)
    assert square_grid(95).shape == (2, 9025)
    assert _as_set(square_grid(2)) == {(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)}
    g = square_grid(27)
    assert g.min() == -1.0 and g.max() == 1.0
    with pytest.raises(ValueError):
        square_grid(1)


@pytest.mark.parametrize("spacing, count, tol", [(0.15, 157, 5), (0.125, 233, 10), (0.1, 352, 10), (0.052, 1210, 20)])
def test_circle_grid_counts(spacing, count, tol):
    assert abs(circle_grid(spacing).shape[1] - count) <= tol


def test_circle_grid_structure():
    g = circle_grid(0.15)
    r = np.hypot(*g)
    assert np.all(r <= 1 + 1e-12)
    assert np.sum(np.isclose(r, 1.0)) == 42
    assert len(_as_set(g)) == g.shape[1]
    small = circle_grid(1.0)
    assert (0.0, 0.0) in _as_set(small) and small.shape[1] < 10
    with pytest.raises(ValueError):
        circle_grid(0.0)


@pytest.mark.parametrize("points", [square_grid(27), circle_grid(0.15), circle_grid(0.052), disk_test_grid()])
def test_grids_are_point_symmetric(points):
    assert _as_set(points) == _as_set(-points)


def test_disk_test_grid_size():
    assert 7500 <= disk_test_grid().shape[1] <= 8500


def test_fourier_zero_and_single_term():
    zero = FourierTarget2D(np.zeros((4, 10, 10)))
    basis = total_basis(2, 3)
    t = fourier2d_jet(zero, square_grid(5), basis)
    assert not t.values.any()
    coef = np.zeros((4, 10, 10))
    coef[0, 0, 0] = 1.0
    f = FourierTarget2D(coef)
    origin = np.zeros((2, 1))
    assert f.derivative((1, 1), origin)[0] == pytest.approx(0.0, abs=1e-15)
    assert f.derivative((1, 0), origin)[0] == pytest.approx(1.0, abs=1e-16)
    pts = np.array([[0.3], [-0.8]])
    assert f.derivative((0, 1), pts)[0] == pytest.approx(-math.sin(0.3) * math.sin(-0.8), rel=1e-15)


def test_fourier_is_seeded_and_sized():
    a, b = FourierTarget2D.random(7), FourierTarget2D.random(7)
    assert a.n_parameters == 400
    assert np.array_equal(a.coefficients, b.coefficients)
    assert np.all(np.abs(a.coefficients) <= 1)
    with pytest.raises(ValueError):
        FourierTarget2D(np.zeros((3, 10, 10)))


def test_fourier_jet_matches_finite_differences(rng):
    target = FourierTarget2D.random(3)
    pts = rng.uniform(-1, 1, size=(2, 8))
    basis = total_basis(2, 3)
    jet = fourier2d_jet(target, pts, basis)
    f = lambda p: target(p)[None, :]  # noqa: E731
    for i, s in enumerate(basis.indices[1:], start=1):
        fd = fd_derivative(f, pts, s, {1: 1e-3, 2: 2e-3, 3: 4e-3}[sum(s)])
        assert rel_err(jet.values[i], fd) <= 1e-6, s


def test_fourier_high_orders_by_sympy():
    coef = np.zeros((4, 10, 10))
    coef[3, 2, 4] = 0.7  # cos(3x) sin(5y) / 15
    f = FourierTarget2D(coef)
    x, y = sp.symbols("x y")
    expr = sp.Rational(7, 10) * sp.cos(3 * x) * sp.sin(5 * y) / 15
    pts = np.array([[0.2, -0.9], [0.5, 0.4]])
    for s in [(5, 0), (3, 2), (1, 4)]:
        ref = sp.lambdify((x, y), sp.diff(expr, x, s[0], y, s[1]))(*pts)
        assert np.allclose(f.derivative(s, pts), ref, rtol=1e-13, atol=1e-12)


def test_helix():
    t = helix_parameters(64)
    assert t[0] == -2 * math.pi and t[-1] == 2 * math.pi and len(t) == 64
    assert np.allclose(np.diff(t), 4 * math.pi / 63)
    assert np.allclose(helix_derivative(np.array([0.0]), 1)[:, 0], [0, 1, 1 / math.pi])
    r = np.random.default_rng(0).uniform(-6, 6, 9)
    assert np.allclose(helix_derivative(r, 4)[0], np.cos(r), rtol=0, atol=1e-15)
    data = helix_jet(t, 3)
    assert data.inputs.shape == (3, 64)
    assert np.array_equal(data.target.values[0], data.inputs)
    assert np.array_equal(data.input_rule((2,)), data.target.values[2])
    # third component has vanishing higher derivatives and takes the fallback weight
    assert data.target.coefficients[2, 2] == 1.0 and data.target.coefficients[3, 2] == 1.0
    with pytest.raises(ValueError):
        helix_jet(t, 6)


def test_poisson_analytic_values():
    assert poisson_analytic(np.zeros((2, 1)))[0] == pytest.approx(-4 / 3)
    assert poisson_analytic(np.array([[1.0], [0.0]]))[0] == -2.0
    p = np.array([[0.3], [-0.4]])
    assert poisson_analytic(p)[0] == 4 / (0.09 + 0.16 - 3)


def test_analytic_jets_match_sympy():
    x, y = sp.symbols("x y")
    basis = total_basis(2, 5)
    pts = np.array([[0.0, 0.6, -0.3], [0.0, -0.5, 0.9]])
    for jet, expr in ((poisson_analytic_jet(pts, basis), 4 / (x ** 2 + y ** 2 - 3)),
                      (phi_jet(pts, basis), 1 - x ** 2 - y ** 2)):
        for a, b in basis:
            ref = sp.lambdify((x, y), sp.diff(expr, x, a, y, b) if a + b else expr)(*pts) * np.ones(3)
            assert np.allclose(jet[(a, b)][0], ref, rtol=1e-13, atol=1e-13), (a, b)


def test_export_csv(tmp_path, rng):
    basis = total_basis(2, 1)
    pts = rng.uniform(-1, 1, size=(2, 4))
    t = fourier2d_jet(FourierTarget2D.random(1), pts, basis)
    path = tmp_path / "fit.csv"
    export_csv(path, pts, t, ["x", "y"])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "y", "value", "d_x", "d_y"]
    assert len(rows) == 5
    assert float(rows[2][3]) == t.values[1, 0, 1]
    h = helix_jet(helix_parameters(3), 1)
    export_csv(tmp_path / "helix.csv", h.inputs, h.target)
    head = next(csv.reader(open(tmp_path / "helix.csv")))
    assert head[:3] == ["in0", "in1", "in2"] and "d_t_2" in head
