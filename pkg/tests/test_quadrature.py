"""Quadrature rules: exactness degrees, symmetries, grid plumbing."""

import logging

import numpy as np
import pytest

from relkin.quadrature import (
    MomentumGrid,
    gauss_legendre,
    sinh_stretched_axis,
    spherical_grid,
    uniform_periodic,
    unit_sphere_rule,
)


def test_gauss_legendre_polynomial_exactness():
    x, w = gauss_legendre(6, 0.0, 2.0)
    for k in range(12):  # exact through degree 2n-1
        assert abs(w @ x**k - 2.0 ** (k + 1) / (k + 1)) <= 1e-12 * 2.0 ** (k + 1)


def test_uniform_periodic_trig_exactness():
    x, w = uniform_periodic(8)
    for k in range(1, 8):
        assert abs(w @ np.cos(k * x)) <= 1e-12
        assert abs(w @ np.sin(k * x)) <= 1e-12
    assert abs(w.sum() - 2.0 * np.pi) <= 1e-14


def test_sinh_axis_symmetry_and_weight_sum():
    p, w = sinh_stretched_axis(12, 8.0, kappa=2.2)
    assert np.allclose(p, -p[::-1])
    assert np.allclose(w, w[::-1])
    assert abs(w.sum() - 16.0) <= 1e-12
    assert 0.0 not in p
    # stretching actually concentrates nodes near the origin
    assert np.min(np.abs(p)) < 8.0 / 12.0


def test_sinh_axis_integrates_gaussian():
    p, w = sinh_stretched_axis(48, 10.0, kappa=2.2)
    got = w @ np.exp(-(p**2))
    assert abs(got - np.sqrt(np.pi)) <= 1e-10


def test_momentum_grid_shapes_and_integration():
    g = MomentumGrid(8, 7.5)
    assert g.p.shape == (3, 512)
    assert g.w.shape == (512,)
    assert abs(g.integrate(np.ones(g.size)) - 15.0**3) <= 1e-11 * 15.0**3
    fine = MomentumGrid(20, 7.5)
    f = np.exp(-np.sum(fine.p**2, axis=0))
    # integral of exp(-|p|^2) over the box ~ pi^{3/2}
    assert abs(fine.integrate(f) - np.pi**1.5) <= 1e-4
    field = np.arange(g.size, dtype=float)
    assert g.reshape(field).shape == (8, 8, 8)
    assert g.reshape(field)[0, 0, 5] == field[5]


def test_momentum_grid_rejects_odd_count():
    with pytest.raises(ValueError):
        MomentumGrid(9, 5.0)


def test_spherical_grid_integrates_gaussian_moments():
    p, w = spherical_grid(12.0, n_r=200, n_mu=32, n_phi=8)
    f = np.exp(-np.sum(p * p, axis=0))
    assert abs(w @ f - np.pi**1.5) <= 1e-10
    # second moment of the Gaussian: integral p1^2 e^{-|p|^2} = pi^{3/2}/2
    assert abs(w @ (p[0] ** 2 * f) - 0.5 * np.pi**1.5) <= 1e-10
    # odd moments vanish by symmetry of the rule
    assert abs(w @ (p[0] * f)) <= 1e-12
    assert abs(w @ (p[1] * p[2] * f)) <= 1e-12


def test_unit_sphere_rule_basic_moments():
    om, w = unit_sphere_rule(3, 6)
    assert om.shape == (3, 18)
    assert np.allclose(np.sum(om * om, axis=0), 1.0)
    assert abs(w.sum() - 4.0 * np.pi) <= 1e-12
    for i in range(3):
        assert abs(w @ om[i]) <= 1e-12  # odd
        assert abs(w @ om[i] ** 2 - 4.0 * np.pi / 3.0) <= 1e-12


def test_unit_sphere_rule_antipodal_closure():
    om, w = unit_sphere_rule(3, 6)
    # every node's antipode is a node with the same weight
    for k in range(om.shape[1]):
        d = np.linalg.norm(om + om[:, k : k + 1], axis=0)
        j = int(np.argmin(d))
        assert d[j] <= 1e-12
        assert abs(w[j] - w[k]) <= 1e-15


class TestTrilinearInterpolation:
    def setup_method(self):
        self.grid = MomentumGrid(8, 5.0)
        self.rng = np.random.default_rng(21)

    def interior_points(self, m):
        lim = self.grid.axes[0].max() * 0.98
        return self.rng.uniform(-lim, lim, size=(3, m))

    def test_weights_partition_of_unity(self):
        pts = self.interior_points(200)
        _, wgt = self.grid.trilinear(pts)
        assert np.allclose(np.sum(wgt, axis=0), 1.0, rtol=0, atol=1e-13)

    def test_reproduces_trilinear_fields_exactly(self):
        f = lambda p: 2.0 + 3.0 * p[0] - p[1] + 0.5 * p[2] + 0.2 * p[0] * p[1]
        interp = self.grid.interpolator(f(self.grid.p))
        pts = self.interior_points(300)
        assert np.max(np.abs(interp(pts) - f(pts))) <= 1e-12

    def test_exact_at_interior_nodes(self):
        field = self.rng.normal(size=self.grid.size)
        interp = self.grid.interpolator(field)
        edge = self.grid.axes[0].max()
        interior = ~np.any(self.grid.p == edge, axis=0)
        cols = np.flatnonzero(interior)[:: 17]
        vals = interp(self.grid.p[:, cols])
        assert np.max(np.abs(vals - field[cols])) <= 1e-12

    def test_outside_box_clamps_to_zero(self, caplog):
        field = np.ones(self.grid.size)
        interp = self.grid.interpolator(field)
        pts = np.array([[10.0, -8.0], [0.0, 0.0], [0.0, 6.0]])
        with caplog.at_level(logging.WARNING, logger="relkin.quadrature"):
            vals = interp(pts)
        assert np.array_equal(vals, np.zeros(2))
        assert any("outside the momentum box" in r.message for r in caplog.records)

    def test_quiet_mode_suppresses_warning(self, caplog):
        interp = self.grid.interpolator(np.ones(self.grid.size), quiet=True)
        with caplog.at_level(logging.WARNING, logger="relkin.quadrature"):
            interp(np.full((3, 1), 50.0))
        assert not caplog.records

    def test_field_length_validated(self):
        with pytest.raises(ValueError):
            self.grid.interpolator(np.ones(7))
