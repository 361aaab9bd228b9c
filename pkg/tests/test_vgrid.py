"""Velocity grid, finite-difference stencils, convolution, and the
fourth-difference closure dissipation."""

import math

import numpy as np

from landaulab.kernel import CollisionKernel, eval_a
from landaulab.vgrid import (
    GridField,
    VelocityGrid,
    apply_axis,
    boundary_mass,
    closure_dissipation,
    convolve_kernel,
    discretized_maxwellian,
    integrate,
    load_field,
    maxwellian_data,
    save_field,
    second_derivative,
    first_derivative,
)


def test_grid_geometry():
    g = VelocityGrid(16, 6.0)
    assert math.isclose(g.h, 0.75)
    ax = g.axis
    assert len(ax) == 16
    # cell-centered: symmetric about zero, no node at the origin
    assert np.allclose(ax + ax[::-1], 0.0, atol=1e-14)
    assert np.min(np.abs(ax)) > 0.0
    assert math.isclose(ax[1] - ax[0], g.h)


def test_integrate_maxwellian():
    g = VelocityGrid(32, 8.0)
    f = GridField(g, maxwellian_data(g))
    assert abs(integrate(f) - 1.0) < 1e-6
    assert abs(integrate(f, weight_fn=lambda v: np.sum(v * v, axis=-1)) - 3.0) < 1e-4
    assert integrate(GridField.zeros(g)) == 0.0


def test_discretized_maxwellian_moments():
    g = VelocityGrid(16, 6.0)
    mu = discretized_maxwellian(g)
    assert abs(integrate(mu) - 1.0) < 1e-6
    assert abs(integrate(mu, weight_fn=lambda v: np.sum(v * v, axis=-1)) - 3.0) < 1e-3


def test_second_derivative_polynomials():
    g = VelocityGrid(16, 6.0)
    v1 = g.coordinate(0)
    v2 = g.coordinate(1)
    d11 = second_derivative(GridField(g, v1 * v1), 0, 0).data
    assert np.max(np.abs(d11 - 2.0)) < 1e-10
    d12 = second_derivative(GridField(g, v1 * v2), 0, 1).data
    assert np.max(np.abs(d12 - 1.0)) < 1e-10
    d1 = first_derivative(GridField(g, v1 * v1 * v1), 0).data
    assert np.max(np.abs(d1 - 3.0 * v1 * v1)) < 1e-9


def test_second_derivative_maxwellian_order():
    # interior error of d11 mu against (v1^2 - 1) mu shrinks ~16x per halving
    errs = []
    for n in (16, 32):
        g = VelocityGrid(n, 6.0)
        mu = maxwellian_data(g)
        got = second_derivative(GridField(g, mu), 0, 0).data
        want = (g.coordinate(0) ** 2 - 1.0) * mu
        c = slice(3, n - 3)
        errs.append(np.max(np.abs(got - want)[c, c, c]))
    assert errs[0] / errs[1] > 8.0


def test_d4u_annihilates_cubics():
    g = VelocityGrid(16, 6.0)
    t = g.d4u()
    x = g.axis
    for p in (np.ones_like(x), x, x * x, x**3):
        assert np.max(np.abs(t @ p)) < 1e-10 * max(1.0, np.max(np.abs(p)))
    # exact on quartics too: undivided 4th difference of x^4 is 24 h^4
    assert np.allclose(t @ x**4, 24.0 * g.h**4, atol=1e-8)
    # every row sums to zero, so the adjoint pairing conserves mass
    assert np.max(np.abs(t.sum(axis=1))) < 1e-12


def test_closure_dissipation_conservation_and_sign(rng):
    g = VelocityGrid(12, 6.0)
    mu = maxwellian_data(g)
    w = [0.5 * mu, 0.8 * mu, 1.1 * mu]
    ratio = rng.normal(size=g.shape)
    out = closure_dissipation(g, w, ratio)
    # conserves mass, momentum, energy exactly
    for test_fn in (np.ones(g.shape), g.coordinate(0), g.radius2()):
        assert abs(np.sum(out * test_fn)) < 1e-10 * np.max(np.abs(out)) * g.size
    # negative semidefinite pairing against the ratio it acts on
    assert np.sum(out * ratio) <= 1e-12
    # vanishes exactly on cubic ratios (collision invariants + heat flux)
    v1, v2, v3 = (g.coordinate(i) for i in range(3))
    for cub in (np.ones(g.shape), v1, g.radius2(), v1 * (g.radius2() - 5.0), v1 * v2 * v3):
        z = closure_dissipation(g, w, cub)
        assert np.max(np.abs(z)) < 1e-9


def test_convolver_point_mass():
    g = VelocityGrid(16, 6.0)
    k = CollisionKernel(1.0)
    data = np.zeros(g.shape)
    i0 = (2, 3, 4)
    data[i0] = 1.0 / g.h**3  # unit point mass
    out = convolve_kernel(GridField(g, data), "a11", k)
    v0 = np.array([g.axis[i0[0]], g.axis[i0[1]], g.axis[i0[2]]])
    probe = (10, 11, 9)
    vp = np.array([g.axis[probe[0]], g.axis[probe[1]], g.axis[probe[2]]])
    want = eval_a(vp - v0, k)[0, 0]
    assert math.isclose(out.data[probe], want, rel_tol=1e-6)


def test_boundary_mass_small():
    g = VelocityGrid(16, 6.0)
    assert boundary_mass(discretized_maxwellian(g)) < 1e-4


def test_save_load_roundtrip(tmp_path):
    g = VelocityGrid(12, 6.0)
    f = GridField(g, maxwellian_data(g))
    p = tmp_path / "field.npz"
    save_field(f, p)
    f2 = load_field(p)
    assert f2.grid.n == g.n and f2.grid.vmax == g.vmax
    assert np.array_equal(f2.data, f.data)


def test_apply_axis_matches_matmul(rng):
    g = VelocityGrid(10, 5.0)
    m = rng.normal(size=(10, 10))
    data = rng.normal(size=g.shape)
    out = apply_axis(m, data, 2)
    want = np.einsum("ij,xyj->xyi", m, data)
    assert np.allclose(out, want, atol=1e-13)
