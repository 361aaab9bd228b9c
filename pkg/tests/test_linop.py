"""Linearised operator: algebraic identities, null space, projection,
semigroup stepping against the spectral oracle, and the split certificate."""

import math

import numpy as np
import pytest

from landaulab.diagnostics import NormSpec
from landaulab.kernel import CollisionKernel, PhiParams, Weight, canonical_theta
from landaulab.linop import (
    GridMismatchError,
    LinearisedOperator,
    SplitParams,
    certify_split,
    chi_profile,
    default_split,
)
from landaulab.vgrid import GridField, VelocityGrid, discretized_maxwellian, maxwellian_data


@pytest.fixture(scope="module")
def op12(kernel):
    return LinearisedOperator(VelocityGrid(12, 6.0), kernel)


def _random_field(grid, rng):
    # smooth random data: low-degree polynomial times the Maxwellian
    mu = maxwellian_data(grid)
    v1, v2, v3 = (grid.coordinate(i) for i in range(3))
    c = rng.normal(size=8)
    poly = (
        c[0]
        + c[1] * v1
        + c[2] * v2
        + c[3] * v3
        + c[4] * v1 * v2
        + c[5] * v1 * v1
        + c[6] * v3 * v3
        + c[7] * v1 * v2 * v3
    )
    return GridField(grid, poly * mu)


def test_chi_profile_shape():
    assert chi_profile(0.0) == 1.0
    assert chi_profile(2.0) == 0.0
    mid = chi_profile(np.linspace(0.2, 1.8, 9))
    assert np.all(mid <= 1.0) and np.all(mid >= 0.0)
    assert np.all(np.diff(mid) <= 1e-12)


def test_linearity_and_zero(op12, rng):
    h = _random_field(op12.grid, rng)
    z = op12.apply_L(GridField.zeros(op12.grid))
    assert np.max(np.abs(z.data)) == 0.0
    two = op12.apply_L(GridField(op12.grid, 2.0 * h.data))
    one = op12.apply_L(h)
    assert np.allclose(two.data, 2.0 * one.data, atol=1e-12 * np.max(np.abs(one.data)))


def test_equilibrium_in_null_space(op12):
    mu = discretized_maxwellian(op12.grid)
    lm = op12.apply_L(mu)
    a0 = op12.apply_A0(mu)
    b0 = op12.apply_B0(mu)
    # the discretized Maxwellian is annihilated to machine precision
    assert np.max(np.abs(lm.data)) < 1e-12
    assert np.allclose(a0.data + b0.data, lm.data, atol=1e-12)


def test_split_identity(op12, rng):
    split = SplitParams(M=4.0, R=3.0)
    op = op12.with_split(split)
    h = _random_field(op.grid, rng)
    total = op.apply_A(h).data + op.apply_B(h).data
    full = op.apply_L(h).data
    assert np.allclose(total, full, atol=1e-12 * np.max(np.abs(full)))
    # M = 0 collapses A to A0
    op0 = op12.with_split(SplitParams(M=0.0, R=3.0))
    assert np.allclose(op0.apply_A(h).data, op0.apply_A0(h).data, atol=1e-13)


def test_conservation_of_L(op12, rng):
    h = _random_field(op12.grid, rng)
    out = op12.apply_L(h).data
    g = op12.grid
    h3 = g.h**3
    scale = np.max(np.abs(out)) * g.size * h3
    for test_fn in (np.ones(g.shape), g.coordinate(0), g.coordinate(2), g.radius2()):
        assert abs(h3 * np.sum(out * test_fn)) < 1e-10 * scale


def test_projection_properties(op12, rng):
    g = op12.grid
    mu = discretized_maxwellian(g)
    pm = op12.projection_Pi(mu)
    assert np.allclose(pm.data, mu.data, atol=1e-8 * np.max(mu.data))
    # idempotent and orthogonal in the mu^{-1/2} inner product
    h = _random_field(g, rng)
    ph = op12.projection_Pi(h)
    pph = op12.projection_Pi(ph)
    assert np.allclose(pph.data, ph.data, atol=1e-10 * np.max(np.abs(ph.data)))
    resid = h.data - ph.data
    inner = np.sum(ph.data * resid / maxwellian_data(g)) * g.h**3
    norm = np.sum(ph.data * ph.data / maxwellian_data(g)) * g.h**3
    assert abs(inner) < 1e-8 * max(norm, 1e-30)


def test_dirichlet_form_nonnegative(op12, rng):
    for _ in range(5):
        h = _random_field(op12.grid, rng)
        resid = GridField(op12.grid, h.data - op12.projection_Pi(h).data)
        assert op12.dirichlet_form(resid) >= -1e-8


def test_spectral_report(op12):
    rep = op12.spectral_gap()
    assert rep.null_count == 5
    assert rep.lambda0 > 0.0
    assert rep.asymmetry < 5e-2
    lead = rep.leading(8)
    assert len(lead) == 8
    # eigenvalues sorted: five near zero, then -lambda0
    assert abs(lead[5]) > 100.0 * abs(lead[4])


def test_grid_mismatch_rejected(op12):
    other = VelocityGrid(10, 5.0)
    with pytest.raises(GridMismatchError):
        op12.apply_L(GridField.zeros(other))


def test_semigroup_null_direction_stationary(op12):
    mu = discretized_maxwellian(op12.grid)
    tr = op12.evolve_semigroup(
        "L", mu, t_end=0.5, dt=0.005, norm_specs=[NormSpec(2.0, "mu_inv_half")], n_out=6
    )
    base = tr.norm_series("L2(mu_inv_half)")
    assert np.max(np.abs(base - base[0])) < 1e-6 * base[0]


def test_semigroup_matches_spectral_oracle(op12, rng):
    h0 = _random_field(op12.grid, rng)
    h0 = GridField(op12.grid, h0.data - op12.projection_Pi(h0).data)
    tr = op12.evolve_semigroup("L", h0, t_end=0.1, dt=1e-4, n_out=2)
    exact = op12.apply_semigroup_spectral(h0.data, 0.1)
    num = tr.final.data
    rel = np.max(np.abs(num - exact)) / np.max(np.abs(exact))
    assert rel < 1e-5


def test_certify_split_and_default(op12):
    w = Weight.polynomial(5.0, 1.0)
    params = PhiParams.for_weight(w, canonical_theta(w))
    split = default_split(op12, w, -1.0)
    res = certify_split(op12.with_split(split), w, params, -1.0)
    assert res.ok
    assert res.worst_margin <= 0.0
    # no cutoff at all fails near the origin where phi > a
    bad = certify_split(op12.with_split(SplitParams(M=0.0, R=1.0)), w, params, -1.0)
    assert not bad.ok
    assert bad.suggested is not None
