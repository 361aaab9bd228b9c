"""Collision-kernel quadratures against closed forms and frozen oracles.

The frozen J/M constants below were produced by an independent 3D adaptive
quadrature of the defining integrals (scipy tplquad over [-9, 9]^3 at
tolerance 1e-9), not by the radial reduction under test.
"""

import math

import numpy as np
import pytest

from landaulab.kernel import (
    CollisionKernel,
    PhiParams,
    UnboundedBelow,
    Weight,
    abscissa,
    bar_fields,
    canonical_theta,
    ell,
    eval_a,
    eval_b,
    eval_c,
    j_alpha,
    maxwellian,
    moment_malpha,
    phi,
    weight_value,
)

# Independent-quadrature oracles (see module docstring).
M_ORACLE = {
    1.0: 1.5957691216057306,
    1.5: 2.150099968311299,
    2.0: 3.0,
    2.5: 4.316439532977907,
    3.0: 6.383076486422923,
    4.0: 15.0,
}
J_ORACLE = {
    ((1.5, 0.0, 0.0), 1.0): 2.136203985834334,
    ((1.5, 0.0, 0.0), 2.5): 8.574232686604798,
}


def test_eval_a_unit_vector():
    k = CollisionKernel(1.0)
    a = eval_a(np.array([1.0, 0.0, 0.0]), k)
    assert np.allclose(a, np.diag([0.0, 1.0, 1.0]), atol=1e-14)


def test_eval_a_trace_and_kernel_direction():
    k1 = CollisionKernel(1.0)
    assert math.isclose(np.trace(eval_a(np.array([0.0, 2.0, 0.0]), k1)), 16.0, rel_tol=1e-13)
    khalf = CollisionKernel(0.5)
    z = np.array([1.0, 2.0, 3.0])
    assert np.max(np.abs(eval_a(z, khalf) @ z)) < 1e-12
    assert np.max(np.abs(eval_a(np.zeros(3), k1))) == 0.0


def test_eval_a_symmetric_psd(rng):
    k = CollisionKernel(0.7)
    for _ in range(20):
        z = rng.normal(size=3) * 3.0
        a = eval_a(z, k)
        assert np.allclose(a, a.T, atol=1e-14)
        assert np.linalg.eigvalsh(a).min() >= -1e-12
        assert math.isclose(np.trace(a), 2.0 * np.linalg.norm(z) ** (k.gamma + 2.0), rel_tol=1e-12)


def test_eval_b_values():
    k1 = CollisionKernel(1.0)
    assert np.allclose(eval_b(np.array([1.0, 0.0, 0.0]), k1), [-2.0, 0.0, 0.0])
    assert np.allclose(eval_b(np.zeros(3), k1), 0.0)
    k0 = CollisionKernel(0.0)
    assert np.allclose(eval_b(np.array([0.0, 0.0, 2.0]), k0), [0.0, 0.0, -4.0])


def test_eval_c_values():
    k1 = CollisionKernel(1.0)
    assert math.isclose(eval_c(np.array([1.0, 0.0, 0.0]), k1), -8.0)
    assert math.isclose(eval_c(np.array([3.0, 4.0, 0.0]), k1), -40.0)
    k0 = CollisionKernel(0.0)
    assert math.isclose(eval_c(np.array([0.3, -1.2, 0.5]), k0), -6.0)


def test_maxwellian_normalization():
    assert math.isclose(maxwellian(np.zeros(3)), (2.0 * math.pi) ** -1.5, rel_tol=1e-14)
    # midpoint quadrature of the Gaussian converges far below 1e-8 here
    from landaulab.vgrid import VelocityGrid, GridField, maxwellian_data, integrate

    g = VelocityGrid(32, 8.0)
    f = GridField(g, maxwellian_data(g))
    assert abs(integrate(f) - 1.0) < 1e-8
    assert abs(integrate(f, weight_fn=lambda v: np.sum(v * v, axis=-1)) - 3.0) < 1e-6


def test_j_alpha_closed_forms():
    assert math.isclose(j_alpha(np.array([0.4, -1.0, 2.0]), 0.0), 1.0, rel_tol=1e-10)
    assert math.isclose(j_alpha(np.zeros(3), 2.0), 3.0, rel_tol=1e-8)
    j30 = j_alpha(np.zeros(3), 3.0)
    assert math.isclose(j30, M_ORACLE[3.0], rel_tol=1e-8)
    assert j30 <= 15.0**0.75


def test_j_alpha_frozen_oracle():
    for (v, alpha), want in J_ORACLE.items():
        got = j_alpha(np.array(v), alpha)
        assert math.isclose(got, want, rel_tol=1e-7), (v, alpha, got, want)


def test_j_alpha_domain():
    with pytest.raises(ValueError):
        j_alpha(np.zeros(3), 3.5)
    with pytest.raises(ValueError):
        j_alpha(np.zeros(3), -0.1)


def test_moment_malpha():
    for alpha, want in M_ORACLE.items():
        assert math.isclose(moment_malpha(alpha), want, rel_tol=1e-10), alpha


def test_ell_isotropy_and_asymptotics():
    k = CollisionKernel(1.0)
    l1, l2 = ell(np.zeros(3), k)
    assert math.isclose(l1, l2, rel_tol=1e-8)
    assert l1 > 0.0
    v = np.array([10.0, 0.0, 0.0])
    l1, l2 = ell(v, k)
    assert 0.8 * 20.0 <= l1 <= 1.2 * 20.0
    assert 0.8 * 1000.0 <= l2 <= 1.2 * 1000.0


def test_bar_fields_identities(rng):
    k = CollisionKernel(1.0)
    for _ in range(10):
        v = rng.normal(size=3) * 2.0
        abar, bbar, cbar = bar_fields(v, k)
        l1, l2 = ell(v, k)
        assert np.allclose(abar, abar.T, atol=1e-12)
        scale = (1.0 + np.linalg.norm(v)) ** 3
        assert abs(np.trace(abar) - 2.0 * j_alpha(v, 3.0)) < 1e-6 * scale
        assert np.max(np.abs(bbar + l1 * v)) < 1e-6 * (1.0 + np.linalg.norm(v)) ** 2
        assert abs(cbar + 8.0 * j_alpha(v, 1.0)) < 1e-6 * scale
        # quadratic-form split into parallel / orthogonal eigenvalues
        xi = rng.normal(size=3)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            par = np.dot(xi, v) / nv
            perp2 = np.dot(xi, xi) - par * par
            split = l1 * par * par + l2 * perp2
            assert abs(xi @ abar @ xi - split) < 1e-6 * scale * np.dot(xi, xi)


def test_bar_fields_origin():
    k = CollisionKernel(1.0)
    _, bbar, _ = bar_fields(np.zeros(3), k)
    assert np.allclose(bbar, 0.0, atol=1e-10)


def test_weight_values_and_abscissa():
    poly = Weight.polynomial(5.0, 1.0)
    v = np.array([1.0, 2.0, 2.0])
    assert math.isclose(weight_value(poly, v), 10.0**2.5, rel_tol=1e-12)
    k0 = CollisionKernel(0.0)
    assert abscissa(poly, k0) == -10.0
    k1 = CollisionKernel(1.0)
    marker = abscissa(Weight.polynomial(6.0, 2.0), k1)
    assert isinstance(marker, UnboundedBelow)
    assert marker < -1e300


def test_weight_invariant_rejection():
    k = CollisionKernel(1.0)
    with pytest.raises(ValueError):
        Weight.stretched_exp(0.3, 2.0, 2.0).validate_for(k)


def test_phi_far_field_polynomial():
    # heavy-tail polynomial weight: the far-field envelope is -2k<v>^gamma
    k = CollisionKernel(1.0)
    w = Weight.polynomial(5.0, 1.0)
    params = PhiParams.for_weight(w, canonical_theta(w))
    v = np.array([20.0, 0.0, 0.0])
    val = phi(w, params, v, k)
    envelope = -2.0 * 5.0 * math.sqrt(1.0 + 400.0)
    assert val <= envelope * (1.0 - 0.25)
