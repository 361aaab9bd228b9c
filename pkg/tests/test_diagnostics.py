"""Norms, decay fitting, and report assembly."""

import json
import math

import numpy as np
import pytest

from landaulab.diagnostics import (
    DecayReport,
    NormSpec,
    fit_decay,
    make_report,
    norm,
    norm_data,
)
from landaulab.kernel import Weight
from landaulab.vgrid import GridField, VelocityGrid, discretized_maxwellian


def test_norm_tags():
    assert NormSpec(1.0, "plain").tag() == "L1(plain)"
    assert NormSpec(2.0, "mu_inv_half").tag() == "L2(mu_inv_half)"
    spec = NormSpec(1.0, Weight.polynomial(5.0, 1.0))
    assert "L1" in spec.tag()


def test_norm_of_maxwellian():
    g = VelocityGrid(24, 7.0)
    mu = discretized_maxwellian(g)
    assert abs(norm(mu, NormSpec(1.0, "plain")) - 1.0) < 1e-6
    # mu^2 / mu = mu integrates to 1
    assert abs(norm(mu, NormSpec(2.0, "mu_inv_half")) - 1.0) < 1e-6


def test_norm_axioms(rng):
    g = VelocityGrid(10, 5.0)
    spec = NormSpec(2.0, "plain")
    for _ in range(20):
        a = rng.normal(size=g.shape)
        b = rng.normal(size=g.shape)
        na = norm_data(g, a, spec)
        nb = norm_data(g, b, spec)
        nab = norm_data(g, a + b, spec)
        assert nab <= na + nb + 1e-12
        assert norm_data(g, 3.0 * a, spec) == pytest.approx(3.0 * na, rel=1e-12)


def test_fit_decay_exact_exponential():
    t = np.linspace(0.0, 2.0, 41)
    vals = 3.0 * np.exp(-2.0 * t)
    rep = fit_decay(t, vals, reference_rate=2.0)
    assert rep.verdict == "pass"
    assert math.isclose(rep.fitted_rate, 2.0, abs_tol=1e-10)
    assert math.isclose(rep.prefactor, 3.0, rel_tol=1e-9)
    assert rep.r_squared > 1.0 - 1e-12


def test_fit_decay_noisy(rng):
    t = np.linspace(0.0, 2.0, 201)
    vals = np.exp(-2.0 * t) * (1.0 + 0.01 * rng.normal(size=t.size))
    rep = fit_decay(t, vals, reference_rate=2.0)
    assert abs(rep.fitted_rate - 2.0) < 0.05


def test_fit_decay_model_mismatch():
    t = np.linspace(0.0, 1.0, 41)
    vals = 1.0 + 0.5 * np.sin(20.0 * t)  # oscillatory: not a decaying exponential
    rep = fit_decay(t, vals, reference_rate=1.0)
    assert rep.verdict == "inconclusive"
    assert rep.r_squared < 0.98


def test_fit_decay_window():
    t = np.linspace(0.0, 2.0, 81)
    vals = np.exp(-3.0 * t) + np.exp(-30.0 * t)  # fast transient then clean decay
    rep = fit_decay(t, vals, reference_rate=3.0, window=(0.8, 2.0))
    assert abs(rep.fitted_rate - 3.0) < 0.05


def test_decay_report_json():
    t = np.linspace(0.0, 1.0, 41)
    rep = fit_decay(t, np.exp(-t), reference_rate=1.0)
    d = json.loads(rep.to_json())
    assert "fitted_rate" in d and "verdict" in d


def test_make_report_shape():
    rep = make_report("spectrum", {"n": 16}, {"lambda0": 24.3}, "pass")
    assert set(rep) >= {"report_type", "inputs", "metrics", "verdict"}
    assert rep["report_type"] == "spectrum"
    json.dumps(rep)  # must be serializable
