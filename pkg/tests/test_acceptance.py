"""End-to-end acceptance criteria for the laboratory.

Each test runs one numbered criterion at reference scale and prints a single
pass/fail line with its headline numbers, bypassing capture so the line is
visible in normal pytest output.
"""

import pytest

from landaulab import acceptance

SEED = 7


@pytest.fixture(scope="module")
def ctx():
    return acceptance.SuiteContext(quick=False, seed=SEED)


def _check(res, capsys):
    with capsys.disabled():
        print(f"\n{res.line()}")
    assert res.ok, res.details


def test_criterion_01_kernel_identities(ctx, capsys):
    _check(acceptance.criterion_1(ctx), capsys)


def test_criterion_02_j_alpha_bounds(ctx, capsys):
    _check(acceptance.criterion_2(ctx), capsys)


def test_criterion_03_null_space_and_gap(ctx, capsys):
    _check(acceptance.criterion_3(ctx), capsys)


def test_criterion_04_hilbert_decay_matches_gap(ctx, capsys):
    _check(acceptance.criterion_4(ctx), capsys)


def test_criterion_05_enlarged_space_decay(ctx, capsys):
    _check(acceptance.criterion_5(ctx), capsys)


def test_criterion_06_dissipativity_envelope(ctx, capsys):
    _check(acceptance.criterion_6(ctx), capsys)


def test_criterion_07_regularization_exponent(ctx, capsys):
    _check(acceptance.criterion_7(ctx), capsys)


def test_criterion_08_nonlinear_structure(ctx, capsys):
    _check(acceptance.criterion_8(ctx), capsys)


def test_criterion_09_nonlinear_relaxation(ctx, capsys):
    _check(acceptance.criterion_9(ctx), capsys)


def test_criterion_10_oracle_closure(ctx, capsys):
    _check(acceptance.criterion_10(ctx), capsys)
