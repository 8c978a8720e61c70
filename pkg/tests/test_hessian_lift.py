"""Tests for the four-variable lift and its Hessian certificates."""

import math

import numpy as np
import pytest

from orthobell import bellman_core, hessian_lift
from orthobell.errors import DomainError, PreconditionError
from orthobell.types import ConjugatePair
from orthobell.utils import make_rng


def random_point(rng, pair):
    x1, x2 = 10.0 ** rng.uniform(-1, 1, 2)
    th1, th2 = rng.uniform(0, 2 * math.pi, 2)
    return hessian_lift.lift(pair, (x1 * math.cos(th1), x1 * math.sin(th1), x2 * math.cos(th2), x2 * math.sin(th2)))


# -- quadratic forms -------------------------------------------------------------


def test_decompose_form_reconstructs():
    decomp = hessian_lift.decompose_form(2.0, 1.0, 2.0)
    assert decomp.D == pytest.approx(1.0)
    assert decomp.tau == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for x, y in rng.standard_normal((20, 2)):
        assert decomp.reconstruct(x, y) == pytest.approx(decomp.form(x, y), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize('A,B,C', [(2.0, 1.0, 2.0), (3.0, -0.5, 0.7), (1.0, 0.0, 4.0)])
def test_extremal_ratio_equals_d(A, B, C):
    decomp = hessian_lift.decompose_form(A, B, C)
    assert hessian_lift.extremal_ratio(decomp) == pytest.approx(decomp.D, rel=1e-12)


def test_decompose_form_rejects_indefinite():
    with pytest.raises(DomainError, match='indefinite'):
        hessian_lift.decompose_form(1.0, 2.0, 1.0)
    with pytest.raises(DomainError):
        hessian_lift.decompose_form(0.0, 0.0, 1.0)


# -- lifted Hessian --------------------------------------------------------------


def test_lift_uses_pair_norms(pair3):
    point = hessian_lift.lift(pair3, (0.6, 0.8, 0.0, 2.0))
    assert point.x1 == pytest.approx(1.0)
    assert point.x2 == pytest.approx(2.0)
    assert point.base.value == pytest.approx(bellman_core.eval_closed_p3_plus(1.0, 2.0))


def test_lift_rejects_wrong_dimension(pair3):
    with pytest.raises(DomainError):
        hessian_lift.lift(pair3, (1.0, 0.0, 1.0))


def test_lifted_hessian_needs_nonzero_norms(pair3):
    point = hessian_lift.lift(pair3, (0.0, 0.0, 1.0, 0.0))
    with pytest.raises(DomainError, match='zero pair norm'):
        hessian_lift.lifted_hessian_apply(point, (1.0, 0.0, 0.0, 0.0))


def test_lifted_hessian_rotational_direction(pair3):
    point = hessian_lift.lift(pair3, (1.0, 0.0, 1.0, 0.0))
    # purely rotational in the second pair: B_v / x2
    assert hessian_lift.lifted_hessian_apply(point, (0.0, 0.0, 0.0, 1.0)) == pytest.approx(2.0, rel=1e-12)


def test_lifted_hessian_matches_finite_differences(pair):
    rng = make_rng(11, 1)
    for _ in range(5):
        point = random_point(rng, pair)
        dy = rng.standard_normal(4)
        assert hessian_lift.fd_error(pair, point, dy) < 1e-4


def test_fd_second_derivative_of_quadratic():
    def func(y):
        return float(y[0] ** 2 + 3.0 * y[0] * y[1])

    value = hessian_lift.fd_lifted_second_derivative(func, (1.0, 2.0), (1.0, 1.0), 1e-3)
    assert value == pytest.approx(8.0, rel=1e-6)


# -- p = 3 certificate -----------------------------------------------------------


def test_certificate_example_point(pair3):
    point = hessian_lift.lift(pair3, (1.0, 0.0, 1.0, 0.0))
    cert = hessian_lift.certificate_p3(point, (0.0, 0.0, 0.0, 1.0))
    assert cert.term_tau == 0.0
    assert cert.term_inv_tau == pytest.approx(0.5)
    assert cert.term_rotational == pytest.approx(1.5)
    assert cert.term_square == pytest.approx(0.0, abs=1e-15)
    assert cert.total == pytest.approx(2.0)


def test_certificate_sums_to_lifted_hessian(pair3):
    rng = make_rng(5, 2)
    for _ in range(50):
        point = random_point(rng, pair3)
        dy = rng.standard_normal(4)
        cert = hessian_lift.certificate_p3(point, dy)
        form = hessian_lift.lifted_hessian_apply(point, dy)
        assert cert.total == pytest.approx(form, rel=1e-10)
        assert min(cert.term_tau, cert.term_inv_tau, cert.term_rotational, cert.term_square) >= 0.0


def test_certificate_only_for_p3():
    pair = ConjugatePair.from_p(4.0)
    point = hessian_lift.lift(pair, (1.0, 0.0, 1.0, 0.0))
    with pytest.raises(DomainError):
        hessian_lift.certificate_p3(point, (1.0, 0.0, 0.0, 0.0))


def test_certificate_check_is_exact():
    gap, min_term = hessian_lift.certificate_check(points=3, samples=5, seed=3)
    assert gap <= 1e-10
    assert min_term >= 0.0


# -- tau condition ---------------------------------------------------------------


def test_tau_condition_slack_identity(pair):
    for u, v in [(1.0, 1.0), (0.2, 3.0), (4.0, 0.5)]:
        base = bellman_core.eval_bellman(pair, u, v)
        expected = (pair.p / pair.q - 1.0) * u / v
        assert hessian_lift.tau_condition_slack(base) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_tau_condition_slack_reads_hessian_entries(pair3):
    base = bellman_core.eval_bellman(pair3, 1.0, 1.0)
    # stored tau, alpha and beta do not enter
    relabelled = base.model_copy(update={'tau': 50.0, 'alpha': 1.0, 'beta': 1.0})
    assert hessian_lift.tau_condition_slack(relabelled) == pytest.approx(1.0, rel=1e-12)

    broken = base.model_copy(update={'b_vv': 5.0 * base.b_vv})
    assert hessian_lift.tau_condition_slack(broken) < -0.1


def test_tau_condition_slack_needs_positive_v(pair3):
    with pytest.raises(DomainError):
        hessian_lift.tau_condition_slack(bellman_core.eval_bellman(pair3, 1.0, 0.0))


def test_tau_condition_slack_p3_unit_point(pair3):
    base = bellman_core.eval_bellman(pair3, 1.0, 1.0)
    assert hessian_lift.tau_condition_slack(base) == pytest.approx(1.0, rel=1e-12)


def test_tau_condition_plus_holds(pair3):
    report = hessian_lift.check_tau_condition(pair3, 'plus', points=8)
    assert report.holds
    assert report.c == 3.0
    assert report.points == 9 * 8


def test_tau_condition_minus_reports_supported_constant(pair3):
    report = hessian_lift.check_tau_condition(pair3, 'minus', points=8)
    sol = bellman_core.solve_pogorelov_minus(pair3)
    assert report.c == pytest.approx(sol.improvement_c)
    assert not report.holds
    assert report.min_slack < 0.0
    assert 2.0 < report.supported_c < report.c


def test_tau_condition_minus_axis_term_is_one(pair3):
    sol = bellman_core.solve_pogorelov_minus(pair3)
    point = bellman_core.eval_closed_p3_minus(0.0, 1.0, sol)
    term = 3.0 * sol.C2 * point.tau**2 / (4.0 * sol.C1**2 * 1.0)
    assert term == pytest.approx(1.0, rel=1e-12)


def test_tau_condition_requires_p3():
    with pytest.raises(DomainError):
        hessian_lift.check_tau_condition(ConjugatePair.from_p(4.0))


# -- key inequality --------------------------------------------------------------


def test_constrained_pair_meets_preconditions():
    rng = make_rng(1, 2, 3)
    for _ in range(10):
        dy, dy_prime = hessian_lift.constrained_pair(rng)
        hessian_lift.check_orthonormality(dy, dy_prime)


def test_orthonormality_violation_names_constraint():
    with pytest.raises(PreconditionError, match='orthogonality'):
        hessian_lift.check_orthonormality((0.0, 0.0, 1.0, 1.0), (0.0, 0.0, 1.0, 1.0))
    with pytest.raises(PreconditionError, match='equal norms'):
        hessian_lift.check_orthonormality((0.0, 0.0, 2.0, 0.0), (0.0, 0.0, 0.0, 1.0))


@pytest.mark.parametrize('p', [2.0, 3.0, 4.0, 6.0])
def test_key_inequality_holds(p):
    pair = ConjugatePair.from_p(p)
    rng = make_rng(42, int(p * 10))
    for _ in range(30):
        point = random_point(rng, pair)
        dy, dy_prime = hessian_lift.constrained_pair(rng)
        result = hessian_lift.key_inequality_pair(point, dy, dy_prime)
        scale = result.lhs + result.rhs
        assert result.slack >= -hessian_lift.KEY_TOL * scale
        # the intermediate bound sits between the two sides
        assert result.lhs >= result.lower_bound * (1 - 1e-10)
        assert result.lower_bound >= result.rhs * (1 - 1e-10)


def test_orthogonality_identity_example():
    check = hessian_lift.orthogonality_identity(1.0, 2.0, (1.0, 0.0), (0.0, 1.0))
    assert check.lhs == pytest.approx(5.0)
    assert check.rhs == pytest.approx(5.0)
    assert check.residual < 1e-14


def test_orthogonality_identity_rejects_non_orthogonal():
    with pytest.raises(PreconditionError):
        hessian_lift.orthogonality_identity(1.0, 1.0, (1.0, 0.0), (1.0, 0.0))


# -- scans -----------------------------------------------------------------------


def test_certificate_scan_rows(pair3, seed):
    rows = hessian_lift.certificate_scan(pair3, points=3, samples=4, seed=seed)
    assert len(rows) == 9
    assert hessian_lift.scan_passed(rows)
    assert list(rows[0].model_dump()) == hessian_lift.SCAN_COLUMNS


def test_certificate_scan_is_reproducible(pair3, seed):
    a = hessian_lift.certificate_scan(pair3, points=2, samples=3, seed=seed)
    b = hessian_lift.certificate_scan(pair3, points=2, samples=3, seed=seed)
    assert a == b


def test_certificate_scan_p4_passes():
    rows = hessian_lift.certificate_scan(ConjugatePair.from_p(4.0), points=3, samples=4, seed=9)
    assert hessian_lift.scan_passed(rows)


def test_certificate_scan_rejects_zero_samples(pair3):
    with pytest.raises(DomainError):
        hessian_lift.certificate_scan(pair3, samples=0)


# -- full-scale runs ---------------------------------------------------------------


@pytest.mark.acceptance
def test_decomposition_over_many_random_forms():
    rng = make_rng(17, 3)
    A, C = 10.0 ** rng.uniform(-2.0, 2.0, (2, 100_000))
    B = rng.uniform(-0.999, 0.999, 100_000) * np.sqrt(A * C)
    x, y = rng.standard_normal((2, 100_000))
    worst = 0.0
    for a, b, c, xi, yi in zip(A, B, C, x, y):
        decomp = hessian_lift.decompose_form(float(a), float(b), float(c))
        scale = a * xi * xi + 2.0 * abs(b * xi * yi) + c * yi * yi
        worst = max(worst, abs(decomp.reconstruct(xi, yi) - decomp.form(xi, yi)) / scale)
    assert worst <= 1e-12


@pytest.mark.acceptance
@pytest.mark.parametrize('p', [2.5, 3.0, 4.0])
def test_key_inequality_over_many_constrained_pairs(p):
    pair = ConjugatePair.from_p(p)
    rng = make_rng(99, int(p * 10))
    for _ in range(10_000):
        point = random_point(rng, pair)
        dy, dy_prime = hessian_lift.constrained_pair(rng)
        result = hessian_lift.key_inequality_pair(point, dy, dy_prime)
        assert result.slack >= -hessian_lift.KEY_TOL * (result.lhs + result.rhs)


@pytest.mark.acceptance
def test_tau_condition_plus_on_full_grid(pair3):
    report = hessian_lift.check_tau_condition(pair3, 'plus', points=50)
    assert report.points == 51 * 50
    assert report.min_slack >= -1e-12
