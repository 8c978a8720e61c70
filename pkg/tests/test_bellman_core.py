"""Tests for the two-variable Bellman functions and the boundary-system solutions."""

import math

import pytest

from orthobell import bellman_core
from orthobell.errors import BranchError, DomainError, NumericError
from orthobell.types import ConjugatePair
from orthobell.utils import log_grid

POINTS = [(1.0, 1.0), (0.3, 2.0), (5.0, 0.1), (0.0, 1.0), (1.0, 0.0), (1e-2, 1e2), (40.0, 3.0)]


@pytest.fixture
def minus3(pair3):
    return bellman_core.solve_pogorelov_minus(pair3)


# -- safeguarded Newton ----------------------------------------------------------


def test_safeguarded_newton_finds_cube_root():
    root, iterations = bellman_core.safeguarded_newton(lambda x: x**3 - 2.0, lambda x: 3.0 * x * x, 0.0, 2.0, 1e-15)
    assert root == pytest.approx(2.0 ** (1.0 / 3.0), abs=1e-14)
    assert 0 < iterations < 60


def test_safeguarded_newton_requires_bracket():
    with pytest.raises(NumericError):
        bellman_core.safeguarded_newton(lambda x: x * x + 1.0, lambda x: 2.0 * x, -1.0, 1.0, 1e-12)


# -- implicit t ------------------------------------------------------------------


def test_solve_t_p3_at_unit_point(pair3):
    assert bellman_core.solve_t(pair3, 1.0, 1.0) == pytest.approx(3.0, rel=1e-13)


def test_solve_t_one_variable_roots(pair):
    c1, c2 = bellman_core.t_coefficients(pair)
    u = 1.7
    assert bellman_core.solve_t(pair, u, 0.0) == pytest.approx((c1 * u) ** pair.p, rel=1e-12)
    assert bellman_core.solve_t(pair, 0.0, u) == pytest.approx((c2 * u) ** pair.q, rel=1e-12)


def test_solve_t_p2_v0_is_one_half():
    assert bellman_core.solve_t(ConjugatePair.from_p(2.0), 1.0, 0.0) == pytest.approx(0.5, rel=1e-14)


def test_solve_t_is_homogeneous(pair):
    c = 7.3
    t = bellman_core.solve_t(pair, 0.4, 1.9)
    scaled = bellman_core.solve_t(pair, c ** (1.0 / pair.p) * 0.4, c ** (1.0 / pair.q) * 1.9)
    assert scaled == pytest.approx(c * t, rel=1e-12)


def test_solve_t_satisfies_its_equation(pair):
    c1, c2 = bellman_core.t_coefficients(pair)
    for u, v in POINTS:
        t = bellman_core.solve_t(pair, u, v)
        rhs = c1 * t ** (1.0 / pair.q) * u + c2 * t ** (1.0 / pair.p) * v
        assert abs(t - rhs) <= 1e-12 * t


def test_solve_t_rejects_origin(pair3):
    with pytest.raises(DomainError, match='degenerate'):
        bellman_core.solve_t(pair3, 0.0, 0.0)


def test_solve_t_rejects_non_finite(pair3):
    with pytest.raises(DomainError):
        bellman_core.solve_t(pair3, float('inf'), 1.0)


# -- plus branch -----------------------------------------------------------------


def test_eval_bellman_p3_unit_point(pair3):
    point = bellman_core.eval_bellman(pair3, 1.0, 1.0)
    assert point.value == pytest.approx(2.0, rel=1e-13)
    assert point.t == pytest.approx(3.0, rel=1e-13)
    assert point.tau == pytest.approx(2.0, rel=1e-13)
    assert point.b_v == pytest.approx(2.0, rel=1e-13)


def test_eval_bellman_matches_p3_closed_form(pair3):
    for u, v in POINTS:
        point = bellman_core.eval_bellman(pair3, u, v)
        assert point.value == pytest.approx(bellman_core.eval_closed_p3_plus(u, v), rel=1e-12)


def test_eval_bellman_p2_equals_obstacle():
    pair = ConjugatePair.from_p(2.0)
    for u, v in POINTS:
        point = bellman_core.eval_bellman(pair, u, v)
        assert point.value == pytest.approx((u * u + v * v) / 2.0, rel=1e-12, abs=1e-14)


def test_eval_bellman_folds_signs(pair3):
    a = bellman_core.eval_bellman(pair3, -0.7, 2.0)
    b = bellman_core.eval_bellman(pair3, 0.7, -2.0)
    assert a.u == b.u == 0.7
    assert a.value == b.value


def test_eval_bellman_origin_is_zero(pair3):
    point = bellman_core.eval_bellman(pair3, 0.0, 0.0)
    assert point.value == 0.0
    assert not point.has_derivatives


def test_plus_branch_invariants(pair):
    for u, v in POINTS:
        point = bellman_core.eval_bellman(pair, u, v)
        assert point.det_residual <= bellman_core.DET_TOL
        assert point.bound_slack >= -bellman_core.BOUND_TOL * max(point.phi, 1.0)
        # B_uv = pt/S - 1 >= 0 since p/q >= 1
        assert point.b_uv >= -1e-12
        residual = bellman_core.tau_identity_residual(point)
        if residual is not None:
            assert residual <= bellman_core.IDENTITY_TOL
        residual = bellman_core.bvba_residual(point)
        if residual is not None:
            assert residual <= bellman_core.IDENTITY_TOL


def test_plus_branch_gradient_against_finite_differences(pair):
    u, v, h = 0.8, 1.3, 1e-6
    point = bellman_core.eval_bellman(pair, u, v)
    du = (bellman_core.eval_bellman(pair, u + h, v).value - bellman_core.eval_bellman(pair, u - h, v).value) / (2 * h)
    dv = (bellman_core.eval_bellman(pair, u, v + h).value - bellman_core.eval_bellman(pair, u, v - h).value) / (2 * h)
    assert point.b_u == pytest.approx(du, rel=1e-7)
    assert point.b_v == pytest.approx(dv, rel=1e-7)


@pytest.mark.parametrize('u,v', [(0.8, 1.3), (3.0, 0.4), (0.2, 5.0)])
def test_plus_branch_hessian_against_second_differences(pair, u, v):
    h = 1e-4 * max(u, v)

    def value(a, b):
        return bellman_core.eval_bellman(pair, a, b).value

    point = bellman_core.eval_bellman(pair, u, v)
    b0 = value(u, v)
    duu = (value(u + h, v) - 2.0 * b0 + value(u - h, v)) / (h * h)
    dvv = (value(u, v + h) - 2.0 * b0 + value(u, v - h)) / (h * h)
    duv = (value(u + h, v + h) - value(u + h, v - h) - value(u - h, v + h) + value(u - h, v - h)) / (4.0 * h * h)
    assert point.b_uu == pytest.approx(duu, rel=1e-4)
    assert point.b_vv == pytest.approx(dvv, rel=1e-4)
    assert point.b_uv == pytest.approx(duv, rel=1e-4, abs=1e-6)


@pytest.mark.parametrize('u,v', [(1e-120, 0.0), (1e120, 1.0), (0.0, 1e-300), (1e200, 1e200)])
def test_solve_t_rejects_unrepresentable_magnitudes(pair3, u, v):
    with pytest.raises(DomainError, match='not representable'):
        bellman_core.solve_t(pair3, u, v)


def test_solve_t_handles_large_but_representable_inputs(pair3):
    # t(c^(1/3) u, c^(2/3) v) = c t(u, v) with c = 1e150
    t = bellman_core.solve_t(pair3, 1e50, 1e100)
    assert t == pytest.approx(1e150 * 3.0, rel=1e-12)
    point = bellman_core.eval_bellman(pair3, 1e-50, 1e-100)
    assert point.t == pytest.approx(1e-150 * 3.0, rel=1e-12)
    assert math.isfinite(point.tau)


def test_solve_pogorelov_plus(pair):
    sol = bellman_core.solve_pogorelov_plus(pair)
    assert sol.gamma == 1.0
    assert sol.C1 * sol.C2 == pytest.approx(1.0 / pair.q)
    assert max(bellman_core.pogorelov_plus_residuals(sol).values()) <= bellman_core.PLUS_RESIDUAL_TOL


def test_gamma_cubic_has_only_the_double_root():
    unique, min_value = bellman_core.gamma_cubic_check()
    assert unique
    assert min_value >= -1e-12


def test_check_saturation_passes(pair):
    report = bellman_core.check_saturation(pair, samples=12)
    assert report.passed
    assert report.max_value_gap <= bellman_core.SATURATION_TOL
    assert report.min_off_curve_slack >= -bellman_core.BOUND_TOL


# -- minus branch ----------------------------------------------------------------


def test_minus_branch_p3_decimals(minus3):
    assert abs(minus3.C1) == pytest.approx(1.329660319, abs=1e-6)
    assert minus3.C2 == pytest.approx(2.256215334, abs=1e-6)
    assert minus3.C2 / minus3.C1**2 == pytest.approx(1.276142375, abs=1e-6)
    assert minus3.improved_estimate == pytest.approx(1.562656814, abs=1e-6)


def test_minus_branch_p3_delta_and_gamma(minus3):
    # delta^2 - 2 delta - 1 = 0
    assert minus3.delta == pytest.approx(1.0 + math.sqrt(2.0), abs=1e-12)
    assert minus3.gamma == pytest.approx(3.0 + 2.0 * math.sqrt(2.0), rel=1e-12)
    assert minus3.C1 < 0.0
    assert minus3.C1 * minus3.C2 == pytest.approx(-3.0)


@pytest.mark.parametrize('p', [2.5, 3.0, 4.0, 6.0])
def test_minus_branch_residuals(p):
    sol = bellman_core.solve_pogorelov_minus(ConjugatePair.from_p(p))
    residuals = bellman_core.minus_branch_residuals(sol)
    assert set(residuals) == {'C1C2', 'power_balance', 'ab_relation', 'gamma_equation', 'delta_equation'}
    assert max(residuals.values()) < 1e-10
    assert sol.delta > 1.0


def test_minus_branch_needs_p_above_two():
    with pytest.raises(BranchError, match='degenerate'):
        bellman_core.solve_pogorelov_minus(ConjugatePair.from_p(2.0))


def test_minus_residuals_reject_plus_solution(pair3):
    with pytest.raises(BranchError):
        bellman_core.minus_branch_residuals(bellman_core.solve_pogorelov_plus(pair3))


def test_closed_minus_form_is_degenerate_and_below_obstacle(minus3):
    for u, v in POINTS:
        point = bellman_core.eval_closed_p3_minus(u, v, minus3)
        assert point.branch == 'minus'
        assert point.det_residual <= bellman_core.DET_TOL
        assert point.bound_slack >= -1e-9 * point.phi


def test_closed_minus_form_touches_obstacle_on_its_curve(minus3):
    # homogeneous of degree 3 under (u, v) -> (l u, l^2 v); contact at v = gamma u^2
    for u in (0.5, 1.0, 3.0):
        point = bellman_core.eval_closed_p3_minus(u, minus3.gamma * u * u, minus3)
        assert point.value == pytest.approx(point.phi, rel=1e-9)


def test_closed_minus_form_matches_finite_differences(minus3):
    u, v, h = 0.9, 1.6, 1e-6
    point = bellman_core.eval_closed_p3_minus(u, v, minus3)

    def value(a, b):
        return bellman_core.eval_closed_p3_minus(a, b, minus3).value

    assert point.b_u == pytest.approx((value(u + h, v) - value(u - h, v)) / (2 * h), rel=1e-7)
    assert point.b_v == pytest.approx((value(u, v + h) - value(u, v - h)) / (2 * h), rel=1e-7)
    mixed = (value(u + h, v + h) - value(u + h, v - h) - value(u - h, v + h) + value(u - h, v - h)) / (4 * h * h)
    assert point.b_uv == pytest.approx(mixed, rel=1e-4)


def test_closed_minus_form_requires_p3_and_nonnegative_inputs(minus3):
    with pytest.raises(DomainError):
        bellman_core.eval_closed_p3_minus(-1.0, 1.0, minus3)
    sol4 = bellman_core.solve_pogorelov_minus(ConjugatePair.from_p(4.0))
    with pytest.raises(BranchError):
        bellman_core.eval_closed_p3_minus(1.0, 1.0, sol4)


# -- grid scans ------------------------------------------------------------------


def test_eval_grid_plus(pair3):
    rows, summary = bellman_core.eval_grid(pair3, 'plus', points=6)
    assert len(rows) == 36
    assert list(rows[0]) == bellman_core.GRID_COLUMNS
    assert summary.passed
    assert summary.max_det_residual <= bellman_core.DET_TOL
    assert [r['u'] for r in rows[:6]] == [rows[0]['u']] * 6
    assert rows[0]['v'] == pytest.approx(log_grid(1e-2, 1e2, 6)[0])


def test_eval_grid_minus(pair3):
    rows, summary = bellman_core.eval_grid(pair3, 'minus', points=5)
    assert len(rows) == 25
    assert summary.branch == 'minus'
    assert summary.passed


def test_eval_grid_rejects_unknown_branch(pair3):
    with pytest.raises(BranchError):
        bellman_core.eval_grid(pair3, 'sideways', points=3)


# -- full-scale runs ---------------------------------------------------------------

FULL_GRID = log_grid(1e-2, 1e2, 50)
EPS = 2.0**-52


@pytest.mark.acceptance
def test_p3_grid_matches_closed_form(pair3):
    worst = 0.0
    for u in FULL_GRID:
        for v in FULL_GRID:
            exact = bellman_core.eval_closed_p3_plus(u, v)
            worst = max(worst, abs(bellman_core.eval_bellman(pair3, u, v).value - exact) / exact)
    assert worst <= 1e-10

    point = bellman_core.eval_bellman(pair3, 1.0, 1.0)
    assert abs(point.t - 3.0) <= 1e-12
    assert abs(point.value - 2.0) <= 1e-12
    assert abs(point.tau - 2.0) <= 1e-12


@pytest.mark.acceptance
@pytest.mark.parametrize('p', [2.2, 3.0, 4.0, 6.0])
def test_full_grid_degeneracy_and_identities(p):
    _, summary = bellman_core.eval_grid(ConjugatePair.from_p(p), 'plus', points=50)
    assert summary.points == 50
    assert summary.max_det_residual <= 1e-8
    assert summary.max_bvba_residual <= 1e-10
    assert summary.max_tau_identity_residual <= 1e-10
    assert summary.passed


@pytest.mark.acceptance
@pytest.mark.parametrize('p', [2.2, 3.0, 4.0, 6.0])
def test_full_grid_derivatives_against_finite_differences(p):
    # each difference may lose up to a few hundred ulps of the function it differentiates
    pair = ConjugatePair.from_p(p)

    def close(analytic, fd, magnitude, h, rel):
        return abs(analytic - fd) <= rel * abs(analytic) + 500.0 * EPS * magnitude / h

    for u in FULL_GRID:
        for v in FULL_GRID:
            hu, hv = 1e-5 * u, 1e-5 * v
            point = bellman_core.eval_bellman(pair, u, v)
            up, um = bellman_core.eval_bellman(pair, u + hu, v), bellman_core.eval_bellman(pair, u - hu, v)
            vp, vm = bellman_core.eval_bellman(pair, u, v + hv), bellman_core.eval_bellman(pair, u, v - hv)

            assert close(point.b_u, (up.value - um.value) / (2 * hu), max(point.value, u * v), hu, 1e-5), (u, v)
            assert close(point.b_v, (vp.value - vm.value) / (2 * hv), max(point.value, u * v), hv, 1e-5), (u, v)
            assert close(point.b_uu, (up.b_u - um.b_u) / (2 * hu), max(abs(point.b_u), v), hu, 1e-4), (u, v)
            assert close(point.b_vv, (vp.b_v - vm.b_v) / (2 * hv), max(abs(point.b_v), u), hv, 1e-4), (u, v)
            assert close(point.b_uv, (vp.b_u - vm.b_u) / (2 * hv), max(abs(point.b_u), v), hv, 1e-4), (u, v)
