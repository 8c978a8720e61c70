"""Two-variable Bellman functions.

- the implicit general-q function B(u, v) defined through t(u, v)
- closed forms at p = 3 for both boundary-system branches
- the plus and minus solutions of the Pogorelov boundary system
- saturation and grid checks of the resulting functions
"""

import logging
import math
import sys
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from .errors import BranchError, DomainError, NumericError
from .types import BellmanPoint, ConjugatePair, Config, GridScanSummary, PogorelovSolution, SaturationReport
from .utils import log_grid

logger = logging.getLogger(__name__)

_DEFAULTS = Config()

PLUS_RESIDUAL_TOL = 1e-12
DET_TOL = 1e-8
IDENTITY_TOL = 1e-10
BOUND_TOL = 1e-12
SATURATION_TOL = 1e-9

# t must stay a normal double with headroom for t^(1/q) u and S
MIN_LOG_T = math.log(sys.float_info.min) + 8.0
MAX_LOG_T = math.log(sys.float_info.max) - 8.0

GRID_COLUMNS = ['u', 'v', 't', 'B', 'B_u', 'B_v', 'tau', 'det_residual', 'bound_slack']


def safeguarded_newton(
    func: Callable[[float], float],
    dfunc: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float,
    max_iter: int = 200,
) -> Tuple[float, int]:
    """Newton iteration kept inside a sign-change bracket.

    A Newton step is taken when it lands inside the bracket and shrinks the
    step fast enough; otherwise the bracket is bisected.

    Returns:
        (root, iterations)

    Raises:
        NumericError: If [lo, hi] does not bracket a root or the cap is hit
    """
    fl, fh = func(lo), func(hi)
    if fl == 0.0:
        return lo, 0
    if fh == 0.0:
        return hi, 0
    if (fl > 0.0) == (fh > 0.0):
        raise NumericError('root is not bracketed', lo=lo, hi=hi, f_lo=fl, f_hi=fh)
    xl, xh = (lo, hi) if fl < 0.0 else (hi, lo)

    x = 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    dx = dx_old
    f, df = func(x), dfunc(x)
    for it in range(1, max_iter + 1):
        if ((x - xh) * df - f) * ((x - xl) * df - f) > 0.0 or abs(2.0 * f) > abs(dx_old * df):
            dx_old = dx
            dx = 0.5 * (xh - xl)
            x = xl + dx
            if xl == x:
                return x, it
        else:
            dx_old = dx
            dx = f / df
            prev = x
            x = x - dx
            if prev == x:
                return x, it
        if abs(dx) < xtol:
            return x, it
        f, df = func(x), dfunc(x)
        if f < 0.0:
            xl = x
        else:
            xh = x
    raise NumericError('safeguarded Newton hit the iteration cap', iterations=max_iter, last=x, residual=f)


def _fold(u: float, v: float) -> Tuple[float, float]:
    if not (math.isfinite(u) and math.isfinite(v)):
        raise DomainError(f'(u, v) must be finite, got ({u}, {v})')
    return abs(u), abs(v)


def t_coefficients(pair: ConjugatePair) -> Tuple[float, float]:
    """(c1, c2) with t = c1 t^(1/q) u + c2 t^(1/p) v."""
    p, q = pair.p, pair.q
    return p ** (1.0 / p) / q, p ** (1.0 / q) / p


def solve_t(pair: ConjugatePair, u: float, v: float, config: Optional[Config] = None) -> float:
    """Unique positive root t of t - c1 t^(1/q) u - c2 t^(1/p) v.

    The point is scaled so that max(u^p, v^q) = 1, solved there and scaled
    back by homogeneity, t(c^(1/p) u, c^(1/q) v) = c t(u, v).

    Raises:
        DomainError: At (0, 0), where t = 0 is degenerate, or when t falls
            outside the normal double range
        NumericError: If the solver does not converge
    """
    cfg = config or _DEFAULTS
    u, v = _fold(u, v)
    if u == 0.0 and v == 0.0:
        raise DomainError('t=0 degenerate point (u, v) = (0, 0)')
    p, q = pair.p, pair.q
    c1, c2 = t_coefficients(pair)

    # log of max(u^p, v^q); u^p itself overflows or underflows at extreme inputs
    log_u = math.log(u) if u > 0.0 else -math.inf
    log_v = math.log(v) if v > 0.0 else -math.inf
    log_scale = max(p * log_u, q * log_v)
    un = math.exp(log_u - log_scale / p) if u > 0.0 else 0.0
    vn = math.exp(log_v - log_scale / q) if v > 0.0 else 0.0

    def f(t: float) -> float:
        return t - c1 * t ** (1.0 / q) * un - c2 * t ** (1.0 / p) * vn

    def df(t: float) -> float:
        return 1.0 - (c1 / q) * t ** (1.0 / q - 1.0) * un - (c2 / p) * t ** (1.0 / p - 1.0) * vn

    # one-variable roots; the other term only pushes f further down
    t_lo = max((c1 * un) ** p, (c2 * vn) ** q)
    t_hi = 2.0 * t_lo
    for _ in range(200):
        if f(t_hi) > 0.0:
            break
        t_lo, t_hi = t_hi, 2.0 * t_hi
    else:
        raise NumericError('could not bracket t', u=u, v=v, p=p, t_hi=t_hi)

    t, iterations = safeguarded_newton(f, df, t_lo, t_hi, xtol=4e-16 * t_hi, max_iter=cfg.t_solver_max_iter)
    residual = abs(f(t)) / t
    log_t = math.log(t) + log_scale
    if not MIN_LOG_T < log_t < MAX_LOG_T:
        raise DomainError(f't({u:g}, {v:g}) = exp({log_t:.1f}) is not representable at p = {p:g}')
    t_full = math.exp(log_t)
    logger.debug('solve_t p=%g (%g, %g): t=%.17g after %d iterations, residual %.3g', p, u, v, t_full, iterations, residual)
    if residual > 1e-12:
        raise NumericError('t residual above tolerance', u=u, v=v, p=p, t=t_full, residual=residual)
    return t_full


def eval_bellman(pair: ConjugatePair, u: float, v: float, config: Optional[Config] = None) -> BellmanPoint:
    """Value and analytic derivatives of the implicit plus-branch function.

    Negative inputs are folded to (|u|, |v|) and the returned point carries
    the folded coordinates. At (0, 0) only the value 0 is reported.
    """
    u, v = _fold(u, v)
    p, q = pair.p, pair.q
    if u == 0.0 and v == 0.0:
        return BellmanPoint(branch='plus', p=p, u=0.0, v=0.0, t=0.0, value=0.0)

    t = solve_t(pair, u, v, config)
    grad_u = p ** (1.0 / p) * t ** (1.0 / q)  # B_u + v
    grad_v = p ** (1.0 / q) * t ** (1.0 / p)  # B_v + u
    S = grad_u * u + grad_v * v
    alpha = p * grad_u / S
    beta = q * grad_v / S
    m = S / (p * q)

    return BellmanPoint(
        branch='plus',
        p=p,
        u=u,
        v=v,
        t=t,
        value=grad_u * u / p + grad_v * v / q - u * v,
        b_u=grad_u - v,
        b_v=grad_v - u,
        b_uu=m * alpha * alpha,
        b_uv_plus1=m * alpha * beta,
        b_vv=m * beta * beta,
        S=S,
        alpha=alpha,
        beta=beta,
        tau=alpha / beta,
    )


def eval_closed_p3_plus(u: float, v: float) -> float:
    """(2/9)((u^2 + 3v)^(3/2) + |u|^3), with both arguments folded."""
    u, v = _fold(u, v)
    return 2.0 / 9.0 * ((u * u + 3.0 * v) ** 1.5 + u**3)


def bvba_residual(point: BellmanPoint) -> Optional[float]:
    """Relative residual of B_v/v - beta/alpha + 2/tau = p/tau + (p/q - 1) u/v.

    None when v = 0 or the point carries no derivatives.
    """
    if not point.has_derivatives or point.v == 0.0 or point.alpha is None:
        return None
    p, q = point.p, point.q
    terms = [
        point.b_v / point.v,
        -point.beta / point.alpha,
        2.0 / point.tau,
        -p / point.tau,
        -(p / q - 1.0) * point.u / point.v,
    ]
    scale = max(max(abs(x) for x in terms), 1e-300)
    return abs(math.fsum(terms)) / scale


def tau_identity_residual(point: BellmanPoint) -> Optional[float]:
    """|B_u/u - tau| / tau, None when u = 0."""
    if not point.has_derivatives or point.u == 0.0 or not point.tau:
        return None
    return abs(point.b_u / point.u - point.tau) / point.tau


# -- Pogorelov boundary system ------------------------------------------------


def solve_pogorelov_plus(pair: ConjugatePair) -> PogorelovSolution:
    """Plus-branch solution: gamma = 1, C1 = p^(1/p)/p, C2 = p^(1/q)/q.

    Raises:
        NumericError: If a boundary relation is off by more than 1e-12, or at
            p = 3 if gamma = 1 is not the only positive solution of the
            reduced cubic
    """
    p, q = pair.p, pair.q
    c1 = p ** (1.0 / p) / p
    c2 = p ** (1.0 / q) / q
    sol = PogorelovSolution(branch='plus', p=p, q=q, C1=c1, C2=c2, gamma=1.0, a=q * c2, b=p * c1)

    residuals = pogorelov_plus_residuals(sol)
    worst = max(residuals, key=residuals.get)
    if residuals[worst] > PLUS_RESIDUAL_TOL:
        raise NumericError('plus-branch relation violated', relation=worst, residual=residuals[worst], p=p)
    if abs(p - 3.0) < 1e-12:
        unique, min_value = gamma_cubic_check()
        if not unique:
            raise NumericError('gamma = 1 is not the unique positive solution', min_value=min_value)
    return sol


def pogorelov_plus_residuals(sol: PogorelovSolution) -> Dict[str, float]:
    """Relative residuals of the five plus-branch boundary relations."""
    p, q, c1, c2, g, a, b = sol.p, sol.q, sol.C1, sol.C2, sol.gamma, sol.a, sol.b

    def rel(lhs: float, rhs: float) -> float:
        return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)

    return {
        # obstacle contact on both coordinate sides of the curve
        'contact': max(rel((p * c1 * a - 1.0) * g**q, q * c2 * b - 1.0), rel(p * c1 * a - 1.0, p - 1.0)),
        'curve': rel(a**q / b**p, 1.0 / g**q),
        'product_ab': max(rel(a * b, p), rel((p / q) * c1 * a + (q / p) * c2 * b, p)),
        'value_match': rel(c1 * a + c2 * b - 1.0, (p - 1.0) * (1.0 / (p * g) + g ** (q - 1.0) / q)),
        'C1C2': rel(c1 * c2, 1.0 / q),
    }


def gamma_cubic_check(points: int = 4001) -> Tuple[bool, float]:
    """Check that gamma = 1 is the only positive root of 2 sqrt(g) + 1 = 4 - 1/g.

    With s = sqrt(g) the difference is (s - 1)^2 (2s + 1) / s^2, a double
    root, so the scan looks for h >= 0 with near-zeros clustered at 1.

    Returns:
        (unique, min of h over the scan)
    """
    g = np.logspace(-3, 3, points)
    h = 2.0 * np.sqrt(g) - 3.0 + 1.0 / g
    near = g[h <= 1e-8]
    unique = bool(h.min() >= -1e-12 and near.size > 0 and np.all(np.abs(near - 1.0) <= 1e-3))
    return unique, float(h.min())


def _minus_delta_equation(p: float) -> Callable[[float], float]:
    return lambda d: d ** (p - 1.0) - (p - 1.0) * d + 2.0 - p


def solve_pogorelov_minus(pair: ConjugatePair) -> PogorelovSolution:
    """Minus-branch constants for p > 2.

    delta > 1 solves delta^(p-1) - (p-1) delta + 2 - p = 0 and gamma = delta^(p-1).

    Raises:
        BranchError: If p <= 2, where the branch collapses to delta = 1
        NumericError: If no bracket for delta is found
    """
    p, q = pair.p, pair.q
    if p <= 2.0:
        raise BranchError(f'branch degenerate: the minus branch needs p > 2 (got p={p})')

    g = _minus_delta_equation(p)
    lo, hi = 1.0 + 1e-9, 2.0
    for _ in range(64):
        if g(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise NumericError('no bracket for delta', p=p, hi=hi)
    delta = bisect(g, lo, hi, xtol=1e-15, maxiter=400)
    logger.debug('minus branch p=%g: delta=%.17g in [%g, %g]', p, delta, lo, hi)

    gamma = delta ** (p - 1.0)
    c2 = (p * ((p - 1.0) * gamma ** (1.0 / (p - 1.0)) - 1.0) ** (p - 1.0) / (gamma - (p - 1.0))) ** (1.0 / p)
    c1 = -p / c2
    return PogorelovSolution(
        branch='minus',
        p=p,
        q=q,
        C1=c1,
        C2=c2,
        gamma=gamma,
        a=1.0 / p - 1.0 / (q * gamma),
        b=1.0 / p - gamma ** (q - 1.0) / q,
        delta=delta,
        improvement_c=2.0 + c2 / (c1 * c1),
    )


def minus_branch_residuals(sol: PogorelovSolution) -> Dict[str, float]:
    """Residuals of the relations a minus-branch solution has to satisfy."""
    if sol.branch != 'minus':
        raise BranchError(f'expected a minus-branch solution, got {sol.branch}')
    p, q, c1, c2, g, a, b = sol.p, sol.q, sol.C1, sol.C2, sol.gamma, sol.a, sol.b
    lhs = (g / p - 1.0 / q) ** q * c2**q
    rhs = (g ** (q - 1.0) / q - 1.0 / p) ** p * abs(c1) ** p
    return {
        'C1C2': abs(c1 * c2 + p) / p,
        'power_balance': abs(lhs - rhs) / max(abs(lhs), abs(rhs)),
        'ab_relation': abs(a * b - (a / q + b / p)),
        'gamma_equation': abs(g ** (q - 1.0) - (q - 1.0) * g + 2.0 - q),
        'delta_equation': abs(_minus_delta_equation(p)(sol.delta)),
    }


def eval_closed_p3_minus(u: float, v: float, sol: PogorelovSolution) -> BellmanPoint:
    """Minus-branch closed form at p = 3.

    With R = sqrt(C1^2 u^2 + 3 C2 v), B = (2/27)(R^3 + C1^3 u^3). The
    degenerate matrix of this branch is the Hessian with B_uv - 1.

    Raises:
        BranchError: If sol is not the p = 3 minus-branch solution
        DomainError: For negative or non-finite inputs
    """
    if sol.branch != 'minus' or abs(sol.p - 3.0) > 1e-12:
        raise BranchError(f'closed form needs the p=3 minus branch (got {sol.branch}, p={sol.p})')
    if not (math.isfinite(u) and math.isfinite(v)) or u < 0.0 or v < 0.0:
        raise DomainError(f'minus-branch closed form is defined for u, v >= 0 (got ({u}, {v}))')
    c1, c2 = sol.C1, sol.C2
    if u == 0.0 and v == 0.0:
        return BellmanPoint(branch='minus', p=3.0, u=0.0, v=0.0, t=0.0, value=0.0)

    R = math.sqrt(c1 * c1 * u * u + 3.0 * c2 * v)
    abs_c1 = abs(c1)
    # R + C1 u written without cancellation
    r_plus = 3.0 * c2 * v / (R + abs_c1 * u)
    b_uv = abs_c1 * u / R
    return BellmanPoint(
        branch='minus',
        p=3.0,
        u=u,
        v=v,
        t=(r_plus / 3.0) ** 3,
        value=2.0 / 27.0 * (R**3 + c1**3 * u**3),
        b_u=2.0 / 9.0 * c1 * c1 * u * (c1 * u + R),
        b_v=c2 * R / 3.0,
        b_uu=2.0 / 9.0 * c1 * c1 * r_plus * r_plus / R,
        b_uv_plus1=b_uv + 1.0,
        b_vv=c2 * c2 / (2.0 * R),
        tau=2.0 * abs_c1 * v / (R + abs_c1 * u),
    )


# -- checks ---------------------------------------------------------------------


def check_saturation(pair: ConjugatePair, samples: int = 50, lo: float = 1e-2, hi: float = 1e2, config: Optional[Config] = None) -> SaturationReport:
    """Free-boundary checks of the plus branch.

    On the curve v^q = u^p the function must touch phi with a common tangent
    plane; off the curve it must stay below phi.
    """
    p = pair.p
    value_gap = tangent_gap = 0.0
    worst_value = worst_tangent = (1.0, 1.0)
    for s in log_grid(lo, hi, samples):
        u, v = s, s ** (p - 1.0)
        point = eval_bellman(pair, u, v, config)
        phi = point.phi
        gap = abs(point.value - phi) / phi
        if gap > value_gap:
            value_gap, worst_value = gap, (u, v)
        phi_u = (p - 1.0) * u ** (p - 1.0)
        phi_v = (p - 1.0) * v ** (pair.q - 1.0)
        cross = abs(point.b_u * phi_v - point.b_v * phi_u) / (abs(point.b_u * phi_v) + abs(point.b_v * phi_u))
        if cross > tangent_gap:
            tangent_gap, worst_tangent = cross, (u, v)

    min_slack, worst_off = math.inf, (1.0, 1.0)
    axis = log_grid(lo, hi, samples)
    for u in axis:
        for v in axis:
            point = eval_bellman(pair, u, v, config)
            slack = point.bound_slack / point.phi
            if slack < min_slack:
                min_slack, worst_off = slack, (u, v)

    passed = value_gap <= SATURATION_TOL and tangent_gap <= SATURATION_TOL and min_slack >= -BOUND_TOL
    if not passed:
        logger.warning('saturation check failed at p=%g: value %.3g, tangent %.3g, slack %.3g', p, value_gap, tangent_gap, min_slack)
    return SaturationReport(
        p=p,
        samples=samples,
        max_value_gap=value_gap,
        max_tangent_gap=tangent_gap,
        min_off_curve_slack=min_slack,
        worst_value_point=worst_value,
        worst_tangent_point=worst_tangent,
        worst_off_curve_point=worst_off,
        passed=passed,
    )


def eval_grid(
    pair: ConjugatePair,
    branch: str = 'plus',
    points: Optional[int] = None,
    lo: float = 1e-2,
    hi: float = 1e2,
    config: Optional[Config] = None,
) -> Tuple[List[dict], GridScanSummary]:
    """Scan B on a points x points log grid over [lo, hi]^2.

    Returns:
        (CSV rows keyed by GRID_COLUMNS, summary)
    """
    cfg = config or _DEFAULTS
    points = points or cfg.grid_points
    if branch == 'plus':

        def evaluate(u, v):
            return eval_bellman(pair, u, v, cfg)

    elif branch == 'minus':
        sol = solve_pogorelov_minus(pair)

        def evaluate(u, v):
            return eval_closed_p3_minus(u, v, sol)

    else:
        raise BranchError(f'unknown branch {branch!r}')

    rows = []
    max_det, min_slack, max_bvba, max_tau = 0.0, math.inf, 0.0, 0.0
    worst: Dict[str, Tuple[float, float]] = {}
    for u in log_grid(lo, hi, points):
        for v in log_grid(lo, hi, points):
            point = evaluate(u, v)
            det = point.det_residual
            slack = point.bound_slack
            rows.append(
                {
                    'u': u,
                    'v': v,
                    't': point.t,
                    'B': point.value,
                    'B_u': point.b_u,
                    'B_v': point.b_v,
                    'tau': point.tau,
                    'det_residual': det,
                    'bound_slack': slack,
                }
            )
            if det > max_det:
                max_det, worst['det_residual'] = det, (u, v)
            rel_slack = slack / point.phi
            if rel_slack < min_slack:
                min_slack, worst['bound_slack'] = rel_slack, (u, v)
            tau_res = tau_identity_residual(point)
            if tau_res is not None and tau_res > max_tau:
                max_tau, worst['tau_identity'] = tau_res, (u, v)
            if branch == 'plus':
                res = bvba_residual(point)
                if res is not None and res > max_bvba:
                    max_bvba, worst['bvba_identity'] = res, (u, v)

    passed = max_det <= DET_TOL and min_slack >= -BOUND_TOL and max_tau <= IDENTITY_TOL
    if branch == 'plus':
        passed = passed and max_bvba <= IDENTITY_TOL
    summary = GridScanSummary(
        p=pair.p,
        branch=branch,
        points=points,
        max_det_residual=max_det,
        min_bound_slack=min_slack,
        max_bvba_residual=max_bvba if branch == 'plus' else None,
        max_tau_identity_residual=max_tau,
        worst_points=worst,
        passed=passed,
    )
    logger.info('grid scan p=%g %s: max det %.3g, min slack %.3g, passed=%s', pair.p, branch, max_det, min_slack, passed)
    return rows, summary
