"""Four-variable lift of the Bellman functions and its Hessian certificates.

A point y = (y11, y12, y21, y22) is seen as two planar vectors y1, y2 with
norms x1, x2, and the lifted function is B(x1, x2). Its second differential
splits into the base Hessian acting on the radial parts of dy and a
rotational part weighted by B_u/x1 and B_v/x2.
"""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import bellman_core
from .errors import DomainError, PreconditionError
from .types import (
    BellmanPoint,
    CertificateBreakdown,
    CertificateScanRow,
    ConjugatePair,
    Config,
    IdentityCheck,
    KeyInequalityResult,
    LiftedPoint,
    PogorelovSolution,
    QuadraticFormDecomposition,
    TauConditionReport,
)
from .utils import log_grid, make_rng

logger = logging.getLogger(__name__)

Vector4 = Tuple[float, float, float, float]

ORTH_TOL = 1e-12
SLACK_TOL = 1e-12
KEY_TOL = 1e-10
FD_REL_STEP = 1e-3

SCAN_COLUMNS = ['x1', 'x2', 'min_slack_tau_cond', 'min_slack_key', 'max_fd_error']

# spawn-key prefix of the certificate sampling streams
CERTIFY_STREAM = 7


def decompose_form(A: float, B: float, C: float) -> QuadraticFormDecomposition:
    """Split A x^2 + 2B xy + C y^2 into D(tau x^2 + y^2/tau) plus a square.

    D = sqrt(AC) - |B| is the best constant in Q >= 2D|x||y|.

    Raises:
        DomainError: If the form is not positive semidefinite with A, C > 0
    """
    if not all(math.isfinite(x) for x in (A, B, C)):
        raise DomainError(f'form coefficients must be finite ({A}, {B}, {C})')
    if A <= 0.0 or C <= 0.0 or A * C < B * B:
        raise DomainError(f'indefinite form: A={A}, B={B}, C={C}')
    D = max(math.sqrt(A * C) - abs(B), 0.0)
    return QuadraticFormDecomposition(A=A, B=B, C=C, D=D, tau=math.sqrt(A / C))


def extremal_ratio(decomp: QuadraticFormDecomposition) -> float:
    """Q / (2|x||y|) at the minimizing direction x = 1, y = -sign(B) tau; equals D."""
    y = -math.copysign(decomp.tau, decomp.B) if decomp.B != 0 else decomp.tau
    return decomp.form(1.0, y) / (2.0 * abs(y))


def lift(pair: ConjugatePair, y: Sequence[float], config: Optional[Config] = None, solution: Optional[PogorelovSolution] = None) -> LiftedPoint:
    """Attach the base function at the pair norms of y.

    The plus-branch implicit function is used unless a p = 3 minus-branch
    solution is given.
    """
    y = tuple(float(c) for c in y)
    if len(y) != 4:
        raise DomainError(f'lifted points have four coordinates, got {len(y)}')
    x1, x2 = math.hypot(y[0], y[1]), math.hypot(y[2], y[3])
    if solution is None:
        base = bellman_core.eval_bellman(pair, x1, x2, config)
    else:
        base = bellman_core.eval_closed_p3_minus(x1, x2, solution)
    return LiftedPoint(y=y, x1=x1, x2=x2, base=base)


def _projections(point: LiftedPoint, dy: Sequence[float]) -> Tuple[float, float, float, float]:
    """Radial parts r1, r2 and rotational parts T1, T2 of dy at the point."""
    y11, y12, y21, y22 = point.y
    d11, d12, d21, d22 = dy
    x1, x2 = point.x1, point.x2
    r1 = (y11 * d11 + y12 * d12) / x1
    r2 = (y21 * d21 + y22 * d22) / x2
    t1 = (y12 * d11 - y11 * d12) / x1
    t2 = (y22 * d21 - y21 * d22) / x2
    return r1, r2, t1, t2


def _require_regular(point: LiftedPoint) -> BellmanPoint:
    if point.x1 <= 0.0 or point.x2 <= 0.0:
        raise DomainError(f'zero pair norm (x1={point.x1}, x2={point.x2})')
    if not point.base.has_derivatives:
        raise DomainError('base point carries no derivatives')
    return point.base


def lifted_hessian_apply(point: LiftedPoint, dy: Sequence[float]) -> float:
    """Second differential of the lifted function in direction dy.

    The tangential defect |dy_i|^2 - (<y_i, dy_i>/x_i)^2 is computed as the
    squared rotational component, which is the same number without the
    cancellation.
    """
    base = _require_regular(point)
    r1, r2, t1, t2 = _projections(point, dy)
    return (
        base.b_uu * r1 * r1
        + 2.0 * base.b_uv * r1 * r2
        + base.b_vv * r2 * r2
        + base.b_u / point.x1 * t1 * t1
        + base.b_v / point.x2 * t2 * t2
    )


def lifted_value(pair: ConjugatePair, y: Sequence[float], config: Optional[Config] = None) -> float:
    return bellman_core.eval_bellman(pair, math.hypot(y[0], y[1]), math.hypot(y[2], y[3]), config).value


def fd_lifted_second_derivative(func: Callable[[Sequence[float]], float], y: Sequence[float], dy: Sequence[float], h: float) -> float:
    """Central second difference (f(y + h dy) - 2 f(y) + f(y - h dy)) / h^2."""
    y, dy = np.asarray(y, dtype=float), np.asarray(dy, dtype=float)
    return (func(y + h * dy) - 2.0 * func(y) + func(y - h * dy)) / (h * h)


def fd_error(pair: ConjugatePair, point: LiftedPoint, dy: Sequence[float], config: Optional[Config] = None) -> float:
    """Relative gap between the analytic lifted form and its finite-difference estimate."""
    base = _require_regular(point)
    norm_dy = math.sqrt(sum(c * c for c in dy))
    if norm_dy == 0.0:
        return 0.0
    h = FD_REL_STEP * min(point.x1, point.x2) / norm_dy
    analytic = lifted_hessian_apply(point, dy)
    numeric = fd_lifted_second_derivative(lambda z: lifted_value(pair, z, config), point.y, dy, h)
    scale = (
        abs(base.b_uu) + abs(base.b_uv) + abs(base.b_vv) + abs(base.b_u) / point.x1 + abs(base.b_v) / point.x2
    ) * norm_dy**2
    return abs(analytic - numeric) / max(abs(analytic), 1e-3 * scale)


def certificate_p3(point: LiftedPoint, dy: Sequence[float]) -> CertificateBreakdown:
    """Sum-of-squares form of the lifted Hessian for the p = 3 plus branch.

    With R = sqrt(x1^2 + 3 x2) every term is nonnegative and the four add up
    to lifted_hessian_apply.
    """
    base = _require_regular(point)
    if base.branch != 'plus' or abs(base.p - 3.0) > 1e-12:
        raise DomainError(f'certificate is stated for the p=3 plus branch (got {base.branch}, p={base.p})')
    tau = base.tau
    r1, r2, _, t2 = _projections(point, dy)
    R = math.sqrt(point.x1**2 + 3.0 * point.x2)
    dy1 = dy[0] ** 2 + dy[1] ** 2
    dy2 = dy[2] ** 2 + dy[3] ** 2
    square = r1 + r2 / tau
    return CertificateBreakdown(
        term_tau=tau * dy1,
        term_inv_tau=dy2 / tau,
        term_rotational=3.0 * tau / (4.0 * point.x2) * t2 * t2,
        term_square=tau * point.x1 / R * square * square,
    )


def tau_condition_slack(base: BellmanPoint) -> float:
    """B_v/v - beta/alpha + 2/tau - p/tau, read off the Hessian entries.

    With B_uu = m alpha^2, B_uv + 1 = m alpha beta and B_vv = m beta^2,
    beta/alpha = B_vv/(B_uv + 1) and 1/tau = (B_uv + 1)/B_uu. The stored
    alpha, beta and tau are not used, so a wrong second derivative shows
    up here. For the plus branch the value should be (p/q - 1) u/v >= 0;
    at p = 3 it is 3 tau/(4 x2) + 2/tau - 3/tau.
    """
    if not base.has_derivatives or base.v == 0.0 or not base.b_uu:
        raise DomainError(f'tau condition needs v > 0 and B_uu != 0 (got u={base.u}, v={base.v})')
    p = base.p
    return base.b_v / base.v - base.b_vv / base.b_uv_plus1 + (2.0 - p) * base.b_uv_plus1 / base.b_uu


def check_tau_condition(
    pair: Optional[ConjugatePair] = None,
    branch: str = 'plus',
    points: int = 50,
    lo: float = 1e-2,
    hi: float = 1e2,
    include_axis: bool = True,
) -> TauConditionReport:
    """Minimum over a first-quadrant grid of the tau condition at p = 3.

    plus:  3 tau/(4 x2) + 2/tau - 3/tau
    minus: 3 C2 tau/(4 C1^2 x2) + 2/tau - c/tau with c = 2 + C2/C1^2

    For the minus branch the report also carries the largest c the grid
    supports, 2 + min of 3 C2 tau^2/(4 C1^2 x2).
    """
    pair = pair or ConjugatePair.from_p(3.0)
    if abs(pair.p - 3.0) > 1e-12:
        raise DomainError(f'the tau condition is checked at p=3 (got p={pair.p})')
    x1_values = ([0.0] if include_axis else []) + log_grid(lo, hi, points)
    x2_values = log_grid(lo, hi, points)

    min_slack, worst = math.inf, (1.0, 1.0)
    if branch == 'plus':
        c = 3.0
        for x1 in x1_values:
            for x2 in x2_values:
                tau = bellman_core.eval_bellman(pair, x1, x2).tau
                slack = 3.0 * tau / (4.0 * x2) + 2.0 / tau - 3.0 / tau
                if slack < min_slack:
                    min_slack, worst = slack, (x1, x2)
        return TauConditionReport(
            branch='plus', c=c, points=len(x1_values) * len(x2_values), min_slack=min_slack, worst_point=worst, holds=min_slack >= -SLACK_TOL
        )

    sol = bellman_core.solve_pogorelov_minus(pair)
    c = sol.improvement_c
    ratio = sol.C2 / (sol.C1 * sol.C1)
    min_term = math.inf
    for x1 in x1_values:
        for x2 in x2_values:
            tau = bellman_core.eval_closed_p3_minus(x1, x2, sol).tau
            term = 3.0 * ratio * tau * tau / (4.0 * x2)
            min_term = min(min_term, term)
            slack = (term + 2.0 - c) / tau
            if slack < min_slack:
                min_slack, worst = slack, (x1, x2)
    holds = min_slack >= -SLACK_TOL
    if not holds:
        logger.info('minus-branch tau condition fails for c=%.10g (min slack %.4g at %s); grid supports c=%.10g', c, min_slack, worst, 2.0 + min_term)
    return TauConditionReport(
        branch='minus',
        c=c,
        points=len(x1_values) * len(x2_values),
        min_slack=min_slack,
        worst_point=worst,
        holds=holds,
        supported_c=2.0 + min_term,
    )


def check_orthonormality(dy: Sequence[float], dy_prime: Sequence[float], tol: float = ORTH_TOL) -> None:
    """Raise PreconditionError unless the second blocks of dy, dy' are orthonormal-paired.

    dy21 dy22 + dy'21 dy'22 = 0 and dy21^2 + dy'21^2 = dy22^2 + dy'22^2.
    """
    a, b = dy[2], dy[3]
    c, d = dy_prime[2], dy_prime[3]
    scale = max(1.0, a * a + b * b + c * c + d * d)
    cross = abs(a * b + c * d)
    if cross > tol * scale:
        raise PreconditionError('orthogonality dy21*dy22 + dy\'21*dy\'22 = 0', cross)
    norms = abs(a * a + c * c - b * b - d * d)
    if norms > tol * scale:
        raise PreconditionError('equal norms dy21^2 + dy\'21^2 = dy22^2 + dy\'22^2', norms)


def key_inequality_pair(point: LiftedPoint, dy: Sequence[float], dy_prime: Sequence[float]) -> KeyInequalityResult:
    """Compare Q(dy) + Q(dy') with 2 sqrt(p/2) xi1 xi2 under the orthonormality constraints.

    Raises:
        PreconditionError: If the constraint on the second blocks fails
    """
    check_orthonormality(dy, dy_prime)
    base = _require_regular(point)
    p, tau = base.p, base.tau
    lhs = lifted_hessian_apply(point, dy) + lifted_hessian_apply(point, dy_prime)
    xi1_sq = dy[0] ** 2 + dy[1] ** 2 + dy_prime[0] ** 2 + dy_prime[1] ** 2
    xi2_sq = dy[2] ** 2 + dy[3] ** 2 + dy_prime[2] ** 2 + dy_prime[3] ** 2
    rhs = 2.0 * math.sqrt(p / 2.0) * math.sqrt(xi1_sq * xi2_sq)
    return KeyInequalityResult(lhs=lhs, rhs=rhs, slack=lhs - rhs, lower_bound=tau * xi1_sq + p / (2.0 * tau) * xi2_sq)


def constrained_pair(rng: np.random.Generator) -> Tuple[Vector4, Vector4]:
    """Random (dy, dy') meeting the constraints: dy' second block is (-b, a) for dy's (a, b)."""
    d = rng.standard_normal(6)
    dy = (d[0], d[1], d[2], d[3])
    dy_prime = (d[4], d[5], -d[3], d[2])
    return tuple(float(x) for x in dy), tuple(float(x) for x in dy_prime)


def orthogonality_identity(U: float, V: float, u: Sequence[float], v: Sequence[float], tol: float = ORTH_TOL) -> IdentityCheck:
    """V^2|u|^2 + U^2|v|^2 against (1/2)(U^2 + V^2)(|u|^2 + |v|^2) for orthogonal, equal-norm u, v.

    Raises:
        PreconditionError: If u, v are not orthogonal or have different norms
    """
    u1, u2 = u
    v1, v2 = v
    scale = max(1.0, u1 * u1 + u2 * u2 + v1 * v1 + v2 * v2)
    if abs(u1 * v1 + u2 * v2) > tol * scale:
        raise PreconditionError('orthogonality u.v = 0', abs(u1 * v1 + u2 * v2))
    if abs(u1 * u1 + u2 * u2 - v1 * v1 - v2 * v2) > tol * scale:
        raise PreconditionError('equal norms |u| = |v|', abs(u1 * u1 + u2 * u2 - v1 * v1 - v2 * v2))
    lhs = V * V * u1 * u1 + U * U * v1 * v1 + V * V * u2 * u2 + U * U * v2 * v2
    rhs = 0.5 * (U * U + V * V) * (u1 * u1 + u2 * u2 + v1 * v1 + v2 * v2)
    return IdentityCheck(lhs=lhs, rhs=rhs)


def certificate_scan(
    pair: ConjugatePair,
    points: int = 8,
    samples: int = 20,
    seed: int = 0,
    lo: float = 1e-1,
    hi: float = 1e1,
    config: Optional[Config] = None,
) -> List[CertificateScanRow]:
    """Dense certificate checks on a points x points grid of (x1, x2).

    At each grid node the pair vectors get random directions, then `samples`
    random dy are used for the finite-difference comparison and `samples`
    constrained pairs for the key inequality. Every node draws from its own
    stream so rows do not depend on scan order.
    """
    if samples < 1:
        raise DomainError(f'samples must be positive (got {samples})')
    rows = []
    axis = log_grid(lo, hi, points)
    for i, x1 in enumerate(axis):
        for j, x2 in enumerate(axis):
            rng = make_rng(seed, CERTIFY_STREAM, i, j)
            th1, th2 = rng.uniform(0.0, 2.0 * math.pi, 2)
            y = (x1 * math.cos(th1), x1 * math.sin(th1), x2 * math.cos(th2), x2 * math.sin(th2))
            point = lift(pair, y, config)

            tau_slack = tau_condition_slack(point.base)
            max_fd = 0.0
            min_key = math.inf
            for _ in range(samples):
                dy = tuple(float(x) for x in rng.standard_normal(4))
                max_fd = max(max_fd, fd_error(pair, point, dy, config))
                dy_a, dy_b = constrained_pair(rng)
                result = key_inequality_pair(point, dy_a, dy_b)
                min_key = min(min_key, result.slack / max(result.lhs + result.rhs, 1e-300))
            rows.append(CertificateScanRow(x1=x1, x2=x2, min_slack_tau_cond=tau_slack, min_slack_key=min_key, max_fd_error=max_fd))
    logger.info('certificate scan p=%g: %d nodes x %d samples', pair.p, len(rows), samples)
    return rows


def scan_passed(rows: Sequence[CertificateScanRow], fd_tol: float = 1e-4) -> bool:
    return all(r.min_slack_tau_cond >= -SLACK_TOL and r.min_slack_key >= -KEY_TOL and r.max_fd_error <= fd_tol for r in rows)


def certificate_check(points: int = 8, samples: int = 20, seed: int = 0, lo: float = 1e-1, hi: float = 1e1) -> Tuple[float, float]:
    """Compare the p = 3 certificate with the lifted Hessian on random directions.

    Returns:
        (max relative gap between the certificate total and the form, min certificate term)
    """
    pair = ConjugatePair.from_p(3.0)
    max_gap, min_term = 0.0, math.inf
    axis = log_grid(lo, hi, points)
    for i, x1 in enumerate(axis):
        for j, x2 in enumerate(axis):
            rng = make_rng(seed, CERTIFY_STREAM + 1, i, j)
            th1, th2 = rng.uniform(0.0, 2.0 * math.pi, 2)
            point = lift(pair, (x1 * math.cos(th1), x1 * math.sin(th1), x2 * math.cos(th2), x2 * math.sin(th2)))
            for _ in range(samples):
                dy = tuple(float(x) for x in rng.standard_normal(4))
                cert = certificate_p3(point, dy)
                form = lifted_hessian_apply(point, dy)
                max_gap = max(max_gap, abs(cert.total - form) / max(abs(form), 1e-300))
                min_term = min(min_term, cert.term_tau, cert.term_inv_tau, cert.term_rotational, cert.term_square)
    return max_gap, min_term
