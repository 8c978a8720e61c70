"""Bounded Laguerre functions, their least roots in (0,1) and the sharp constants built from them."""

import logging
import math
from typing import Iterable, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import bisect

from .errors import DomainError, NumericError
from .types import ConjectureRow, ConjugatePair, Config, LaguerreSolution

logger = logging.getLogger(__name__)

_DEFAULTS = Config()


def _check_args(p: float, s: float) -> None:
    if not (math.isfinite(p) and math.isfinite(s)):
        raise DomainError(f'laguerre arguments must be finite (p={p}, s={s})')
    if p <= 0:
        raise DomainError(f'laguerre exponent must be positive (p={p})')
    if s < 0:
        raise DomainError(f'laguerre argument must be nonnegative (s={s})')


def laguerre_coefficients(p: float, s_max: float, config: Optional[Config] = None) -> np.ndarray:
    """Power-series coefficients of L_p, truncated for arguments up to s_max.

    c_0 = 1 and c_{k+1} = c_k (k - p) / (k + 1)^2. Truncation happens once the
    index has passed p and the term at s_max drops below the relative
    tolerance times the running sum; for integer p the series terminates.

    Raises:
        NumericError: If the term cap is reached first
    """
    cfg = config or _DEFAULTS
    _check_args(p, s_max)
    coefs = [1.0]
    total = 1.0
    c = 1.0
    power = 1.0
    for k in range(cfg.series_max_terms):
        c = c * (k - p) / ((k + 1) ** 2)
        power *= s_max
        coefs.append(c)
        term = c * power
        total += term
        if k + 1 > p and abs(term) <= cfg.series_rel_tol * abs(total):
            return np.array(coefs)
    raise NumericError(
        'laguerre series did not converge', p=p, s=s_max, terms=cfg.series_max_terms, last_term=term
    )


def laguerre_series(p: float, s: float, config: Optional[Config] = None) -> Tuple[float, float, float]:
    """Return (L_p(s), L_p'(s), L_p''(s)) from one truncated series."""
    coefs = laguerre_coefficients(p, s, config)
    d1 = P.polyder(coefs)
    d2 = P.polyder(d1)
    return float(P.polyval(s, coefs)), float(P.polyval(s, d1)), float(P.polyval(s, d2))


def laguerre_eval(p: float, s: float, config: Optional[Config] = None) -> float:
    """Evaluate the Laguerre function bounded at 0 with L_p(0) = 1.

    Args:
        p: Exponent, p > 0
        s: Argument, s >= 0

    Returns:
        L_p(s)

    Raises:
        DomainError: On non-finite or out-of-range inputs
    """
    return laguerre_series(p, s, config)[0]


def ode_residual(p: float, s: float, config: Optional[Config] = None) -> float:
    """s L'' + (1 - s) L' + p L, zero for the exact function."""
    value, d1, d2 = laguerre_series(p, s, config)
    return s * d2 + (1.0 - s) * d1 + p * value


def constants_from_root(z: float) -> Tuple[float, float]:
    """(c_left, c_right) = ((1/sqrt2) z/(1-z), sqrt2 (1-z)/z)."""
    return z / (1.0 - z) / math.sqrt(2.0), math.sqrt(2.0) * (1.0 - z) / z


def least_positive_root(p: float, config: Optional[Config] = None) -> LaguerreSolution:
    """Locate the least root of L_p in (0, 1).

    A uniform scan of (0, 1) brackets the first sign change, which is then
    refined by bisection.

    Raises:
        DomainError: If p <= 1
        NumericError: If no sign change shows up on the scan
    """
    cfg = config or _DEFAULTS
    if not math.isfinite(p) or p <= 1.0:
        raise DomainError(f'least_positive_root needs p > 1 (got {p})')

    coefs = laguerre_coefficients(p, 1.0, cfg)
    n = int(math.floor((1.0 - 1e-12) / cfg.root_scan_step))
    grid = np.arange(0, n + 1) * cfg.root_scan_step
    values = P.polyval(grid, coefs)

    # values[0] = L_p(0) = 1
    crossings = np.nonzero(values[1:] <= 0.0)[0]
    if crossings.size == 0:
        raise NumericError('no root in unit interval', p=p, scan_step=cfg.root_scan_step)
    i = int(crossings[0]) + 1
    lo, hi = float(grid[i - 1]), float(grid[i])
    logger.debug('p=%g: sign change bracketed in [%g, %g]', p, lo, hi)

    if values[i] == 0.0:
        z = hi
    else:
        z = bisect(lambda s: float(P.polyval(s, coefs)), lo, hi, xtol=cfg.root_tol, maxiter=200)
    c_left, c_right = constants_from_root(z)
    return LaguerreSolution(
        p=p,
        z_p=z,
        c_left=c_left,
        c_right=c_right,
        residual=abs(float(P.polyval(z, coefs))),
        scan_step=cfg.root_scan_step,
    )


def burkholder_constants(pair: ConjugatePair) -> Tuple[float, float]:
    """(sqrt((p^2 - p)/2), sqrt(2/(q^2 - q))) for a conjugate pair."""
    p, q = pair.p, pair.q
    return math.sqrt((p * p - p) / 2.0), math.sqrt(2.0 / (q * q - q))


def conjecture_row(p: float, config: Optional[Config] = None) -> ConjectureRow:
    """Compare c_left at the conjugate exponent with c_right at p.

    A root-finder failure marks the row failed instead of raising.
    """
    if not math.isfinite(p) or p <= 1.0:
        raise DomainError(f'conjecture rows need p > 1 (got {p})')
    q = p / (p - 1.0)
    try:
        sol_p = least_positive_root(p, config)
        sol_q = least_positive_root(q, config)
    except NumericError as e:
        logger.warning('conjecture row p=%g failed: %s', p, e)
        return ConjectureRow(p=p, q=q, failed=True, error=str(e))
    return ConjectureRow(
        p=p,
        q=q,
        z_p=sol_p.z_p,
        z_q=sol_q.z_p,
        c_left=sol_q.c_left,
        c_right=sol_p.c_right,
        gap=sol_q.c_left - sol_p.c_right,
    )


def conjecture_table(p_values: Iterable[float], config: Optional[Config] = None) -> List[ConjectureRow]:
    return [conjecture_row(p, config) for p in p_values]


def p_range(p_min: float, p_max: float, step: float) -> List[float]:
    """Inclusive arithmetic range p_min, p_min + step, ..., p_max."""
    if step <= 0 or p_max < p_min:
        raise DomainError(f'bad exponent range [{p_min}, {p_max}] with step {step}')
    count = int(math.floor((p_max - p_min) / step + 1e-9)) + 1
    return [round(p_min + k * step, 12) for k in range(count)]
