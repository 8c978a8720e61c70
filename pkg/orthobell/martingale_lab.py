"""Discrete-time simulation of R^2-valued martingales driven by planar Gaussian increments.

A martingale Z = (X, Y) moves by dZ = M dB where the rows of the 2x2 block
M are the difference vectors x, y and dB ~ N(0, dt I). Brackets are the
exact discrete sums of |x|^2 dt, |y|^2 dt and x.y dt. The companion W = (U, V)
is produced either by a strategy directly or as the transform A*Z.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from . import constants
from .errors import ConstructionError, DomainError, UsageError
from .types import (
    Config,
    ConjugatePair,
    ConstructionSpec,
    ExperimentReport,
    ItoChainReport,
    LemmaReport,
    MartingaleSpec,
    NormEstimate,
    StrategySpec,
)
from .utils import make_rng

logger = logging.getLogger(__name__)

_DEFAULTS = Config()

Regime = Literal['right', 'left', 'transform']

HYPOTHESIS_TOL = 1e-12
LEMMA_TOL = 1e-14

# spawn-key prefixes, kept apart from the per-experiment stream ids
LEMMA_STREAM = 1_000_001
ITO_STREAM = 100

EXPERIMENT_COLUMNS = ['regime', 'q', 'paths', 'steps', 'dt', 'seed', 'construction', 'ratio', 'bound', 'margin', 'std_error']


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Terminal values and bracket accumulators of a batch of simulated paths.

    Arrays are read-only. `zz` is <X,X> + <Y,Y>; `uu`, `vv`, `uv` are the
    brackets of W; `cross` accumulates |W-block| |Z-block| dt.
    """

    z_terminal: np.ndarray
    w_terminal: np.ndarray
    zz: np.ndarray
    uu: np.ndarray
    vv: np.ndarray
    uv: np.ndarray
    cross: np.ndarray
    seed: int = 0
    stream: int = 0
    spec: Optional[MartingaleSpec] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ('z_terminal', 'w_terminal', 'zz', 'uu', 'vv', 'uv', 'cross'):
            getattr(self, name).flags.writeable = False

    @property
    def paths(self) -> int:
        return int(self.z_terminal.shape[0])

    @property
    def ww(self) -> np.ndarray:
        return self.uu + self.vv

    def terminal(self, which: str) -> np.ndarray:
        if which == 'Z':
            return self.z_terminal
        if which == 'W':
            return self.w_terminal
        raise DomainError(f'unknown process {which!r}, expected Z or W')

    @classmethod
    def from_terminal_values(cls, z_terminal: Sequence, w_terminal: Optional[Sequence] = None) -> 'PathEnsemble':
        """Ensemble with given terminal values and empty brackets."""
        z = np.array(z_terminal, dtype=float).reshape(-1, 2)
        w = np.array(w_terminal, dtype=float).reshape(-1, 2) if w_terminal is not None else np.zeros_like(z)
        zeros = np.zeros(z.shape[0])
        return cls(z, w, zeros.copy(), zeros.copy(), zeros.copy(), zeros.copy(), zeros.copy())


# -- difference blocks ----------------------------------------------------------


def transform_AZ(blocks: np.ndarray) -> np.ndarray:
    """Apply A* to difference blocks.

    For rows x, y of each block returns rows u = (-x1 - y2, x2 - y1) and
    v = (x2 - y1, x1 + y2). u.v is zero and |u| = |v| exactly in floating
    point, since both are built from the same two rounded sums.
    """
    blocks = np.asarray(blocks, dtype=float)
    x1, x2 = blocks[..., 0, 0], blocks[..., 0, 1]
    y1, y2 = blocks[..., 1, 0], blocks[..., 1, 1]
    s = x1 + y2
    d = x2 - y1
    out = np.empty(blocks.shape)
    out[..., 0, 0] = -s
    out[..., 0, 1] = d
    out[..., 1, 0] = d
    out[..., 1, 1] = s
    return out


def rotation_blocks(angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(np.shape(angle) + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    return out


def strategy_blocks(strategy: StrategySpec, state: np.ndarray, step: int, steps: int) -> np.ndarray:
    """Difference blocks for every path at a step, from the left-limit state only."""
    n = state.shape[0]
    if strategy.kind == 'constant':
        return np.broadcast_to(np.array(strategy.matrix, dtype=float), (n, 2, 2)).copy()
    if strategy.kind == 'rotation':
        norm = np.hypot(state[:, 0], state[:, 1])
        r = strategy.radius * (1.0 + strategy.gain * np.tanh(norm))
        return r[:, None, None] * rotation_blocks(strategy.angle + strategy.twist * norm)
    if strategy.kind == 'sign_switch':
        flips = sum(1 for f in strategy.switch_fractions if step / steps >= f)
        sign = -1.0 if flips % 2 else 1.0
        return sign * strategy_blocks(strategy.base, state, step, steps)
    raise DomainError(f'{strategy.kind} strategies cannot drive a process directly')


def step_blocks(spec: MartingaleSpec, w: np.ndarray, z: np.ndarray, step: int) -> Tuple[np.ndarray, np.ndarray]:
    """(W-block, Z-block) for one step of the given spec."""
    strategy, construction = spec.strategy, spec.construction
    if strategy.kind == 'a_star':
        zd = strategy_blocks(strategy.base, z, step, spec.steps)
        return transform_AZ(zd), zd

    wd = strategy_blocks(strategy, w, step, spec.steps)
    if construction.kind == 'identity':
        return wd, wd
    if construction.kind == 'rotated':
        angle = construction.angle + construction.twist * np.hypot(z[:, 0], z[:, 1])
        return wd, construction.scale * np.einsum('nij,njk->nik', rotation_blocks(angle), wd)
    return wd, strategy_blocks(construction.driver, z, step, spec.steps)


def _sq(blocks: np.ndarray) -> np.ndarray:
    return np.einsum('nij,nij->n', blocks, blocks)


def check_hypotheses(hypotheses: Iterable[str], wd: np.ndarray, zd: np.ndarray, step: int) -> None:
    """Raise ConstructionError if a per-step hypothesis fails on any path.

    - orthogonal: u.v = 0 and |u| = |v| for the W rows
    - subordinate: d<Z,Z> <= d<W,W>
    - dominating: d<W,W> <= d<Z,Z>
    - transform: d<W,W> <= 4 d<Z,Z>
    """
    ww, zz = _sq(wd), _sq(zd)
    scale = np.maximum(ww + zz, 1e-300)
    for name in hypotheses:
        if name == 'orthogonal':
            u, v = wd[:, 0, :], wd[:, 1, :]
            dot = np.abs(np.einsum('ni,ni->n', u, v))
            gap = np.abs(np.einsum('ni,ni->n', u, u) - np.einsum('ni,ni->n', v, v))
            residual = np.maximum(dot, gap) / scale
        elif name == 'subordinate':
            residual = (zz - ww) / scale
        elif name == 'dominating':
            residual = (ww - zz) / scale
        elif name == 'transform':
            residual = (ww - 4.0 * zz) / scale
        else:
            raise DomainError(f'unknown hypothesis {name!r}')
        worst = float(residual.max())
        if worst > HYPOTHESIS_TOL:
            raise ConstructionError(name, step, worst)


# -- simulation -----------------------------------------------------------------


def path_increments(spec: MartingaleSpec, path: int) -> np.ndarray:
    """Gaussian increments N(0, dt I) of one path, shape (steps, 2)."""
    rng = make_rng(spec.seed, spec.stream, path)
    return rng.standard_normal((spec.steps, 2)) * math.sqrt(spec.dt)


def _simulate_chunk(spec: MartingaleSpec, start: int, stop: int, hypotheses: Tuple[str, ...]) -> Tuple[np.ndarray, ...]:
    n = stop - start
    db = np.stack([path_increments(spec, i) for i in range(start, stop)])
    w = np.zeros((n, 2))
    z = np.zeros((n, 2))
    zz, uu, vv, uv, cross = (np.zeros(n) for _ in range(5))
    dt = spec.dt
    for k in range(spec.steps):
        wd, zd = step_blocks(spec, w, z, k)
        check_hypotheses(hypotheses, wd, zd, k + 1)
        u, v = wd[:, 0, :], wd[:, 1, :]
        z_sq = _sq(zd)
        uu_k = np.einsum('ni,ni->n', u, u)
        vv_k = np.einsum('ni,ni->n', v, v)
        zz += z_sq * dt
        uu += uu_k * dt
        vv += vv_k * dt
        uv += np.einsum('ni,ni->n', u, v) * dt
        cross += np.sqrt((uu_k + vv_k) * z_sq) * dt
        w = w + np.einsum('nij,nj->ni', wd, db[:, k, :])
        z = z + np.einsum('nij,nj->ni', zd, db[:, k, :])
    return z, w, zz, uu, vv, uv, cross


def simulate(spec: MartingaleSpec, hypotheses: Sequence[str] = ('orthogonal',), config: Optional[Config] = None) -> PathEnsemble:
    """Simulate spec.paths paths and check the hypotheses at every step.

    Each path draws from its own stream keyed by (seed, stream, path), so the
    ensemble does not depend on chunking or on the number of workers.

    Raises:
        ConstructionError: If a hypothesis fails, naming the step
        DomainError: For inconsistent strategy/construction combinations
    """
    cfg = config or _DEFAULTS
    if spec.strategy.kind == 'a_star' and spec.construction.kind != 'identity':
        raise DomainError('a_star strategies fix W = A*Z; use the identity construction')

    hypotheses = tuple(hypotheses)
    chunks = [(s, min(s + cfg.chunk_paths, spec.paths)) for s in range(0, spec.paths, cfg.chunk_paths)]
    logger.debug('simulating %d paths x %d steps in %d chunks (%d workers)', spec.paths, spec.steps, len(chunks), cfg.workers)

    def run(bounds):
        return _simulate_chunk(spec, bounds[0], bounds[1], hypotheses)

    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]

    z, w, zz, uu, vv, uv, cross = (np.concatenate(arrays) for arrays in zip(*parts))
    return PathEnsemble(z, w, zz, uu, vv, uv, cross, seed=spec.seed, stream=spec.stream, spec=spec)


# -- estimates ------------------------------------------------------------------


def estimate_norm(ensemble: PathEnsemble, which: str, p: float) -> NormEstimate:
    """(E|.|^p)^(1/p) of the terminal values with a delta-method standard error.

    Raises:
        DomainError: If p < 1
        UsageError: If the ensemble is empty
    """
    if not math.isfinite(p) or p < 1.0:
        raise DomainError(f'norm exponent must be >= 1 (got {p})')
    values = ensemble.terminal(which)
    n = values.shape[0]
    if n == 0:
        raise UsageError('cannot estimate a norm from an empty ensemble')
    samples = np.hypot(values[:, 0], values[:, 1]) ** p
    m = float(samples.mean())
    if m == 0.0:
        return NormEstimate(estimate=0.0, std_error=0.0)
    sd = float(samples.std(ddof=1)) if n > 1 else 0.0
    return NormEstimate(estimate=m ** (1.0 / p), std_error=m ** (1.0 / p - 1.0) * sd / (p * math.sqrt(n)))


def ratio_estimate(num: np.ndarray, den: np.ndarray, p: float) -> Tuple[float, float]:
    """Ratio of L^p norms of two samples of the same paths, with delta-method error.

    The two samples are correlated, so the error uses their covariance.
    """
    a = np.hypot(num[:, 0], num[:, 1]) ** p
    b = np.hypot(den[:, 0], den[:, 1]) ** p
    n = a.shape[0]
    ma, mb = float(a.mean()), float(b.mean())
    if mb == 0.0:
        raise DomainError('denominator norm is zero')
    ratio = (ma / mb) ** (1.0 / p)
    if n < 2 or ma == 0.0:
        return ratio, 0.0
    cov = np.cov(a, b, ddof=1)
    var_log = (cov[0, 0] / ma**2 + cov[1, 1] / mb**2 - 2.0 * cov[0, 1] / (ma * mb)) / (p * p * n)
    return ratio, ratio * math.sqrt(max(var_log, 0.0))


def regime_bound(regime: Regime, exponent: float, config: Optional[Config] = None) -> float:
    """Constant the regime's inequality promises.

    right:     |Z|_e <= c |W|_e, W orthogonal and d<Z,Z> <= d<W,W>
    left:      |W|_e <= c |Z|_e, W orthogonal and d<W,W> <= d<Z,Z>
    transform: |W|_e <= c |Z|_e for W = A*Z, twice the left constant
    """
    e = exponent
    if not math.isfinite(e) or e <= 1.0:
        raise DomainError(f'exponent must be > 1 (got {e})')
    if regime == 'right':
        if e <= 2.0:
            return math.sqrt(2.0 / (e * e - e))
        return constants.least_positive_root(e, config).c_right
    if regime in ('left', 'transform'):
        if e >= 2.0:
            c = math.sqrt((e * e - e) / 2.0)
        else:
            c = constants.least_positive_root(e, config).c_left
        return c if regime == 'left' else 2.0 * c
    raise DomainError(f'unknown regime {regime!r}')


REGIME_HYPOTHESES = {
    'right': ('orthogonal', 'subordinate'),
    'left': ('orthogonal', 'dominating'),
    'transform': ('orthogonal', 'transform'),
}


def inequality_experiment(
    exponent: float,
    spec: MartingaleSpec,
    regime: Regime = 'right',
    config: Optional[Config] = None,
) -> ExperimentReport:
    """Monte Carlo comparison of L^e norms against the regime's constant.

    The hypotheses are asserted at every step. The experiment only checks
    that the bound is not violated by more than three standard errors.
    """
    if regime not in REGIME_HYPOTHESES:
        raise DomainError(f'unknown regime {regime!r}')
    if regime == 'transform' and spec.strategy.kind != 'a_star':
        raise DomainError('the transform regime needs an a_star strategy')
    bound = regime_bound(regime, exponent, config)
    ensemble = simulate(spec, REGIME_HYPOTHESES[regime], config)
    if regime == 'right':
        ratio, se = ratio_estimate(ensemble.z_terminal, ensemble.w_terminal, exponent)
    else:
        ratio, se = ratio_estimate(ensemble.w_terminal, ensemble.z_terminal, exponent)
    margin = bound - ratio
    passed = margin >= -3.0 * se
    logger.info(
        '%s regime e=%g [%s]: ratio %.6g +- %.2g vs bound %.6g', regime, exponent, spec.construction.name, ratio, se, bound
    )
    return ExperimentReport(
        regime=regime,
        exponent=exponent,
        construction=spec.construction.name,
        paths=spec.paths,
        steps=spec.steps,
        dt=spec.dt,
        seed=spec.seed,
        ratio=ratio,
        bound=bound,
        margin=margin,
        std_error=se,
        passed=passed,
    )


def ito_chain_check(spec: MartingaleSpec, pair: Optional[ConjugatePair] = None, config: Optional[Config] = None) -> ItoChainReport:
    """Pathwise chain behind the q-norm estimate, by Monte Carlo.

    With F the freely driven process and W orthogonal,
        sqrt(p/2) E sum |W-block| |F-block| dt  <=  (p - 1) E[|W_T|^q/q + |F_T|^p/p].
    At q = 3/2 the right side is E[2(|W_T|^(3/2)/(3/2) + |F_T|^3/3)].
    """
    pair = pair or ConjugatePair.from_q(1.5)
    if spec.construction.kind != 'free':
        raise DomainError('the Ito chain check needs a free construction driving F')
    ensemble = simulate(spec, ('orthogonal',), config)
    p, q = pair.p, pair.q
    w_abs = np.hypot(ensemble.w_terminal[:, 0], ensemble.w_terminal[:, 1])
    f_abs = np.hypot(ensemble.z_terminal[:, 0], ensemble.z_terminal[:, 1])
    lhs_i = math.sqrt(p / 2.0) * ensemble.cross
    rhs_i = (p - 1.0) * (w_abs**q / q + f_abs**p / p)
    lhs, rhs = float(lhs_i.mean()), float(rhs_i.mean())
    n = ensemble.paths
    se = float((rhs_i - lhs_i).std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    slack = rhs - lhs
    return ItoChainReport(lhs=lhs, rhs=rhs, slack=slack, std_error=se, passed=slack >= -3.0 * se)


def lemma_check(draws: int, seed: int, chunk: int = 100_000) -> LemmaReport:
    """Exact per-step relations of A*Z on random difference blocks.

    Draw magnitudes are spread over several decades so the relative
    residuals are exercised at different scales.
    """
    if draws < 1:
        raise UsageError(f'draws must be positive (got {draws})')
    rng = make_rng(seed, LEMMA_STREAM)
    orth = gap = bracket = coord = 0.0
    for start in range(0, draws, chunk):
        n = min(chunk, draws - start)
        zd = rng.standard_normal((n, 2, 2)) * (10.0 ** rng.uniform(-3.0, 3.0, n))[:, None, None]
        wd = transform_AZ(zd)
        z_sq = _sq(zd)
        u, v = wd[:, 0, :], wd[:, 1, :]
        u_sq = np.einsum('ni,ni->n', u, u)
        v_sq = np.einsum('ni,ni->n', v, v)
        orth = max(orth, float((np.abs(np.einsum('ni,ni->n', u, v)) / z_sq).max()))
        gap = max(gap, float((np.abs(u_sq - v_sq) / z_sq).max()))
        bracket = max(bracket, float(((u_sq + v_sq) / z_sq).max()))
        coord = max(coord, float((np.maximum(u_sq, v_sq) / z_sq).max()))
    passed = orth <= LEMMA_TOL and gap <= LEMMA_TOL and bracket <= 4.0 * (1.0 + LEMMA_TOL) and coord <= 2.0 * (1.0 + LEMMA_TOL)
    return LemmaReport(
        draws=draws,
        seed=seed,
        max_orthogonality_residual=orth,
        max_norm_gap=gap,
        max_bracket_factor=bracket,
        max_coordinate_factor=coord,
        passed=passed,
    )


# -- shipped constructions ------------------------------------------------------


_ROTATION = StrategySpec(kind='rotation', radius=1.0, gain=0.5, twist=0.3)

# (strategy, construction) pairs meeting each regime's hypotheses
_BATTERIES = {
    'right': [
        (StrategySpec.identity(), ConstructionSpec(kind='identity', name='identity')),
        (_ROTATION, ConstructionSpec(kind='rotated', name='rotated', angle=0.7, twist=0.5)),
        (
            StrategySpec(kind='rotation', radius=1.0, angle=0.2, twist=1.1),
            ConstructionSpec(kind='rotated', name='rotated-scaled', angle=-0.4, twist=0.8, scale=0.7),
        ),
        (
            StrategySpec(kind='sign_switch', switch_fractions=(0.25, 0.5, 0.75), base=_ROTATION),
            ConstructionSpec(kind='rotated', name='sign-switch', angle=1.3),
        ),
        (
            StrategySpec(kind='constant', matrix=((2.0, 0.0), (0.0, 2.0))),
            ConstructionSpec(kind='rotated', name='constant-half', twist=0.6, scale=0.5),
        ),
    ],
    'left': [
        (StrategySpec.identity(), ConstructionSpec(kind='identity', name='identity')),
        (_ROTATION, ConstructionSpec(kind='rotated', name='rotated', angle=0.7, twist=0.5)),
        (
            StrategySpec(kind='rotation', radius=0.8, twist=0.9),
            ConstructionSpec(kind='rotated', name='amplified', angle=0.3, twist=0.4, scale=1.6),
        ),
    ],
    'transform': [
        (StrategySpec(kind='a_star', base=StrategySpec.identity()), ConstructionSpec(name='astar-identity')),
        (StrategySpec(kind='a_star', base=_ROTATION), ConstructionSpec(name='astar-rotation')),
        (
            StrategySpec(
                kind='a_star',
                base=StrategySpec(kind='sign_switch', switch_fractions=(0.5,), base=StrategySpec(kind='constant', matrix=((1.0, 0.5), (-0.3, 1.0)))),
            ),
            ConstructionSpec(name='astar-switch'),
        ),
    ],
}


def default_battery(paths: int, steps: int, dt: float, seed: int, regime: Regime = 'right') -> List[MartingaleSpec]:
    """Shipped constructions for a regime, each on its own stream."""
    if regime not in _BATTERIES:
        raise DomainError(f'unknown regime {regime!r}')
    return [
        MartingaleSpec(steps=steps, dt=dt, strategy=s, construction=c, seed=seed, paths=paths, stream=i)
        for i, (s, c) in enumerate(_BATTERIES[regime])
    ]


def battery_names(regime: Regime = 'right') -> List[str]:
    return [c.name for _, c in _BATTERIES[regime]]


def construction_by_name(name: str, paths: int, steps: int, dt: float, seed: int, regime: Regime = 'right') -> MartingaleSpec:
    for spec in default_battery(paths, steps, dt, seed, regime):
        if spec.construction.name == name:
            return spec
    raise UsageError(f'unknown construction {name!r} for the {regime} regime; choose from {", ".join(battery_names(regime))}')


def ito_spec(paths: int, steps: int, dt: float, seed: int, w_strategy: Optional[StrategySpec] = None, f_strategy: Optional[StrategySpec] = None) -> MartingaleSpec:
    """W driven by an orthogonal strategy, F by an independent free driver; rotations with constant rates by default."""
    w_strategy = w_strategy or StrategySpec(kind='rotation', radius=1.0, twist=0.5)
    f_strategy = f_strategy or StrategySpec(kind='rotation', radius=0.8, angle=0.9)
    return MartingaleSpec(
        steps=steps,
        dt=dt,
        strategy=w_strategy,
        construction=ConstructionSpec(kind='free', name='free', driver=f_strategy),
        seed=seed,
        paths=paths,
        stream=ITO_STREAM,
    )
