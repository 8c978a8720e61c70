"""Pydantic models for data validation."""

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

Branch = Literal['plus', 'minus']

PAIR_TOL = 1e-14


class Config(BaseModel):
    """Lab configuration (numerical knobs, seeds, output locations)."""

    root_scan_step: float = Field(default=1e-3, gt=0, lt=0.5, description='Scan step on (0,1) before bisection')
    root_tol: float = Field(default=1e-12, gt=0, description='Bisection tolerance for Laguerre roots')
    series_rel_tol: float = Field(default=1e-16, gt=0, description='Series truncation threshold relative to the running sum')
    series_max_terms: int = Field(default=500, ge=10, description='Hard cap on Laguerre series terms')
    t_solver_max_iter: int = Field(default=200, ge=10, description='Iteration cap of the implicit-t solver')
    grid_points: int = Field(default=50, ge=2, description='Points per axis of log grids')
    default_seed: int = Field(default=20240601, ge=0, lt=2**64, description='Seed used when none is given')
    workers: int = Field(default=1, ge=1, description='Worker threads for path simulation')
    chunk_paths: int = Field(default=2048, ge=1, description='Paths simulated per chunk')
    output_dir: str = Field(default='orthobell-out', description='Directory for CSV/JSON outputs and manifests')


class ConjugatePair(BaseModel):
    """Hölder-conjugate exponents with p >= 2 >= q > 1.

    Either exponent may be given; the other is filled in.
    """

    model_config = ConfigDict(frozen=True)

    p: float = Field(description='Exponent p >= 2')
    q: float = Field(description='Conjugate exponent 1 < q <= 2')

    @model_validator(mode='before')
    @classmethod
    def _fill_conjugate(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            p, q = data.get('p'), data.get('q')
            if p is not None and q is None and p != 1:
                data['q'] = p / (p - 1.0)
            elif q is not None and p is None and q != 1:
                data['p'] = q / (q - 1.0)
        return data

    @model_validator(mode='after')
    def _check(self) -> 'ConjugatePair':
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise ValueError('exponents must be finite')
        if self.p < 2.0:
            raise ValueError(f'p must be >= 2 (got {self.p}); pass q instead for exponents below 2')
        if not (1.0 < self.q <= 2.0):
            raise ValueError(f'q must lie in (1, 2] (got {self.q})')
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > PAIR_TOL:
            raise ValueError(f'1/p + 1/q must equal 1 (p={self.p}, q={self.q})')
        return self

    @classmethod
    def from_p(cls, p: float) -> 'ConjugatePair':
        return cls(p=p)

    @classmethod
    def from_q(cls, q: float) -> 'ConjugatePair':
        return cls(q=q)


class LaguerreSolution(BaseModel):
    """Least positive root of L_p in (0,1) and the two constants built from it."""

    model_config = ConfigDict(frozen=True)

    p: float = Field(description='Laguerre exponent')
    z_p: float = Field(description='Least positive root in (0, 1)')
    c_left: float = Field(description='(1/sqrt2) z/(1-z), left-side orthogonality form')
    c_right: float = Field(description='sqrt2 (1-z)/z, right-side orthogonality form')
    residual: float = Field(description='|L_p(z_p)|')
    scan_step: float = Field(description='Scan resolution used to bracket the root')


class ConjectureRow(BaseModel):
    """One row of the conjugate-exponent comparison table."""

    p: float
    q: float
    z_p: Optional[float] = None
    z_q: Optional[float] = None
    c_left: Optional[float] = Field(default=None, description='Left constant at the conjugate exponent q')
    c_right: Optional[float] = Field(default=None, description='Right constant at p')
    gap: Optional[float] = Field(default=None, description='c_left(q) - c_right(p)')
    failed: bool = False
    error: Optional[str] = None


class BellmanPoint(BaseModel):
    """Value, derivatives and auxiliary quantities of a Bellman function at (u, v).

    The mixed second derivative is stored shifted by one (B_uv + 1). For the
    plus branch that shifted matrix is the degenerate one; for the minus
    branch the degenerate matrix uses B_uv - 1.
    """

    model_config = ConfigDict(frozen=True)

    branch: Branch = 'plus'
    p: float
    u: float
    v: float
    t: float = Field(description='Implicit parameter t(u, v)')
    value: float
    b_u: Optional[float] = None
    b_v: Optional[float] = None
    b_uu: Optional[float] = None
    b_uv_plus1: Optional[float] = None
    b_vv: Optional[float] = None
    S: Optional[float] = Field(default=None, description='p^(1/p) t^(1/q) u + p^(1/q) t^(1/p) v')
    alpha: Optional[float] = Field(default=None, description="t'_u / t")
    beta: Optional[float] = Field(default=None, description="t'_v / t")
    tau: Optional[float] = Field(default=None, description='sqrt(B_uu / B_vv)')

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def has_derivatives(self) -> bool:
        return self.b_uu is not None

    @property
    def b_uv(self) -> float:
        return self.b_uv_plus1 - 1.0

    @property
    def degenerate_mixed(self) -> float:
        """Off-diagonal entry of the matrix expected to be singular."""
        return self.b_uv_plus1 if self.branch == 'plus' else self.b_uv_plus1 - 2.0

    @property
    def det_residual(self) -> float:
        """Relative Monge-Ampère residual of the degenerate shifted Hessian."""
        m = self.degenerate_mixed
        det = self.b_uu * self.b_vv - m * m
        scale = max(abs(self.b_uu * self.b_vv), m * m, 1e-300)
        return abs(det) / scale

    @property
    def phi(self) -> float:
        """Upper obstacle (p-1)(|u|^p/p + |v|^q/q)."""
        p, q = self.p, self.q
        return (p - 1.0) * (abs(self.u) ** p / p + abs(self.v) ** q / q)

    @property
    def bound_slack(self) -> float:
        return self.phi - self.value


class PogorelovSolution(BaseModel):
    """Constants of one branch of the Pogorelov boundary system."""

    model_config = ConfigDict(frozen=True)

    branch: Branch
    p: float
    q: float
    C1: float
    C2: float
    gamma: float = Field(gt=0)
    a: float
    b: float
    delta: Optional[float] = Field(default=None, description='gamma^(q-1), minus branch only')
    improvement_c: Optional[float] = Field(default=None, description='2 + C2/C1^2, minus branch only')

    @property
    def improved_estimate(self) -> Optional[float]:
        """2 sqrt2 / sqrt(c): the estimate the improvement constant would give."""
        if self.improvement_c is None:
            return None
        return 2.0 * math.sqrt(2.0) / math.sqrt(self.improvement_c)


class SaturationReport(BaseModel):
    """Free-boundary checks of the plus branch on and off the curve v^q = u^p."""

    p: float
    samples: int
    max_value_gap: float = Field(description='max |B - phi| on the curve, relative to phi')
    max_tangent_gap: float = Field(description='max |B_u phi_v - B_v phi_u| on the curve, relative')
    min_off_curve_slack: float = Field(description='min (phi - B)/phi off the curve')
    worst_value_point: Tuple[float, float]
    worst_tangent_point: Tuple[float, float]
    worst_off_curve_point: Tuple[float, float]
    passed: bool


class GridScanSummary(BaseModel):
    """JSON summary of a grid scan of B."""

    p: float
    branch: Branch
    points: int
    max_det_residual: float
    min_bound_slack: float
    max_bvba_residual: Optional[float] = None
    max_tau_identity_residual: float
    worst_points: Dict[str, Tuple[float, float]]
    passed: bool


class QuadraticFormDecomposition(BaseModel):
    """Q = A x^2 + 2B xy + C y^2 = D(tau x^2 + y^2/tau) + |B| tau (x + sign(B) y/tau)^2."""

    model_config = ConfigDict(frozen=True)

    A: float
    B: float
    C: float
    D: float = Field(description='sqrt(AC) - |B|, the best constant in Q >= 2D|x||y|')
    tau: float = Field(description='sqrt(A/C)')

    def form(self, x: float, y: float) -> float:
        return self.A * x * x + 2.0 * self.B * x * y + self.C * y * y

    def reconstruct(self, x: float, y: float) -> float:
        sign = math.copysign(1.0, self.B) if self.B != 0 else 0.0
        square = x + sign * y / self.tau
        return self.D * (self.tau * x * x + y * y / self.tau) + abs(self.B) * self.tau * square * square


class LiftedPoint(BaseModel):
    """Point of R^4 seen as two coordinate pairs, with the base function at the pair norms."""

    model_config = ConfigDict(frozen=True)

    y: Tuple[float, float, float, float]
    x1: float
    x2: float
    base: BellmanPoint


class CertificateBreakdown(BaseModel):
    """Nonnegative terms whose sum is the lifted Hessian form at p = 3."""

    term_tau: float
    term_inv_tau: float
    term_rotational: float
    term_square: float

    @property
    def total(self) -> float:
        return self.term_tau + self.term_inv_tau + self.term_rotational + self.term_square


class TauConditionReport(BaseModel):
    branch: Branch
    c: float = Field(description='Constant on the right-hand side, c/tau')
    points: int
    min_slack: float
    worst_point: Tuple[float, float]
    holds: bool
    supported_c: Optional[float] = Field(default=None, description='Largest c with nonnegative slack on the grid')


class KeyInequalityResult(BaseModel):
    lhs: float
    rhs: float
    slack: float
    lower_bound: float = Field(description='tau xi1^2 + p/(2 tau) xi2^2, sandwiched between lhs and rhs')


class IdentityCheck(BaseModel):
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


class CertificateScanRow(BaseModel):
    x1: float
    x2: float
    min_slack_tau_cond: float
    min_slack_key: float
    max_fd_error: float


StrategyKind = Literal['constant', 'rotation', 'sign_switch', 'a_star']


class StrategySpec(BaseModel):
    """Predictable rule producing the 2x2 block of difference vectors at each step.

    - constant: a fixed matrix whose rows are the two difference vectors
    - rotation: rows r(cos th, sin th) and r(-sin th, cos th) with
      r = radius (1 + gain tanh|S|), th = angle + twist |S| for the left-limit state S
    - sign_switch: the base strategy with its sign flipped at each listed step fraction
    - a_star: the base strategy drives Z, and W = A*Z
    """

    model_config = ConfigDict(frozen=True)

    kind: StrategyKind
    matrix: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    radius: float = Field(default=1.0, ge=0)
    gain: float = Field(default=0.0, ge=-0.99, description='Relative modulation of the radius')
    angle: float = 0.0
    twist: float = 0.0
    switch_fractions: Tuple[float, ...] = ()
    base: Optional['StrategySpec'] = None

    @model_validator(mode='after')
    def _check(self) -> 'StrategySpec':
        if self.kind == 'constant' and self.matrix is None:
            raise ValueError('constant strategy needs a 2x2 matrix')
        if self.kind in ('sign_switch', 'a_star') and self.base is None:
            raise ValueError(f'{self.kind} strategy needs a base strategy')
        if self.kind == 'a_star' and self.base is not None and self.base.kind == 'a_star':
            raise ValueError('a_star strategies cannot be nested')
        for f in self.switch_fractions:
            if not 0.0 < f < 1.0:
                raise ValueError(f'switch fractions must lie in (0, 1), got {f}')
        return self

    @classmethod
    def identity(cls) -> 'StrategySpec':
        return cls(kind='constant', matrix=((1.0, 0.0), (0.0, 1.0)))

    @classmethod
    def zero(cls) -> 'StrategySpec':
        return cls(kind='constant', matrix=((0.0, 0.0), (0.0, 0.0)))


StrategySpec.model_rebuild()


class ConstructionSpec(BaseModel):
    """How the companion process Z is built from the driving W-differences.

    - identity: Z = W
    - rotated: Z-differences are R(angle + twist|Z|) * scale * W-differences
    - free: Z-differences come from an independent driver strategy
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['identity', 'rotated', 'free'] = 'identity'
    name: str = 'identity'
    angle: float = 0.0
    twist: float = 0.0
    scale: float = Field(default=1.0, ge=0)
    driver: Optional[StrategySpec] = None

    @model_validator(mode='after')
    def _check(self) -> 'ConstructionSpec':
        if self.kind == 'free' and self.driver is None:
            raise ValueError('free construction needs a driver strategy')
        return self


class MartingaleSpec(BaseModel):
    """Discrete-time simulation parameters."""

    model_config = ConfigDict(frozen=True)

    steps: int = Field(ge=1)
    dt: float = Field(gt=0)
    strategy: StrategySpec
    construction: ConstructionSpec = Field(default_factory=ConstructionSpec)
    seed: int = Field(ge=0, lt=2**64)
    paths: int = Field(ge=1)
    stream: int = Field(default=0, ge=0, description='Stream id mixed into every per-path RNG key')

    @property
    def horizon(self) -> float:
        return self.steps * self.dt


class NormEstimate(BaseModel):
    estimate: float
    std_error: float


class ExperimentReport(BaseModel):
    """Result of a Monte Carlo comparison of two L^e norms against a bound."""

    regime: Literal['right', 'left', 'transform']
    exponent: float
    construction: str
    paths: int
    steps: int
    dt: float
    seed: int
    ratio: float
    bound: float
    margin: float
    std_error: float
    passed: bool


class ItoChainReport(BaseModel):
    lhs: float
    rhs: float
    slack: float
    std_error: float
    passed: bool


class LemmaReport(BaseModel):
    draws: int
    seed: int
    max_orthogonality_residual: float = Field(description='max |u.v| / (|x|^2 + |y|^2)')
    max_norm_gap: float = Field(description='max ||u|^2 - |v|^2| / (|x|^2 + |y|^2)')
    max_bracket_factor: float = Field(description='max (|u|^2 + |v|^2) / (|x|^2 + |y|^2)')
    max_coordinate_factor: float = Field(description='max max(|u|^2, |v|^2) / (|x|^2 + |y|^2)')
    passed: bool


class RunManifest(BaseModel):
    """Everything needed to replay a CLI run."""

    verb: str
    params: Dict[str, Any]
    seeds: List[int] = Field(default_factory=list)
    version: str
    outputs: Dict[str, str] = Field(default_factory=dict, description='output file name -> sha256')
    exit_code: int = 0
