"""Run coordination: executes verbs, writes outputs and manifests, records runs."""

import json
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__, bellman_core, config, constants, db, hessian_lift, martingale_lab
from .errors import UsageError
from .types import Config, ConjugatePair, RunManifest
from .utils import canonical_json_bytes, json_value, rows_to_json, sha256_bytes, sha256_file, write_csv, write_text

logger = logging.getLogger(__name__)

CONSTANTS_COLUMNS = ['p', 'q', 'z_p', 'z_q', 'c_left', 'c_right', 'gap']
ITO_COLUMNS = ['q', 'paths', 'steps', 'dt', 'seed', 'lhs', 'rhs', 'slack', 'std_error', 'passed']
LEMMA_COLUMNS = ['draws', 'seed', 'max_orthogonality_residual', 'max_norm_gap', 'max_bracket_factor', 'max_coordinate_factor', 'passed']

# Config fields that change numbers in the outputs; recorded so replays match
NUMERIC_KNOBS = ('root_scan_step', 'root_tol', 'series_rel_tol', 'series_max_terms', 't_solver_max_iter')

MINUS_RESIDUAL_TOL = 1e-10
POINT_DET_TOL = 1e-8


@dataclass
class RunResult:
    """Result of one verb."""

    verb: str
    exit_code: int = 0
    columns: List[str] = field(default_factory=list)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Path] = field(default_factory=dict)
    manifest: Optional[RunManifest] = None
    manifest_path: Optional[Path] = None
    messages: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.exit_code == 0


class Lab:
    """Coordinates the numerical modules, the output directory and the run registry."""

    def __init__(self, app_config: Optional[Config] = None, output_dir: Optional[Path] = None, record: bool = True):
        """Initialize the lab.

        Args:
            app_config: Numerical and path configuration
            output_dir: Where outputs and manifests go (defaults to config.output_dir)
            record: Store every manifest in the run registry (db must be initialized)
        """
        self.config = app_config or Config()
        self.output_dir = Path(output_dir or self.config.output_dir)
        self.record = record

    # -- plumbing --------------------------------------------------------------

    def _knobs(self) -> Dict[str, Any]:
        return {k: getattr(self.config, k) for k in NUMERIC_KNOBS}

    def _write_json(self, name: str, payload: Any) -> Path:
        path = self.output_dir / name
        path.write_bytes(canonical_json_bytes(json_value(payload)))
        return path

    def _finish(self, result: RunResult, params: Dict[str, Any], seeds: List[int]) -> RunResult:
        """Write the manifest next to the outputs and record the run."""
        digests = {name: sha256_file(path) for name, path in sorted(result.outputs.items())}
        manifest = RunManifest(
            verb=result.verb,
            params={**params, 'config': self._knobs()},
            seeds=seeds,
            version=__version__,
            outputs=digests,
            exit_code=result.exit_code,
        )
        manifest_path = self.output_dir / f'{result.verb}.manifest.json'
        manifest_path.write_bytes(canonical_json_bytes(manifest.model_dump()))
        result.manifest, result.manifest_path = manifest, manifest_path
        if self.record:
            run = db.save_run(manifest, str(manifest_path))
            logger.debug('recorded %s', run)
        return result

    def _prepare(self) -> None:
        config.ensure_output_dir(self.output_dir)

    # -- verbs -----------------------------------------------------------------

    def run_constants(self, p_min: float, p_max: float, step: float = 0.5, fmt: str = 'csv') -> RunResult:
        """Conjecture table over an exponent range."""
        if p_min < 1.01:
            raise UsageError(f'--p-min must be >= 1.01 (got {p_min})')
        if p_max < p_min or step <= 0:
            raise UsageError(f'bad range: p-min={p_min}, p-max={p_max}, step={step}')
        if fmt not in ('csv', 'json'):
            raise UsageError(f'unknown format {fmt!r}')
        self._prepare()

        table = constants.conjecture_table(constants.p_range(p_min, p_max, step), self.config)
        rows = [row.model_dump() for row in table]
        result = RunResult(verb='constants', columns=CONSTANTS_COLUMNS, rows=rows)
        name = f'constants.{fmt}'
        if fmt == 'csv':
            result.outputs[name] = write_csv(self.output_dir / name, CONSTANTS_COLUMNS, rows)
        else:
            result.outputs[name] = write_text(self.output_dir / name, rows_to_json(CONSTANTS_COLUMNS, rows))

        failed = [row.p for row in table if row.failed]
        if failed:
            result.exit_code = 1
            result.messages.append('root finder failed for p = ' + ', '.join(f'{p:g}' for p in failed))
        params = {'p_min': p_min, 'p_max': p_max, 'step': step, 'fmt': fmt}
        return self._finish(result, params, [])

    def run_bellman(
        self,
        p: float,
        u: Optional[float] = None,
        v: Optional[float] = None,
        grid: Optional[int] = None,
        branch: str = 'plus',
    ) -> RunResult:
        """Point report, grid scan, or (minus branch without a point) the boundary-system solution."""
        pair = ConjugatePair.from_p(p)
        self._prepare()
        result = RunResult(verb='bellman')
        params = {'p': p, 'u': u, 'v': v, 'grid': grid, 'branch': branch}

        if grid:
            rows, summary = bellman_core.eval_grid(pair, branch, grid, config=self.config)
            result.columns, result.rows = bellman_core.GRID_COLUMNS, rows
            result.summary = summary.model_dump()
            if branch == 'plus':
                saturation = bellman_core.check_saturation(pair, grid, config=self.config)
                result.summary['saturation'] = saturation.model_dump()
                if not saturation.passed:
                    result.exit_code = 1
            if not summary.passed:
                result.exit_code = 1
            result.outputs['bellman.csv'] = write_csv(self.output_dir / 'bellman.csv', bellman_core.GRID_COLUMNS, rows)
            result.outputs['bellman-summary.json'] = self._write_json('bellman-summary.json', result.summary)
            return self._finish(result, params, [])

        if branch == 'minus':
            sol = bellman_core.solve_pogorelov_minus(pair)
            residuals = bellman_core.minus_branch_residuals(sol)
            result.summary = {**sol.model_dump(), 'improved_estimate': sol.improved_estimate, 'residuals': residuals}
            if u is not None and v is not None:
                point = bellman_core.eval_closed_p3_minus(u, v, sol)
                result.summary['point'] = self._point_summary(point)
                if point.has_derivatives and point.det_residual > POINT_DET_TOL:
                    result.exit_code = 1
            if max(residuals.values()) > MINUS_RESIDUAL_TOL:
                result.exit_code = 1
        else:
            if u is None or v is None:
                raise UsageError('the plus branch needs --u and --v, or --grid')
            sol = bellman_core.solve_pogorelov_plus(pair)
            point = bellman_core.eval_bellman(pair, u, v, self.config)
            result.summary = {'point': self._point_summary(point), 'pogorelov': sol.model_dump()}
            if point.has_derivatives:
                checks = result.summary['point']
                ok = (
                    checks['det_residual'] <= POINT_DET_TOL
                    and point.bound_slack >= -bellman_core.BOUND_TOL * max(point.phi, 1.0)
                    and (checks['tau_identity_residual'] is None or checks['tau_identity_residual'] <= bellman_core.IDENTITY_TOL)
                    and (checks['bvba_residual'] is None or checks['bvba_residual'] <= bellman_core.IDENTITY_TOL)
                )
                if not ok:
                    result.exit_code = 1
        result.outputs['bellman.json'] = self._write_json('bellman.json', result.summary)
        return self._finish(result, params, [])

    @staticmethod
    def _point_summary(point) -> Dict[str, Any]:
        data = point.model_dump()
        if point.has_derivatives:
            data.update(
                det_residual=point.det_residual,
                phi=point.phi,
                bound_slack=point.bound_slack,
                tau_identity_residual=bellman_core.tau_identity_residual(point),
                bvba_residual=bellman_core.bvba_residual(point) if point.branch == 'plus' else None,
            )
        return data

    def run_certify(self, p: float, grid: int = 8, samples: int = 20, seed: Optional[int] = None) -> RunResult:
        """Certificate scan over a grid, plus the p = 3 tau conditions and certificate check."""
        if samples < 1:
            raise UsageError(f'--samples must be positive (got {samples})')
        if grid < 2:
            raise UsageError(f'--grid must be at least 2 (got {grid})')
        pair = ConjugatePair.from_p(p)
        seed = self.config.default_seed if seed is None else seed
        self._prepare()

        scan = hessian_lift.certificate_scan(pair, grid, samples, seed, config=self.config)
        rows = [r.model_dump() for r in scan]
        result = RunResult(verb='certify', columns=hessian_lift.SCAN_COLUMNS, rows=rows)
        passed = hessian_lift.scan_passed(scan)
        result.summary = {
            'p': p,
            'nodes': len(rows),
            'samples': samples,
            'min_slack_tau_cond': min(r.min_slack_tau_cond for r in scan),
            'min_slack_key': min(r.min_slack_key for r in scan),
            'max_fd_error': max(r.max_fd_error for r in scan),
        }
        if abs(p - 3.0) < 1e-12:
            plus = hessian_lift.check_tau_condition(pair, 'plus', points=grid)
            minus = hessian_lift.check_tau_condition(pair, 'minus', points=grid)
            gap, min_term = hessian_lift.certificate_check(grid, samples, seed)
            result.summary.update(tau_condition_plus=plus.model_dump(), tau_condition_minus=minus.model_dump())
            result.summary.update(certificate_max_gap=gap, certificate_min_term=min_term)
            passed = passed and plus.holds and gap <= 1e-10 and min_term >= 0.0
            if not minus.holds:
                result.messages.append(
                    f'minus-branch tau condition does not hold for c={minus.c:.10g}; the grid supports c={minus.supported_c:.10g}'
                )
        result.summary['passed'] = passed
        result.exit_code = 0 if passed else 1
        result.outputs['certify.csv'] = write_csv(self.output_dir / 'certify.csv', hessian_lift.SCAN_COLUMNS, rows)
        result.outputs['certify-summary.json'] = self._write_json('certify-summary.json', result.summary)
        return self._finish(result, {'p': p, 'grid': grid, 'samples': samples, 'seed': seed}, [seed])

    def run_simulate(
        self,
        q: float = 1.5,
        paths: int = 2000,
        steps: int = 200,
        dt: Optional[float] = None,
        seed: Optional[int] = None,
        construction: str = 'all',
        mode: str = 'ratio',
        regime: str = 'right',
        draws: int = 1_000_000,
    ) -> RunResult:
        """Monte Carlo experiments: norm ratios, the Ito chain, or the per-step lemmas."""
        if paths < 1:
            raise UsageError(f'--paths must be positive (got {paths})')
        if steps < 1:
            raise UsageError(f'--steps must be positive (got {steps})')
        dt = 1.0 / steps if dt is None else dt
        if dt <= 0:
            raise UsageError(f'--dt must be positive (got {dt})')
        seed = self.config.default_seed if seed is None else seed
        self._prepare()
        params = {
            'q': q,
            'paths': paths,
            'steps': steps,
            'dt': dt,
            'seed': seed,
            'construction': construction,
            'mode': mode,
            'regime': regime,
            'draws': draws,
        }
        result = RunResult(verb='simulate')

        if mode == 'ratio':
            if construction == 'all':
                specs = martingale_lab.default_battery(paths, steps, dt, seed, regime)
            else:
                specs = [martingale_lab.construction_by_name(construction, paths, steps, dt, seed, regime)]
            rows = []
            for spec in specs:
                report = martingale_lab.inequality_experiment(q, spec, regime, self.config)
                rows.append({**report.model_dump(), 'q': report.exponent})
                if not report.passed:
                    result.exit_code = 1
                    result.messages.append(f'{report.construction}: ratio {report.ratio:.6g} exceeds {report.bound:.6g} beyond 3 std errors')
            result.columns, result.rows = martingale_lab.EXPERIMENT_COLUMNS, rows
        elif mode == 'ito':
            pair = ConjugatePair.from_q(q)
            report = martingale_lab.ito_chain_check(martingale_lab.ito_spec(paths, steps, dt, seed), pair, self.config)
            row = {'q': q, 'paths': paths, 'steps': steps, 'dt': dt, 'seed': seed, **report.model_dump()}
            result.columns, result.rows = ITO_COLUMNS, [row]
            result.exit_code = 0 if report.passed else 1
        elif mode == 'lemmas':
            report = martingale_lab.lemma_check(draws, seed)
            result.columns, result.rows = LEMMA_COLUMNS, [report.model_dump()]
            result.exit_code = 0 if report.passed else 1
        else:
            raise UsageError(f'unknown mode {mode!r}')

        result.outputs['simulate.csv'] = write_csv(self.output_dir / 'simulate.csv', result.columns, result.rows)
        return self._finish(result, params, [seed])

    # -- replay ----------------------------------------------------------------

    def run(self, verb: str, params: Dict[str, Any]) -> RunResult:
        handlers = {
            'constants': self.run_constants,
            'bellman': self.run_bellman,
            'certify': self.run_certify,
            'simulate': self.run_simulate,
        }
        if verb not in handlers:
            raise UsageError(f'cannot replay verb {verb!r}')
        return handlers[verb](**params)


def load_manifest(path: Path) -> RunManifest:
    try:
        return RunManifest.model_validate(json.loads(Path(path).read_text(encoding='utf-8')))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f'cannot read manifest {path}: {e}') from e


def replay(manifest_path: Path) -> RunResult:
    """Re-run a manifest in a scratch directory and compare output digests.

    Exit code 1 if any digest differs or an output is missing.
    """
    manifest = load_manifest(manifest_path)
    params = dict(manifest.params)
    knobs = params.pop('config', {})
    with tempfile.TemporaryDirectory(prefix='orthobell-replay-') as tmp:
        lab = Lab(Config(**knobs), output_dir=Path(tmp), record=False)
        rerun = lab.run(manifest.verb, params)
        digests = {name: sha256_file(path) for name, path in rerun.outputs.items()}

    result = RunResult(verb='replay', columns=['output', 'recorded', 'replayed', 'match'])
    for name in sorted(set(manifest.outputs) | set(digests)):
        recorded, replayed = manifest.outputs.get(name), digests.get(name)
        result.rows.append({'output': name, 'recorded': recorded, 'replayed': replayed, 'match': recorded == replayed})
        if recorded != replayed:
            result.exit_code = 1
    if manifest.version != __version__:
        result.messages.append(f'manifest written by version {manifest.version}, replayed with {__version__}')
    result.summary = {'verb': manifest.verb, 'manifest_digest': sha256_bytes(Path(manifest_path).read_bytes())}
    return result
