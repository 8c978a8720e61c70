"""Command-line interface for Orthobell."""

import functools
import logging
from pathlib import Path

import click
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from . import config, db
from .core import Lab, RunResult, replay as replay_manifest
from .errors import BranchError, ConstructionError, DomainError, NumericError, UsageError
from .utils import render_mapping, render_table

EXIT_FAILURE = 1
EXIT_USAGE = 2

# Longer tables go to the CSV only
MAX_TABLE_ROWS = 40

console = Console()


def handle_errors(func):
    """Map lab exceptions onto the 0/1/2 exit contract."""

    @functools.wraps(func)
    @click.pass_context
    def wrapper(ctx, *args, **kwargs):
        try:
            return func(ctx, *args, **kwargs)
        except (UsageError, DomainError, BranchError, ValidationError) as e:
            click.echo(f'Error: {e}', err=True)
            ctx.exit(EXIT_USAGE)
        except (NumericError, ConstructionError) as e:
            click.echo(f'Error: {e}', err=True)
            ctx.exit(EXIT_FAILURE)

    return wrapper


def report(ctx, result: RunResult, title: str) -> None:
    """Print a result and exit with its status."""
    if result.rows:
        shown = result.rows[:MAX_TABLE_ROWS]
        render_table(title, result.columns, shown, console)
        if len(result.rows) > len(shown):
            click.echo(f'... {len(result.rows) - len(shown)} more rows in the CSV output')
    if result.summary:
        render_mapping(f'{title} summary', result.summary, console)
    for message in result.messages:
        click.echo(message)
    if result.manifest_path:
        click.echo(f'Manifest: {result.manifest_path}')
    ctx.exit(result.exit_code)


@click.group()
@click.option('--debug', '-d', is_flag=True, help='Enable debug mode')
@click.option('--output-dir', '-o', type=click.Path(file_okay=False, path_type=Path), help='Directory for outputs and manifests')
@click.option('--registry', type=click.Path(dir_okay=False, path_type=Path), help='Run registry database (default: XDG data dir)')
@click.option('--no-registry', is_flag=True, help='Do not record runs in the registry')
@click.pass_context
def cli(ctx, debug: bool, output_dir: Path, registry: Path, no_registry: bool):
    """Orthobell - constants, Bellman functions and Monte Carlo checks for orthogonal martingales."""
    if debug:
        logging.basicConfig(level=logging.DEBUG, format='%(message)s', handlers=[RichHandler(console=Console(stderr=True))])

    try:
        app_config = config.get_config(output_dir=str(output_dir) if output_dir else None)
    except ValueError as e:
        click.echo(f'Error: bad configuration: {e}', err=True)
        ctx.exit(EXIT_USAGE)

    ctx.ensure_object(dict)
    ctx.obj['config'] = app_config
    ctx.obj['debug'] = debug

    record = not no_registry
    if record:
        if registry is None:
            config.ensure_data_dir()
            registry = config.get_db_path()
        else:
            registry.parent.mkdir(parents=True, exist_ok=True)
        db.init_db(str(registry))
        ctx.call_on_close(db.close_db)
    ctx.obj['record'] = record
    ctx.obj['lab'] = Lab(app_config, record=record)


@cli.command()
@click.option('--p-min', type=float, default=2.0, show_default=True, help='Smallest exponent (>= 1.01)')
@click.option('--p-max', type=float, default=6.0, show_default=True, help='Largest exponent')
@click.option('--step', type=float, default=0.5, show_default=True, help='Exponent step')
@click.option('--format', 'fmt', type=click.Choice(['csv', 'json']), default='csv', show_default=True)
@handle_errors
def constants(ctx, p_min: float, p_max: float, step: float, fmt: str):
    """Tabulate Laguerre roots and the conjectured constants c_left(q), c_right(p)."""
    result = ctx.obj['lab'].run_constants(p_min, p_max, step, fmt)
    report(ctx, result, 'Conjecture table')


@cli.command()
@click.option('--p', type=float, required=True, help='Exponent p >= 2')
@click.option('--u', type=float, help='First coordinate')
@click.option('--v', type=float, help='Second coordinate')
@click.option('--grid', type=int, help='Scan a grid x grid log grid over [1e-2, 1e2]^2 instead of one point')
@click.option('--branch', type=click.Choice(['plus', 'minus']), default='plus', show_default=True)
@handle_errors
def bellman(ctx, p: float, u: float, v: float, grid: int, branch: str):
    """Evaluate B(u, v) at a point or on a grid, or solve the minus-branch boundary system.

    Examples:
      orthobell bellman --p 3 --u 1 --v 1            # B = 2, t = 3, tau = 2
      orthobell bellman --p 3 --branch minus         # C1, C2, gamma, improved constant
      orthobell bellman --p 3 --grid 50              # CSV scan plus JSON summary
    """
    if (u is None) != (v is None):
        raise UsageError('--u and --v go together')
    if grid is not None and grid < 2:
        raise UsageError(f'--grid must be at least 2 (got {grid})')
    result = ctx.obj['lab'].run_bellman(p, u, v, grid, branch)
    report(ctx, result, f'Bellman function ({branch} branch)')


@cli.command()
@click.option('--p', type=float, default=3.0, show_default=True, help='Exponent p >= 2')
@click.option('--grid', type=int, default=8, show_default=True, help='Grid nodes per axis')
@click.option('--samples', type=int, default=20, show_default=True, help='Random directions per node')
@click.option('--seed', type=int, help='Random seed (default: ORTHOBELL_SEED or config)')
@handle_errors
def certify(ctx, p: float, grid: int, samples: int, seed: int):
    """Check the lifted Hessian certificate, the tau condition and the key inequality."""
    result = ctx.obj['lab'].run_certify(p, grid, samples, seed)
    report(ctx, result, f'Certificate scan p={p:g}')


@cli.command()
@click.option('--q', type=float, default=1.5, show_default=True, help='Norm exponent')
@click.option('--paths', type=int, default=2000, show_default=True)
@click.option('--steps', type=int, default=200, show_default=True)
@click.option('--dt', type=float, help='Time step (default: 1/steps)')
@click.option('--seed', type=int, help='Random seed (default: ORTHOBELL_SEED or config)')
@click.option('--construction', default='all', show_default=True, help='Construction name, or "all" for the battery')
@click.option('--mode', type=click.Choice(['ratio', 'ito', 'lemmas']), default='ratio', show_default=True)
@click.option('--regime', type=click.Choice(['right', 'left', 'transform']), default='right', show_default=True)
@click.option('--draws', type=int, default=1_000_000, show_default=True, help='Random draws for --mode lemmas')
@handle_errors
def simulate(ctx, q: float, paths: int, steps: int, dt: float, seed: int, construction: str, mode: str, regime: str, draws: int):
    """Monte Carlo experiments on orthogonal martingale pairs.

    --mode ratio compares terminal L^q norms against the regime's constant,
    --mode ito checks the pathwise chain at q, and --mode lemmas checks the
    per-step relations of the A*Z transform.
    """
    result = ctx.obj['lab'].run_simulate(q, paths, steps, dt, seed, construction, mode, regime, draws)
    report(ctx, result, f'Simulation ({mode})')


@cli.command()
@click.option('--limit', '-l', type=int, default=20, show_default=True, help='Maximum number of runs')
@click.option('--verb', help='Only runs of this verb')
@click.pass_context
def runs(ctx, limit: int, verb: str):
    """List recorded runs."""
    if not ctx.obj['record']:
        click.echo('Error: the run registry is disabled (--no-registry)', err=True)
        ctx.exit(EXIT_USAGE)
    rows = db.get_runs_by_verb(verb, limit=limit) if verb else db.list_runs(limit=limit)
    if not rows:
        click.echo('No runs recorded yet')
        return
    columns = ['id', 'verb', 'seed', 'exit_code', 'created_at', 'manifest']
    table_rows = [
        {
            'id': run.id,
            'verb': run.verb,
            'seed': run.seed,
            'exit_code': run.exit_code,
            'created_at': run.created_at.strftime('%Y-%m-%d %H:%M'),
            'manifest': Path(run.manifest_path).name if run.manifest_path else None,
        }
        for run in rows
    ]
    render_table(f'Runs ({db.get_run_count()} total)', columns, table_rows, console)


@cli.command()
@click.argument('manifest', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@handle_errors
def replay(ctx, manifest: Path):
    """Re-run MANIFEST in a scratch directory and compare output digests."""
    result = replay_manifest(manifest)
    if result.passed:
        click.echo(f'✓ {result.summary["verb"]} outputs reproduced byte-for-byte')
    report(ctx, result, 'Replay')


if __name__ == '__main__':
    cli()
