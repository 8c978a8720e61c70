"""Tests for the command-line interface and its exit-code contract."""

import csv
import json

import pytest
from click.testing import CliRunner

from orthobell.cli import cli


@pytest.fixture
def run(tmp_path, output_dir):
    runner = CliRunner()
    registry = tmp_path / 'registry' / 'runs.db'

    def invoke(*args):
        return runner.invoke(cli, ['--registry', str(registry), '-o', str(output_dir), *args])

    return invoke


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.DictReader(f))


def test_constants_single_row(run, output_dir):
    result = run('constants', '--p-min', '2', '--p-max', '2')
    assert result.exit_code == 0, result.output
    rows = read_csv(output_dir / 'constants.csv')
    assert len(rows) == 1
    assert list(rows[0]) == ['p', 'q', 'z_p', 'z_q', 'c_left', 'c_right', 'gap']
    assert abs(float(rows[0]['gap'])) < 1e-9


def test_constants_p3_row(run, output_dir):
    result = run('constants', '--p-min', '3', '--p-max', '3', '--format', 'json')
    assert result.exit_code == 0, result.output
    rows = json.loads((output_dir / 'constants.json').read_text())
    assert rows[0]['c_right'] == pytest.approx(1.987184, abs=1e-6)
    assert (output_dir / 'constants.manifest.json').exists()


@pytest.mark.parametrize(
    'args',
    [
        ('--p-min', '1.0', '--p-max', '2'),
        ('--p-min', '3', '--p-max', '2'),
        ('--p-min', '2', '--p-max', '3', '--step', '0'),
    ],
)
def test_constants_bad_range_is_usage_error(run, args):
    result = run('constants', *args)
    assert result.exit_code == 2


def test_constants_failing_row_exits_one(run, monkeypatch):
    # a root scan that cannot see L_1.02 change sign
    from orthobell import config

    monkeypatch.setattr(config, 'load_user_config', lambda: {'ROOT_SCAN_STEP': 0.4})
    result = run('constants', '--p-min', '1.02', '--p-max', '1.02')
    assert result.exit_code == 1
    assert 'root finder failed for p = 1.02' in result.output


def test_bellman_point(run, output_dir):
    result = run('bellman', '--p', '3', '--u', '1', '--v', '1')
    assert result.exit_code == 0, result.output
    report = json.loads((output_dir / 'bellman.json').read_text())
    assert report['point']['value'] == pytest.approx(2.0)
    assert report['point']['t'] == pytest.approx(3.0)
    assert report['point']['tau'] == pytest.approx(2.0)


def test_bellman_minus_solve_only(run, output_dir):
    result = run('bellman', '--p', '3', '--branch', 'minus')
    assert result.exit_code == 0, result.output
    report = json.loads((output_dir / 'bellman.json').read_text())
    assert abs(report['C1']) == pytest.approx(1.329660319, abs=1e-6)
    assert report['C2'] == pytest.approx(2.256215334, abs=1e-6)
    assert report['improved_estimate'] == pytest.approx(1.562656814, abs=1e-6)
    assert 'C1' in result.output


def test_bellman_grid(run, output_dir):
    result = run('bellman', '--p', '3', '--grid', '4')
    assert result.exit_code == 0, result.output
    assert len(read_csv(output_dir / 'bellman.csv')) == 16
    summary = json.loads((output_dir / 'bellman-summary.json').read_text())
    assert summary['passed'] is True
    assert summary['saturation']['passed'] is True


@pytest.mark.parametrize(
    'args',
    [
        ('--p', '1.5', '--u', '1', '--v', '1'),
        ('--p', '3'),
        ('--p', '3', '--u', '1'),
        ('--p', '2', '--branch', 'minus'),
        ('--p', '3', '--u', '1', '--v', '1', '--branch', 'sideways'),
    ],
)
def test_bellman_usage_errors(run, args):
    assert run('bellman', *args).exit_code == 2


def test_certify_p3(run, output_dir):
    result = run('certify', '--p', '3', '--grid', '3', '--samples', '3', '--seed', '5')
    assert result.exit_code == 0, result.output
    assert len(read_csv(output_dir / 'certify.csv')) == 9
    summary = json.loads((output_dir / 'certify-summary.json').read_text())
    assert summary['tau_condition_plus']['holds'] is True
    assert summary['tau_condition_minus']['holds'] is False
    assert 'minus-branch tau condition does not hold' in result.output


def test_certify_p4(run):
    assert run('certify', '--p', '4', '--grid', '3', '--samples', '3').exit_code == 0


def test_certify_zero_samples(run):
    assert run('certify', '--samples', '0').exit_code == 2


def test_simulate_ratio(run, output_dir):
    result = run('simulate', '--q', '1.5', '--paths', '200', '--steps', '20', '--seed', '3')
    assert result.exit_code == 0, result.output
    rows = read_csv(output_dir / 'simulate.csv')
    assert [r['construction'] for r in rows] == ['identity', 'rotated', 'rotated-scaled', 'sign-switch', 'constant-half']
    assert all(float(r['bound']) == pytest.approx(1.632993, abs=1e-6) for r in rows)
    assert {r['regime'] for r in rows} == {'right'}


def test_simulate_rows_carry_regime(run, output_dir):
    result = run('simulate', '--q', '3', '--regime', 'left', '--paths', '100', '--steps', '10', '--seed', '3')
    assert result.exit_code == 0, result.output
    rows = read_csv(output_dir / 'simulate.csv')
    assert list(rows[0])[:2] == ['regime', 'q']
    assert [r['regime'] for r in rows] == ['left'] * 3
    assert [r['construction'] for r in rows] == ['identity', 'rotated', 'amplified']


def test_simulate_lemmas(run, output_dir):
    result = run('simulate', '--mode', 'lemmas', '--draws', '5000', '--seed', '1')
    assert result.exit_code == 0, result.output
    row = read_csv(output_dir / 'simulate.csv')[0]
    assert float(row['max_orthogonality_residual']) <= 1e-14
    assert float(row['max_bracket_factor']) <= 4.0


@pytest.mark.parametrize('args', [('--paths', '0'), ('--steps', '0'), ('--construction', 'nope'), ('--dt', '-1')])
def test_simulate_usage_errors(run, args):
    assert run('simulate', *args).exit_code == 2


def test_seed_from_environment(run, output_dir, monkeypatch):
    monkeypatch.setenv('ORTHOBELL_SEED', '77')
    result = run('simulate', '--mode', 'lemmas', '--draws', '100')
    assert result.exit_code == 0, result.output
    manifest = json.loads((output_dir / 'simulate.manifest.json').read_text())
    assert manifest['seeds'] == [77]


def test_runs_lists_recorded_runs(run):
    run('constants', '--p-min', '2', '--p-max', '2')
    run('bellman', '--p', '3', '--u', '1', '--v', '1')
    result = run('runs')
    assert result.exit_code == 0, result.output
    assert 'constants' in result.output
    assert 'bellman' in result.output


def test_runs_without_registry(output_dir):
    result = CliRunner().invoke(cli, ['--no-registry', '-o', str(output_dir), 'runs'])
    assert result.exit_code == 2


def test_replay_reproduces_outputs(run, output_dir):
    assert run('certify', '--p', '3', '--grid', '2', '--samples', '2', '--seed', '11').exit_code == 0
    result = run('replay', str(output_dir / 'certify.manifest.json'))
    assert result.exit_code == 0, result.output
    assert 'reproduced' in result.output


def test_replay_detects_mismatch(run, output_dir):
    assert run('constants', '--p-min', '2', '--p-max', '3').exit_code == 0
    path = output_dir / 'constants.manifest.json'
    manifest = json.loads(path.read_text())
    manifest['outputs']['constants.csv'] = '0' * 64
    path.write_text(json.dumps(manifest))
    assert run('replay', str(path)).exit_code == 1
