"""Tests for the vertfe command line."""

import json

import pytest
from typer.testing import CliRunner

from src.cli.cli import app
from vertfe.voxel import GridKind, read_vgrid

runner = CliRunner()

UNIAXIAL = ['--end-condition', 'frictionless', '--load-point', 'centroid', '--pmma-thickness', '0']


@pytest.fixture
def phantom_files(tmp_path):
  grid = tmp_path / 'p.vgrid'
  result = runner.invoke(app, ['phantom', str(grid)])
  assert result.exit_code == 0, result.output
  return grid, tmp_path / 'p.truth.json'


def test_no_arguments_shows_help():
  result = runner.invoke(app, [])
  assert 'pipeline' in result.output
  assert 'stats' in result.output


def test_version():
  result = runner.invoke(app, ['--version'])
  assert result.exit_code == 0
  assert 'vertfe 0.1.0' in result.output


def test_phantom_writes_grid_and_truth(phantom_files):
  grid, truth = phantom_files
  assert read_vgrid(grid).kind == GridKind.GREY
  assert len(json.loads(truth.read_text())['rois']) == 4


def test_calibrate_segment_mesh(phantom_files, tmp_path):
  grid, truth = phantom_files
  density = tmp_path / 'd.vgrid'
  result = runner.invoke(app, ['calibrate', str(grid), str(density), '--rois', str(truth)])
  assert result.exit_code == 0, result.output
  assert 'density = 0.001 * grey + -0.1' in result.output
  assert read_vgrid(density).kind == GridKind.DENSITY

  mask = tmp_path / 'm.vgrid'
  result = runner.invoke(app, ['segment', str(density), str(mask)])
  assert result.exit_code == 0, result.output
  assert read_vgrid(mask).count == 2000

  mesh, materials = tmp_path / 'p.mesh', tmp_path / 'p.csv'
  args = ['mesh', str(density), str(mesh), '--materials', str(materials)]
  result = runner.invoke(app, [*args, '--pmma-thickness', '0'])
  assert result.exit_code == 0, result.output
  assert 'elements=2000 ' in mesh.read_text()
  assert materials.read_text().count('\n') == 2001


def test_calibrate_needs_rois(phantom_files, tmp_path):
  grid, _ = phantom_files
  result = runner.invoke(app, ['calibrate', str(grid), str(tmp_path / 'd.vgrid')])
  assert result.exit_code == 3
  assert 'ConfigError' in result.output


def test_pipeline(phantom_files, tmp_path):
  grid, truth = phantom_files
  out = tmp_path / 'result.json'
  result = runner.invoke(
    app, ['pipeline', str(grid), '--rois', str(truth), '--out', str(out), *UNIAXIAL]
  )
  assert result.exit_code == 0, result.output
  assert 'ensam failure load' in result.output
  record = json.loads(out.read_text())
  assert record['specimen'] == 'p'
  assert record['failure_load_N'] == pytest.approx(1501.6, rel=0.02)


def test_pipeline_config_file(phantom_files, tmp_path):
  grid, truth = phantom_files
  config = tmp_path / 'config.json'
  settings = {'model': 'ensam', 'pmma_thickness': 0.0, 'load_point': 'centroid'}
  config.write_text(json.dumps(settings))
  out = tmp_path / 'result.json'
  result = runner.invoke(
    app,
    ['pipeline', str(grid), '--rois', str(truth), '-c', str(config), '-o', str(out)]
    + ['--end-condition', 'frictionless', '--strain-measure', 'min_principal'],
  )
  assert result.exit_code == 0, result.output
  assert json.loads(out.read_text())['failure_load_N'] == pytest.approx(1401.5, rel=0.02)


def test_pipeline_missing_input(tmp_path):
  result = runner.invoke(app, ['pipeline', str(tmp_path / 'none.vgrid')])
  assert result.exit_code == 3
  assert 'InputNotFound' in result.output


def test_pipeline_bad_option_value(phantom_files):
  grid, truth = phantom_files
  result = runner.invoke(app, ['pipeline', str(grid), '--rois', str(truth), '--element', 'hex20'])
  assert result.exit_code == 3
  assert 'ConfigError' in result.output


def test_usage_error():
  result = runner.invoke(app, ['pipeline'])
  assert result.exit_code == 2


def test_stats_on_shipped_table(tmp_path):
  out_dir = tmp_path / 'report'
  result = runner.invoke(app, ['stats', '--out-dir', str(out_dir)])
  assert result.exit_code == 0, result.output
  assert 'Cross-model R²: 0.91' in result.output
  assert (out_dir / 'table2.csv').exists()
  assert (out_dir / 'bland_altman_ensam_op1_t1.csv').exists()


def test_stats_header_only(tmp_path):
  table = tmp_path / 'study.csv'
  table.write_text('donor,level,experimental,ensam_op1_t1\n')
  result = runner.invoke(app, ['stats', str(table), '-o', str(tmp_path / 'r')])
  assert result.exit_code == 3
  assert 'SchemaError' in result.output


def test_batch(tmp_path):
  grids = tmp_path / 'grids'
  grids.mkdir()
  for name in ('a', 'b'):
    result = runner.invoke(
      app, ['phantom', str(grids / f'{name}.vgrid'), '--truth', str(tmp_path / 'truth.json')]
    )
    assert result.exit_code == 0, result.output
  out_dir = tmp_path / 'results'
  result = runner.invoke(
    app,
    ['batch', str(grids), '-o', str(out_dir), '--rois', str(tmp_path / 'truth.json'), *UNIAXIAL],
  )
  assert result.exit_code == 0, result.output
  summary = json.loads((out_dir / 'batch_summary.json').read_text())
  assert [r['specimen'] for r in summary] == ['a', 'b']
  assert (out_dir / 'a.json').exists()


def test_batch_reports_failures(tmp_path):
  grids = tmp_path / 'grids'
  grids.mkdir()
  runner.invoke(app, ['phantom', str(grids / 'a.vgrid')])
  # grey input without ROIs cannot be calibrated
  result = runner.invoke(app, ['batch', str(grids), '-o', str(tmp_path / 'results')])
  assert result.exit_code == 3
  summary = json.loads((tmp_path / 'results' / 'batch_summary.json').read_text())
  assert summary[0]['error'] == 'WrongKind'


def test_batch_empty_directory(tmp_path):
  grids = tmp_path / 'grids'
  grids.mkdir()
  result = runner.invoke(app, ['batch', str(grids), '-o', str(tmp_path / 'results')])
  assert result.exit_code == 3
  assert 'InputNotFound' in result.output


@pytest.mark.parametrize('flag', ['--no-floor', '--no-floor-ensam'])
def test_floor_can_be_disabled(phantom_files, tmp_path, flag):
  grid, truth = phantom_files
  out = tmp_path / 'result.json'
  args = ['pipeline', str(grid), '--rois', str(truth), '-o', str(out), *UNIAXIAL]
  result = runner.invoke(app, [*args, '--band-fraction', '0.04', flag])
  assert result.exit_code == 0, result.output
  # the phantom bone is stiffer than the floor, so the load is unchanged
  assert json.loads(out.read_text())['failure_load_N'] == pytest.approx(1501.6, rel=0.02)
