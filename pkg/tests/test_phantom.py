"""Tests for the synthetic specimen generator and the shipped study table."""

import json

import numpy as np
import pytest

from vertfe.errors import ConfigError, InputNotFound, InsertOverlapsBody
from vertfe.phantom import (
  PhantomShape,
  PhantomSpec,
  embedded_table1,
  gen_phantom,
  load_phantom_spec,
  read_ground_truth_rois,
  write_ground_truth,
)
from vertfe.segment import segment_body
from vertfe.voxel import GridKind, apply_calibration, calibrate_from_phantom


class TestColumnPhantom:
  def test_layout(self):
    grid, truth = gen_phantom(PhantomSpec())
    assert grid.kind == GridKind.GREY
    assert truth.body_mask.count == 10 * 10 * 20
    assert len(truth.rois) == 4
    assert truth.body_lo == (8, 4, 4)

  def test_noiseless_calibration_is_exact(self):
    grid, truth = gen_phantom(PhantomSpec())
    cal = calibrate_from_phantom(grid, truth.rois)
    assert cal.slope == pytest.approx(truth.calibration.slope)
    assert cal.intercept == pytest.approx(truth.calibration.intercept)
    density = apply_calibration(grid, cal)
    np.testing.assert_allclose(density.values, truth.density.values, atol=1e-9)

  def test_segmentation_recovers_body(self):
    grid, truth = gen_phantom(PhantomSpec())
    density = apply_calibration(grid, truth.calibration)
    mask = segment_body(density, 0.15)
    np.testing.assert_array_equal(mask.bits, truth.body_mask.bits)

  def test_noise_is_seeded(self):
    spec = PhantomSpec(noise_sd=5.0, seed=7)
    a, _ = gen_phantom(spec)
    b, _ = gen_phantom(spec)
    c, _ = gen_phantom(PhantomSpec(noise_sd=5.0, seed=8))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)

  def test_noisy_calibration_stays_close(self):
    grid, truth = gen_phantom(PhantomSpec(noise_sd=5.0, seed=3))
    cal = calibrate_from_phantom(grid, truth.rois)
    assert cal.slope == pytest.approx(truth.calibration.slope, rel=0.02)


class TestShellPhantom:
  def test_shell_is_denser(self):
    spec = PhantomSpec(shape=PhantomShape.ELLIPTIC_SHELL, dims=(12.0, 10.0, 16.0))
    _, truth = gen_phantom(spec)
    values = truth.density.array()[truth.body_mask.array().astype(bool)]
    assert set(np.unique(values)) == {0.3, 0.6}
    assert (values == 0.6).sum() > 0
    assert truth.body_mask.count < 12 * 10 * 16

  def test_shell_thickness_checked(self):
    with pytest.raises(ConfigError):
      PhantomSpec(shape='elliptic_cylinder_with_shell', shell_thickness=6.0)


class TestSpecValidation:
  def test_insert_overlapping_body(self):
    spec = PhantomSpec(insert_densities=(0.5, 1.0), insert_positions=((9, 5, 5), (0, 0, 0)))
    with pytest.raises(InsertOverlapsBody):
      gen_phantom(spec)

  @pytest.mark.parametrize(
    'overrides',
    [{'dims': (10.0, 0.0, 5.0)}, {'core_density': -0.1}, {'noise_sd': -1.0}, {'spacing': 0.0}],
  )
  def test_invalid_values(self, overrides):
    with pytest.raises(ConfigError):
      PhantomSpec(**overrides)

  def test_unknown_field(self):
    with pytest.raises(ConfigError):
      PhantomSpec.from_dict({'radius': 3})

  def test_dict_round_trip(self, tmp_path):
    spec = PhantomSpec(dims=(8, 8, 16), insert_densities=(0.0, 1.0), seed=4)
    path = tmp_path / 'spec.json'
    path.write_text(json.dumps(spec.to_dict()))
    assert load_phantom_spec(path) == spec

  def test_missing_spec_file(self, tmp_path):
    with pytest.raises(InputNotFound):
      load_phantom_spec(tmp_path / 'spec.json')


class TestGroundTruth:
  def test_rois_read_back(self, tmp_path):
    _, truth = gen_phantom(PhantomSpec())
    path = tmp_path / 'truth.json'
    write_ground_truth(path, truth)
    assert tuple(read_ground_truth_rois(path)) == truth.rois
    record = json.loads(path.read_text())
    assert record['body']['volume_mm3'] == pytest.approx(2000.0)

  def test_bare_roi_list(self, tmp_path):
    path = tmp_path / 'rois.json'
    path.write_text(json.dumps([{'lo': [0, 0, 0], 'hi': [2, 2, 2], 'density': 0.5}]))
    [roi] = read_ground_truth_rois(path)
    assert roi.hi == (2, 2, 2)
    assert roi.known_density == 0.5

  def test_roi_entries_checked(self, tmp_path):
    path = tmp_path / 'rois.json'
    path.write_text(json.dumps([{'lo': [0, 0, 0]}]))
    with pytest.raises(ConfigError):
      read_ground_truth_rois(path)


def test_embedded_table():
  table = embedded_table1()
  assert len(table) == 28
  assert table.records[0].donor == '438'
  assert table.records[0].experimental == 1935.0
