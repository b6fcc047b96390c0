"""Tests for study-table parsing and the agreement statistics."""

import json

import numpy as np
import pytest

from vertfe.errors import (
  DegenerateVariance,
  InputNotFound,
  LengthMismatch,
  MissingCells,
  NonPositiveValue,
  SchemaError,
  TooFewPoints,
)
from vertfe.phantom import embedded_table1
from vertfe.stats import (
  ENSAM_OP1_T1,
  LYON_OP3_T1,
  TrialKey,
  accuracy_precision,
  bland_altman,
  intra_operator,
  r_squared,
  read_study_table,
  summarize,
  write_report,
  write_study_table,
)

HEADER = (
  'donor,level,experimental,'
  'ensam_op1_t1,ensam_op1_t2,ensam_op2_t1,lyon_op3_t1,lyon_op3_t2\n'
)


@pytest.fixture(scope='module')
def report():
  return summarize(embedded_table1())


def write_table(tmp_path, body):
  path = tmp_path / 'study.csv'
  path.write_text(HEADER + body, encoding='utf-8')
  return path


class TestEmbeddedStudy:
  def test_shape(self):
    table = embedded_table1()
    assert len(table) == 28
    assert table.missing() == []

  def test_column_means(self, report):
    means = dict(zip(report.columns['column'], report.columns['mean_N']))
    expected = {
      'experimental': 3120,
      'ensam_op1_t1': 3337,
      'ensam_op1_t2': 3234,
      'ensam_op2_t1': 3067,
      'lyon_op3_t1': 3643,
      'lyon_op3_t2': 3724,
    }
    for column, value in expected.items():
      assert means[column] == pytest.approx(value, abs=1.0)

  def test_column_sds(self, report):
    sds = dict(zip(report.columns['column'], report.columns['sd_N']))
    assert sds['experimental'] == pytest.approx(1595, abs=10)
    assert sds['ensam_op1_t1'] == pytest.approx(1430, abs=10)

  @pytest.mark.parametrize(
    'label, accuracy, precision, r2',
    [
      ('ensam_op1_t1', 216, 340, 0.96),
      ('ensam_op1_t2', 113, 385, 0.94),
      ('ensam_op1_mean', 165, 331, 0.96),
      ('ensam_op2_t1', -54, 395, 0.95),
      ('ensam_operators_mean', 56, 337, 0.97),
      ('lyon_op3_t1', 523, 482, 0.92),
      ('lyon_op3_t2', 603, 504, 0.91),
      ('lyon_op3_mean', 563, 489, 0.92),
    ],
  )
  def test_agreement_rows(self, report, label, accuracy, precision, r2):
    row = report.row(label)
    assert row.accuracy == pytest.approx(accuracy, abs=2)
    assert row.precision == pytest.approx(precision, abs=10)
    assert row.r_squared == pytest.approx(r2, abs=0.01)
    assert row.n == 28
    assert row.error is None

  def test_trial_difference_rows(self, report):
    ensam = report.row('ensam_intra_operator')
    assert ensam.signed_mean == pytest.approx(102.6, abs=0.1)
    assert ensam.accuracy == pytest.approx(102.6, abs=0.1)
    assert ensam.precision == pytest.approx(298.1, abs=0.1)
    assert ensam.r_squared == pytest.approx(0.96, abs=0.01)
    lyon = report.row('lyon_intra_operator')
    assert lyon.signed_mean == pytest.approx(-80.1, abs=0.1)
    assert lyon.accuracy == pytest.approx(80.1, abs=0.1)
    assert lyon.precision == pytest.approx(123.1, abs=0.1)
    assert lyon.r_squared == pytest.approx(0.99, abs=0.01)
    inter = report.row('ensam_inter_operator')
    assert inter.accuracy == pytest.approx(218.3, abs=0.1)
    assert inter.r_squared is None

  def test_intra_operator_percent(self, report):
    assert report.intra['ensam_op1'].mean == pytest.approx(6.4, abs=0.2)
    assert report.intra['ensam_op1'].sd == pytest.approx(6.2, abs=0.2)
    assert report.intra['lyon_op3'].mean == pytest.approx(3.5, abs=0.2)
    assert report.intra['lyon_op3'].sd == pytest.approx(2.1, abs=0.2)

  def test_cross_model(self, report):
    assert report.cross_model_r_squared == pytest.approx(0.91, abs=0.01)

  def test_no_warnings(self, report):
    assert report.warnings == []

  def test_bland_altman_points(self, report):
    points = report.agreement['ensam_op1_t1'].points
    assert points.loc[0, 'mean_N'] == pytest.approx(2273.5)
    assert points.loc[0, 'diff_N'] == pytest.approx(677.0)
    lo, hi = report.agreement['ensam_op1_t1'].limits
    assert hi - lo == pytest.approx(2 * 1.96 * report.row('ensam_op1_t1').precision)

  @pytest.mark.parametrize(
    'label, column',
    [
      ('ensam_op1_t1', 'ensam_op1_t1'),
      ('ensam_op1_t2', 'ensam_op1_t2'),
      ('ensam_op2_t1', 'ensam_op2_t1'),
      ('lyon_op3_t1', 'lyon_op3_t1'),
      ('lyon_op3_t2', 'lyon_op3_t2'),
    ],
  )
  def test_rows_match_a_direct_pandas_computation(self, report, label, column):
    df = embedded_table1().frame()
    diff = df[column] - df['experimental']
    row = report.row(label)
    assert row.accuracy == pytest.approx(diff.mean(), rel=1e-12)
    assert row.precision == pytest.approx(diff.std(ddof=1), rel=1e-12)
    r = df[[column, 'experimental']].corr().iloc[0, 1]
    assert row.r_squared == pytest.approx(r**2, rel=1e-10)

  def test_boxplot_summary(self, report):
    df = embedded_table1().frame()
    summary = report.distribution.set_index('column')
    assert list(summary.index) == list(df.columns.drop(['donor', 'level']))
    for column, stats in summary.iterrows():
      values = df[column].to_numpy()
      q1, median, q3 = np.percentile(values, [25, 50, 75])
      assert stats['median_N'] == pytest.approx(median)
      assert stats['q1_N'] == pytest.approx(q1)
      assert stats['q3_N'] == pytest.approx(q3)
      assert stats['n'] == 28
      fence = 1.5 * (q3 - q1)
      inside = values[(values >= q1 - fence) & (values <= q3 + fence)]
      assert stats['whisker_low_N'] == inside.min()
      assert stats['whisker_high_N'] == inside.max()
      assert stats['outliers'] == values.size - inside.size
      assert stats['min_N'] <= stats['whisker_low_N'] <= stats['q1_N']
      assert stats['q3_N'] <= stats['whisker_high_N'] <= stats['max_N']

  def test_literature_comparison(self, report):
    lit = report.literature.set_index('source')
    assert lit.loc['crawford_2003', 'accuracy_N'] == -1300.0
    assert lit.loc['choisne_2018', 'precision_N'] == 396.0
    assert lit['published'].sum() == 4
    assert lit.loc['ensam_op1_t1', 'accuracy_N'] == pytest.approx(216, abs=2)
    assert lit.loc['lyon_op3_t1', 'precision_N'] == pytest.approx(482, abs=10)
    assert not lit.loc['lyon_op3_t1', 'published']

  def test_write_report(self, report, tmp_path):
    written = write_report(report, tmp_path / 'out')
    names = {p.name for p in written}
    assert {'table2.csv', 'table2.json', 'intra_operator.csv', 'column_summary.csv'} <= names
    assert {'boxplot_summary.csv', 'literature_comparison.csv'} <= names
    assert 'bland_altman_lyon_op3_mean.csv' in names
    data = json.loads((tmp_path / 'out' / 'table2.json').read_text())
    assert len(data['rows']) == 11


class TestStatistics:
  def test_accuracy_precision(self):
    accuracy, precision = accuracy_precision([3.0, 5.0, 7.0], [1.0, 1.0, 1.0])
    assert accuracy == 4.0
    assert precision == 2.0

  def test_r_squared_is_scale_free(self):
    x = np.array([1.0, 2.0, 4.0, 7.0])
    assert r_squared(x, 2 * x + 5) == pytest.approx(1.0)

  def test_swapping_arguments_negates_accuracy(self, rng):
    a = rng.normal(3000.0, 800.0, size=20)
    b = a + rng.normal(150.0, 300.0, size=20)
    forward, backward = bland_altman(a, b), bland_altman(b, a)
    assert backward.accuracy == pytest.approx(-forward.accuracy, rel=1e-12)
    assert backward.precision == pytest.approx(forward.precision, rel=1e-12)
    np.testing.assert_allclose(backward.points['mean_N'], forward.points['mean_N'])
    np.testing.assert_allclose(backward.points['diff_N'], -forward.points['diff_N'])

  @pytest.mark.parametrize('scale, offset', [(2.0, 5.0), (-3.0, 0.0), (-0.5, 1000.0), (1.0, -7.0)])
  def test_r_squared_affine_invariance(self, rng, scale, offset):
    x = rng.normal(size=15)
    y = x + rng.normal(scale=0.5, size=15)
    expected = r_squared(x, y)
    assert r_squared(scale * x + offset, y) == pytest.approx(expected, rel=1e-10)
    assert r_squared(x, scale * y + offset) == pytest.approx(expected, rel=1e-10)
    assert r_squared(y, x) == pytest.approx(expected, rel=1e-12)

  def test_r_squared_constant_series(self):
    with pytest.raises(DegenerateVariance):
      r_squared([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

  def test_r_squared_needs_three_points(self):
    with pytest.raises(TooFewPoints):
      r_squared([1.0, 2.0], [1.0, 2.0])

  def test_length_mismatch(self):
    with pytest.raises(LengthMismatch):
      bland_altman([1.0, 2.0], [1.0])

  def test_intra_operator_single_specimen_value(self):
    result = intra_operator([2612.0, 1000.0], [2650.0, 1000.0])
    assert result.per_specimen[0] == pytest.approx(100 * 38 / 2631)
    assert result.per_specimen[1] == 0.0

  def test_intra_operator_positive_loads(self):
    with pytest.raises(NonPositiveValue):
      intra_operator([1.0, 0.0], [1.0, 1.0])

  def test_trial_key(self):
    assert TrialKey.parse('lyon_op3_t2') == TrialKey('lyon', 3, 2)
    assert ENSAM_OP1_T1.column == 'ensam_op1_t1'
    with pytest.raises(SchemaError):
      TrialKey.parse('lyon_3_2')


class TestReadStudyTable:
  def test_missing_file(self, tmp_path):
    with pytest.raises(InputNotFound):
      read_study_table(tmp_path / 'nope.csv')

  def test_header_only(self, tmp_path):
    with pytest.raises(SchemaError, match='no records'):
      read_study_table(write_table(tmp_path, ''))

  def test_bad_number_reports_line(self, tmp_path):
    path = write_table(tmp_path, '1,L1,1000,1,1,1,1,1\n2,L2,1000,1,abc,1,1,1\n')
    with pytest.raises(SchemaError) as info:
      read_study_table(path)
    assert info.value.details['line'] == 3
    assert info.value.details['column'] == 'ensam_op1_t2'

  def test_non_positive_experimental(self, tmp_path):
    with pytest.raises(NonPositiveValue):
      read_study_table(write_table(tmp_path, '1,L1,0,1,1,1,1,1\n'))

  def test_missing_id_column(self, tmp_path):
    path = tmp_path / 'study.csv'
    path.write_text('donor,experimental,ensam_op1_t1\n1,1000,900\n')
    with pytest.raises(SchemaError):
      read_study_table(path)

  def test_write_keeps_missing_cells(self, tmp_path):
    table = read_study_table(write_table(tmp_path, '7,T12,1500.5,,1400,1450,1600,1650\n'))
    path = tmp_path / 'copy.csv'
    write_study_table(path, table)
    again = read_study_table(path)
    assert again.records[0].level == 'T12'
    assert again.records[0].experimental == 1500.5
    assert again.missing() == table.missing()

  def test_empty_cell_is_missing(self, tmp_path):
    table = read_study_table(write_table(tmp_path, '1,L1,1000,900,,1000,1100,1050\n'))
    assert table.missing() == [{'key': 'ensam_op1_t2', 'donor': '1', 'level': 'L1'}]
    assert np.isnan(table.column(TrialKey('ensam', 1, 2))[0])
    assert table.column(LYON_OP3_T1)[0] == 1100.0
    with pytest.raises(MissingCells):
      summarize(table)


class TestSummarizeSmallTables:
  def test_single_record(self, tmp_path):
    path = write_table(tmp_path, '1,L1,1000,900,950,1000,1100,1050\n')
    report = summarize(read_study_table(path))
    row = report.row('ensam_op1_t1')
    assert row.accuracy == -100.0
    assert row.precision is None
    assert row.error == 'TooFewPoints'
    assert row.r_squared_error == 'TooFewPoints'
    assert report.intra == {}
    assert report.cross_model_r_squared is None
    assert any('below the 27 cases' in w for w in report.warnings)
    assert report.columns['sd_N'].isna().all()
