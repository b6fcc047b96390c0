"""Agreement and reproducibility statistics for failure-load study tables.

A study table pairs each specimen's experimental failure load with numerical
predictions keyed by model, operator and trial. ``summarize`` produces the
comparison table (accuracy = mean of numerical minus experimental, precision =
its sample SD, R² against experiment), Bland-Altman points and the
intra-operator relative differences, plus box-plot statistics per load column and
a comparison with published accuracy and precision figures.
"""

import json
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.stats as sps

from .errors import (
  DegenerateVariance,
  InputNotFound,
  LengthMismatch,
  MissingCells,
  NonPositiveValue,
  SchemaError,
  TooFewPoints,
  VertfeError,
)

logger = logging.getLogger(__name__)

LIMITS_FACTOR = 1.96
MIN_CASES = 27
MIN_TRIALS = 2
WHISKER_FACTOR = 1.5

# published single-vertebra agreement with endplates: (source, accuracy N, precision N)
PUBLISHED_AGREEMENT = (
  ('crawford_2003', -1300.0, 950.0),
  ('wang_2012', -492.0, 880.0),
  ('buckley_2007', 68.0, 677.0),
  ('choisne_2018', -66.0, 396.0),
)


@dataclass(frozen=True, order=True)
class TrialKey:
  """One numerical column: model, operator number and trial number."""

  model: str
  operator: int
  trial: int

  @property
  def column(self) -> str:
    return f'{self.model}_op{self.operator}_t{self.trial}'

  @classmethod
  def parse(cls, column: str) -> 'TrialKey':
    try:
      model, op, trial = column.split('_')
      if not (op.startswith('op') and trial.startswith('t')):
        raise ValueError(column)
      return cls(model, int(op[2:]), int(trial[1:]))
    except ValueError as e:
      raise SchemaError(f'column {column!r} is not <model>_op<N>_t<M>', column=column) from e


ENSAM_OP1_T1 = TrialKey('ensam', 1, 1)
ENSAM_OP1_T2 = TrialKey('ensam', 1, 2)
ENSAM_OP2_T1 = TrialKey('ensam', 2, 1)
LYON_OP3_T1 = TrialKey('lyon', 3, 1)
LYON_OP3_T2 = TrialKey('lyon', 3, 2)
STUDY_KEYS = (ENSAM_OP1_T1, ENSAM_OP1_T2, ENSAM_OP2_T1, LYON_OP3_T1, LYON_OP3_T2)
ID_COLUMNS = ('donor', 'level', 'experimental')
STUDY_COLUMNS = ID_COLUMNS + tuple(k.column for k in STUDY_KEYS)


@dataclass(frozen=True)
class StudyRecord:
  donor: str
  level: str
  experimental: float
  numerical: dict[TrialKey, float | None]


@dataclass(frozen=True)
class StudyTable:
  """Specimen records with explicit missing numerical cells (``None``)."""

  records: tuple[StudyRecord, ...]
  keys: tuple[TrialKey, ...] = STUDY_KEYS

  def __post_init__(self):
    for r in self.records:
      if not r.experimental > 0:
        raise NonPositiveValue(
          f'experimental load of {r.donor} {r.level} must be positive', donor=r.donor
        )
      if set(r.numerical) != set(self.keys):
        raise SchemaError(f'record {r.donor} {r.level} does not carry every trial column')

  def __len__(self) -> int:
    return len(self.records)

  def experimental(self) -> np.ndarray:
    return np.array([r.experimental for r in self.records], dtype=np.float64)

  def column(self, key: TrialKey) -> np.ndarray:
    """Values of one trial column, NaN where missing."""
    return np.array(
      [np.nan if r.numerical[key] is None else r.numerical[key] for r in self.records],
      dtype=np.float64,
    )

  def missing(self, keys: Sequence[TrialKey] | None = None) -> list[dict]:
    """Absent cells as ``{key, donor, level}`` entries."""
    out = []
    for key in keys or self.keys:
      for r in self.records:
        if r.numerical[key] is None:
          out.append({'key': key.column, 'donor': r.donor, 'level': r.level})
    return out

  def frame(self) -> pd.DataFrame:
    data = {
      'donor': [r.donor for r in self.records],
      'level': [r.level for r in self.records],
      'experimental': self.experimental(),
    }
    for key in self.keys:
      data[key.column] = self.column(key)
    return pd.DataFrame(data)


def _parse_number(text: str, line: int, column: str) -> float | None:
  text = text.strip()
  if text == '':
    return None
  try:
    value = float(text)
  except ValueError as e:
    raise SchemaError(
      f'line {line}: {column} is not a number: {text!r}', line=line, column=column
    ) from e
  if not np.isfinite(value):
    raise SchemaError(f'line {line}: {column} is not finite', line=line, column=column)
  return value


def read_study_table(path: Path) -> StudyTable:
  """Parse a study CSV: ``donor,level,experimental,<model>_op<N>_t<M>...`` with a header."""
  path = Path(path)
  if not path.is_file():
    raise InputNotFound(f'study table not found: {path}', path=str(path))
  try:
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
  except pd.errors.EmptyDataError as e:
    raise SchemaError('study table is empty (no header)', line=1) from e
  except pd.errors.ParserError as e:
    raise SchemaError(f'malformed CSV: {e}') from e

  columns = [c.strip() for c in df.columns]
  absent = [c for c in ID_COLUMNS if c not in columns]
  if absent:
    raise SchemaError(f'line 1: missing column(s) {", ".join(absent)}', line=1, missing=absent)
  keys = tuple(TrialKey.parse(c) for c in columns if c not in ID_COLUMNS)
  if not keys:
    raise SchemaError('line 1: no numerical trial columns', line=1)
  if len(df) == 0:
    raise SchemaError('study table has no records', line=2)
  df.columns = columns

  records = []
  for index, row in df.iterrows():
    line = int(index) + 2
    experimental = _parse_number(row['experimental'], line, 'experimental')
    if experimental is None:
      raise SchemaError(f'line {line}: experimental load is empty', line=line)
    if experimental <= 0:
      raise NonPositiveValue(f'line {line}: experimental load must be positive', line=line)
    numerical = {k: _parse_number(row[k.column], line, k.column) for k in keys}
    records.append(
      StudyRecord(
        donor=row['donor'].strip(),
        level=row['level'].strip(),
        experimental=experimental,
        numerical=numerical,
      )
    )
  logger.info('Read %d study records with %d trial columns from %s', len(records), len(keys), path)
  return StudyTable(tuple(records), keys)


def write_study_table(path: Path, table: StudyTable) -> None:
  df = table.frame()
  df.to_csv(path, index=False, float_format='%.12g', encoding='utf-8')


def _pair(numerical, experimental) -> tuple[np.ndarray, np.ndarray]:
  x = np.asarray(numerical, dtype=np.float64).ravel()
  y = np.asarray(experimental, dtype=np.float64).ravel()
  if x.size != y.size:
    raise LengthMismatch(f'{x.size} numerical vs {y.size} experimental values')
  if x.size == 0:
    raise TooFewPoints('no values to compare', n=0)
  return x, y


def sample_sd(values: np.ndarray) -> float:
  """Standard deviation with the n-1 divisor."""
  values = np.asarray(values, dtype=np.float64)
  if values.size < 2:
    raise TooFewPoints(f'standard deviation needs 2 values, got {values.size}', n=int(values.size))
  return float(np.std(values, ddof=1))


def accuracy_precision(numerical, experimental) -> tuple[float, float]:
  """Mean and sample SD of ``numerical - experimental``."""
  x, y = _pair(numerical, experimental)
  diff = x - y
  return float(diff.mean()), sample_sd(diff)


def r_squared(x, y) -> float:
  """Squared Pearson correlation."""
  x, y = _pair(x, y)
  if x.size < 3:
    raise TooFewPoints(f'R² needs at least 3 points, got {x.size}', n=int(x.size))
  if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
    raise DegenerateVariance('R² is undefined when one series is constant')
  r = sps.pearsonr(x, y)[0]
  return float(r * r)


@dataclass(frozen=True)
class AgreementReport:
  """Bland-Altman agreement of a numerical series against experiment."""

  accuracy: float
  precision: float
  bias: float
  limits: tuple[float, float]
  points: pd.DataFrame
  r_squared: float | None = None

  def to_dict(self) -> dict:
    return {
      'accuracy_N': self.accuracy,
      'precision_N': self.precision,
      'bias_N': self.bias,
      'limits_N': list(self.limits),
      'r_squared': self.r_squared,
    }


def bland_altman(numerical, experimental) -> AgreementReport:
  """Per-pair ``(mean, difference)`` points, bias and ``bias ± 1.96 SD`` limits."""
  x, y = _pair(numerical, experimental)
  accuracy, precision = accuracy_precision(x, y)
  points = pd.DataFrame({'mean_N': (x + y) / 2.0, 'diff_N': x - y})
  return AgreementReport(
    accuracy=accuracy,
    precision=precision,
    bias=accuracy,
    limits=(accuracy - LIMITS_FACTOR * precision, accuracy + LIMITS_FACTOR * precision),
    points=points,
  )


@dataclass(frozen=True)
class IntraOperator:
  per_specimen: np.ndarray
  mean: float
  sd: float


def intra_operator(trial1, trial2) -> IntraOperator:
  """Relative trial difference ``100 |t2 - t1| / ((t1 + t2) / 2)`` per specimen, in percent."""
  t1, t2 = _pair(trial1, trial2)
  if np.any(t1 <= 0) or np.any(t2 <= 0):
    raise NonPositiveValue('trial loads must be positive')
  pct = 100.0 * np.abs(t2 - t1) / ((t1 + t2) / 2.0)
  return IntraOperator(pct, float(pct.mean()), sample_sd(pct))


@dataclass
class Table2Row:
  """One comparison row; ``error`` names the condition that left a statistic undefined."""

  label: str
  model: str
  n: int
  accuracy: float | None = None
  precision: float | None = None
  r_squared: float | None = None
  signed_mean: float | None = None
  order: str = 'numerical - experimental'
  error: str | None = None
  r_squared_error: str | None = None

  def to_dict(self) -> dict:
    return asdict(self)


@dataclass
class StudyReport:
  rows: list[Table2Row]
  agreement: dict[str, AgreementReport]
  intra: dict[str, IntraOperator]
  columns: pd.DataFrame
  cross_model_r_squared: float | None
  warnings: list[str] = field(default_factory=list)
  distribution: pd.DataFrame = field(default_factory=pd.DataFrame)
  literature: pd.DataFrame = field(default_factory=pd.DataFrame)

  def row(self, label: str) -> Table2Row:
    for r in self.rows:
      if r.label == label:
        return r
    raise KeyError(label)

  def frame(self) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in self.rows])

  def to_dict(self) -> dict:
    return {
      'rows': [r.to_dict() for r in self.rows],
      'intra_operator_percent': {
        k: {'mean': v.mean, 'sd': v.sd} for k, v in sorted(self.intra.items())
      },
      'cross_model_r_squared': self.cross_model_r_squared,
      'columns': self.columns.to_dict(orient='records'),
      'distribution': self.distribution.to_dict(orient='records'),
      'literature': self.literature.to_dict(orient='records'),
      'warnings': list(self.warnings),
    }


def _agreement_row(label: str, model: str, numerical: np.ndarray, experimental: np.ndarray):
  row = Table2Row(label, model, int(numerical.size))
  report = None
  try:
    report = bland_altman(numerical, experimental)
    row.accuracy, row.precision = report.accuracy, report.precision
  except TooFewPoints as e:
    row.accuracy = float(np.mean(numerical - experimental))
    row.error = e.kind
  try:
    row.r_squared = r_squared(numerical, experimental)
  except VertfeError as e:
    row.r_squared_error = e.kind
  if report is not None:
    report = replace(report, r_squared=row.r_squared)
  row.signed_mean = row.accuracy
  return row, report


def _difference_row(
  label: str, model: str, first: np.ndarray, second: np.ndarray, order: str, with_r2: bool
) -> Table2Row:
  diff = first - second
  row = Table2Row(label, model, int(diff.size), order=order)
  row.signed_mean = float(diff.mean())
  row.accuracy = abs(row.signed_mean)
  try:
    row.precision = sample_sd(diff)
  except TooFewPoints as e:
    row.error = e.kind
  if with_r2:
    try:
      row.r_squared = r_squared(first, second)
    except VertfeError as e:
      row.r_squared_error = e.kind
  return row


def column_summary(table: StudyTable) -> pd.DataFrame:
  """Mean and sample SD of the experimental column and every trial column."""
  df = table.frame().drop(columns=['donor', 'level'])
  sd = df.std(ddof=1) if len(df) > 1 else pd.Series(np.nan, index=df.columns)
  return pd.DataFrame({'column': df.columns, 'mean_N': df.mean().values, 'sd_N': sd.values})


def distribution_summary(table: StudyTable) -> pd.DataFrame:
  """Box-plot statistics of every load column.

  Quartiles use linear interpolation; whiskers reach the most extreme values
  within 1.5 IQR of the box, and values beyond them are counted as outliers.
  """
  df = table.frame().drop(columns=['donor', 'level'])
  rows = []
  for column in df.columns:
    values = df[column].dropna()
    q1, median, q3 = values.quantile([0.25, 0.5, 0.75]).to_numpy()
    iqr = q3 - q1
    inside = values[values.between(q1 - WHISKER_FACTOR * iqr, q3 + WHISKER_FACTOR * iqr)]
    rows.append(
      {
        'column': column,
        'n': int(values.size),
        'min_N': values.min(),
        'q1_N': q1,
        'median_N': median,
        'q3_N': q3,
        'max_N': values.max(),
        'iqr_N': iqr,
        'whisker_low_N': inside.min(),
        'whisker_high_N': inside.max(),
        'outliers': int(values.size - inside.size),
      }
    )
  return pd.DataFrame(rows)


def literature_comparison(rows: Sequence[Table2Row]) -> pd.DataFrame:
  """Published accuracy and precision next to the first trial of each model here."""
  records = [
    {'source': source, 'accuracy_N': accuracy, 'precision_N': precision, 'published': True}
    for source, accuracy, precision in PUBLISHED_AGREEMENT
  ]
  ours = {r.label: r for r in rows}
  for label in ('ensam_op1_t1', 'lyon_op3_t1'):
    row = ours.get(label)
    records.append(
      {
        'source': label,
        'accuracy_N': np.nan if row is None or row.accuracy is None else row.accuracy,
        'precision_N': np.nan if row is None or row.precision is None else row.precision,
        'published': False,
      }
    )
  return pd.DataFrame(records)


def summarize(table: StudyTable) -> StudyReport:
  """Every comparison row, Bland-Altman agreement and intra-operator statistics.

  Ensam rows: operator 1 trials 1 and 2 and their mean, operator 2 trial 1, the
  mean of the two operators' trial means, operator 1 trial 1 minus trial 2, and
  operator 1's trial mean minus operator 2. Lyon rows: operator 3 trials 1 and
  2, their mean and trial 1 minus trial 2. Trial-difference rows report the
  magnitude of the signed mean and keep the sign in ``signed_mean``.
  """
  absent = [k.column for k in STUDY_KEYS if k not in table.keys]
  if absent:
    raise MissingCells(f'missing columns {", ".join(absent)}', keys=absent)
  missing = table.missing(STUDY_KEYS)
  if missing:
    keys = sorted({m['key'] for m in missing})
    raise MissingCells(f'missing cells in {", ".join(keys)}', keys=keys, cells=missing[:50])

  warnings = []
  if len(table) < MIN_CASES:
    msg = (
      f'{len(table)} specimens is below the {MIN_CASES} cases with {MIN_TRIALS} observations '
      'recommended for reproducibility estimates'
    )
    logger.warning(msg)
    warnings.append(msg)

  exp = table.experimental()
  e11, e12, e21 = (table.column(k) for k in (ENSAM_OP1_T1, ENSAM_OP1_T2, ENSAM_OP2_T1))
  l31, l32 = table.column(LYON_OP3_T1), table.column(LYON_OP3_T2)
  e1_mean = (e11 + e12) / 2.0
  l3_mean = (l31 + l32) / 2.0

  rows: list[Table2Row] = []
  agreement: dict[str, AgreementReport] = {}
  for label, model, values in (
    ('ensam_op1_t1', 'ensam', e11),
    ('ensam_op1_t2', 'ensam', e12),
    ('ensam_op1_mean', 'ensam', e1_mean),
    ('ensam_op2_t1', 'ensam', e21),
    ('ensam_operators_mean', 'ensam', (e1_mean + e21) / 2.0),
  ):
    row, report = _agreement_row(label, model, values, exp)
    rows.append(row)
    if report is not None:
      agreement[label] = report
  rows.append(
    _difference_row('ensam_intra_operator', 'ensam', e11, e12, 'op1 t1 - op1 t2', with_r2=True)
  )
  rows.append(
    _difference_row(
      'ensam_inter_operator', 'ensam', e1_mean, e21, 'op1 mean - op2 t1', with_r2=False
    )
  )
  for label, values in (('lyon_op3_t1', l31), ('lyon_op3_t2', l32), ('lyon_op3_mean', l3_mean)):
    row, report = _agreement_row(label, 'lyon', values, exp)
    rows.append(row)
    if report is not None:
      agreement[label] = report
  rows.append(
    _difference_row('lyon_intra_operator', 'lyon', l31, l32, 'op3 t1 - op3 t2', with_r2=True)
  )
  for row in rows:
    if row.error:
      logger.warning('Row %s: %s', row.label, row.error)

  intra = {}
  for label, a, b in (('ensam_op1', e11, e12), ('lyon_op3', l31, l32)):
    try:
      intra[label] = intra_operator(a, b)
    except TooFewPoints as e:
      warnings.append(f'{label} intra-operator SD undefined: {e.message}')

  try:
    cross = r_squared(e11, l31)
  except VertfeError as e:
    cross = None
    warnings.append(f'cross-model R² undefined: {e.message}')

  return StudyReport(
    rows=rows,
    agreement=agreement,
    intra=intra,
    columns=column_summary(table),
    cross_model_r_squared=cross,
    distribution=distribution_summary(table),
    literature=literature_comparison(rows),
    warnings=warnings,
  )


def write_report(report: StudyReport, out_dir: Path) -> list[Path]:
  """Write the comparison table (CSV, JSON), Bland-Altman points and intra-operator files."""
  out_dir = Path(out_dir)
  out_dir.mkdir(parents=True, exist_ok=True)
  written = []

  path = out_dir / 'table2.csv'
  report.frame().to_csv(path, index=False, float_format='%.6f')
  written.append(path)
  path = out_dir / 'table2.json'
  path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n', encoding='utf-8')
  written.append(path)

  for label, agreement in sorted(report.agreement.items()):
    path = out_dir / f'bland_altman_{label}.csv'
    agreement.points.to_csv(path, index=False, float_format='%.6f')
    written.append(path)

  if report.intra:
    path = out_dir / 'intra_operator.csv'
    pd.DataFrame({k: v.per_specimen for k, v in sorted(report.intra.items())}).to_csv(
      path, index_label='record', float_format='%.6f'
    )
    written.append(path)

  for name, frame in (
    ('column_summary.csv', report.columns),
    ('boxplot_summary.csv', report.distribution),
    ('literature_comparison.csv', report.literature),
  ):
    path = out_dir / name
    frame.to_csv(path, index=False, float_format='%.6f')
    written.append(path)
  logger.info('Wrote %d report files to %s', len(written), out_dir)
  return written
