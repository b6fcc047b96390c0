"""Agreement and reproducibility statistics of a study table."""

from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from vertfe.phantom import embedded_table1
from vertfe.stats import read_study_table, summarize, write_report

from ..common import console, guard


def _fmt(value: float | None, spec: str = '.1f') -> str:
  return '-' if value is None else format(value, spec)


def stats(
  table: Annotated[
    Path | None, typer.Argument(help='Study table CSV (default: the shipped 28-specimen table).')
  ] = None,
  out_dir: Annotated[Path, typer.Option('--out-dir', '-o', help='Report directory.')] = Path(
    'report'
  ),
):
  """Accuracy, precision and R² of every model row, plus intra-operator differences."""
  with guard():
    study = read_study_table(table) if table is not None else embedded_table1()
    report = summarize(study)
    written = write_report(report, out_dir)

  view = Table(title=f'Model vs experiment ({len(study)} specimens)')
  for name in ('row', 'n', 'accuracy (N)', 'precision (N)', 'R²'):
    view.add_column(name, justify='left' if name == 'row' else 'right')
  for row in report.rows:
    view.add_row(
      row.label, str(row.n), _fmt(row.accuracy), _fmt(row.precision), _fmt(row.r_squared, '.2f')
    )
  console.print(view)
  for label, intra in sorted(report.intra.items()):
    console.print(f'🔁 [blue]{label} intra-operator:[/blue] {intra.mean:.2f} ± {intra.sd:.2f} %')
  console.print(f'🔗 [blue]Cross-model R²:[/blue] {_fmt(report.cross_model_r_squared, ".2f")}')
  for warning in report.warnings:
    console.print(f'⚠️  [yellow]{warning}[/yellow]')
  console.print(f'✅ [green]Wrote {len(written)} files to[/green] {out_dir}')
