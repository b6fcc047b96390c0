"""Run the pipeline over every grid in a directory."""

import json
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Annotated

import typer

from vertfe.config import PipelineConfig
from vertfe.errors import InputNotFound, VertfeError
from vertfe.pipeline import run_pipeline, write_result
from vertfe.voxel import RoiSample, read_vgrid

from .. import common
from ..common import console, guard


@dataclass(frozen=True)
class _Job:
  grid: Path
  out: Path
  config: PipelineConfig
  rois: tuple[RoiSample, ...] | None


def _run(job: _Job) -> dict:
  """One specimen; errors come back as records so the other specimens still run."""
  try:
    result = run_pipeline(read_vgrid(job.grid), job.config, rois=job.rois, specimen=job.grid.stem)
  except VertfeError as e:
    return {'specimen': job.grid.stem, **e.to_dict()}
  write_result(job.out, result)
  return {'specimen': job.grid.stem, 'failure_load_N': result.failure.failure_load}


def batch(
  grids: Annotated[Path, typer.Argument(help='Directory of .vgrid files.')],
  out_dir: Annotated[Path, typer.Option('--out-dir', '-o', help='Result directory.')] = Path(
    'results'
  ),
  threads: Annotated[
    int, typer.Option(envvar='VERTFE_THREADS', min=1, help='Parallel specimens.')
  ] = 1,
  rois: Annotated[Path | None, typer.Option(help='Calibration ROIs for grey inputs.')] = None,
  config: common.ConfigPath = None,
  model: common.Model = None,
  element: common.Element = None,
  threshold: common.Threshold = None,
  band_fraction: common.BandFraction = None,
  pmma_thickness: common.PmmaThickness = None,
  target_spacing: common.TargetSpacing = None,
  increments: common.Increments = None,
  end_condition: common.EndCondition = None,
  load_point: common.LoadPoint = None,
):
  """Predict failure loads for every ``*.vgrid`` in GRIDS, one ``<stem>.json`` each."""
  with guard():
    cfg = common.build_config(
      config,
      model=model,
      element=element,
      threshold=threshold,
      band_fraction=band_fraction,
      pmma_thickness=pmma_thickness,
      target_spacing=target_spacing,
      increments=increments,
      end_condition=end_condition,
      load_point=load_point,
    )
    samples = common.load_rois(rois)
    files = sorted(grids.glob('*.vgrid'))
    if not files:
      raise InputNotFound(f'no .vgrid files in {grids}', path=str(grids))
  out_dir.mkdir(parents=True, exist_ok=True)
  jobs = [
    _Job(f, out_dir / f'{f.stem}.json', cfg, tuple(samples) if samples else None) for f in files
  ]

  console.print(f'📁 [yellow]{len(jobs)} specimens, {threads} worker(s)...[/yellow]')
  if threads == 1:
    records = [_run(job) for job in jobs]
  else:
    with Pool(min(threads, len(jobs))) as pool:
      records = pool.map(_run, jobs)

  summary = out_dir / 'batch_summary.json'
  summary.write_text(json.dumps(records, indent=2, sort_keys=True) + '\n', encoding='utf-8')
  failed = [r for r in records if 'error' in r]
  for r in records:
    if 'error' in r:
      console.print(f'  ❌ {r["specimen"]}: {r["error"]} ({r["message"]})')
    else:
      console.print(f'  ✓ {r["specimen"]}: {r["failure_load_N"]:.1f} N')
  if failed:
    raise typer.Exit(3)
  console.print(f'✅ [green]All specimens done:[/green] {summary}')
