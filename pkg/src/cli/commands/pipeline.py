"""Run the full failure-load pipeline on one specimen."""

import sys
from pathlib import Path
from typing import Annotated

import typer

from vertfe.pipeline import run_pipeline, write_result
from vertfe.voxel import read_vgrid

from .. import common
from ..common import console, guard


def pipeline(
  grid: Annotated[Path, typer.Argument(help='Grey or density input grid (.vgrid).')],
  out: Annotated[
    Path | None, typer.Option('--out', '-o', help='Result JSON (default: stdout).')
  ] = None,
  rois: Annotated[Path | None, typer.Option(help='Calibration ROIs for grey input.')] = None,
  specimen: Annotated[str | None, typer.Option(help='Specimen id (default: file stem).')] = None,
  config: common.ConfigPath = None,
  model: common.Model = None,
  element: common.Element = None,
  axial_axis: common.AxialAxis = None,
  anterior: common.Anterior = None,
  threshold: common.Threshold = None,
  connectivity: common.Connectivity = None,
  closing_radius: common.ClosingRadius = None,
  band_fraction: common.BandFraction = None,
  pmma_thickness: common.PmmaThickness = None,
  target_spacing: common.TargetSpacing = None,
  floor: common.Floor = None,
  bin_step: common.BinStep = None,
  strain_measure: common.StrainMeasure = None,
  reference_load: common.ReferenceLoad = None,
  linear_method: common.LinearMethod = None,
  increments: common.Increments = None,
  target_strain: common.TargetStrain = None,
  tangent: common.Tangent = None,
  max_cutbacks: common.MaxCutbacks = None,
  end_condition: common.EndCondition = None,
  load_point: common.LoadPoint = None,
):
  """Predict the failure load of one specimen (Ensam or Lyon model)."""
  with guard():
    cfg = common.build_config(
      config,
      model=model,
      element=element,
      axial_axis=axial_axis,
      anterior=anterior,
      threshold=threshold,
      connectivity=connectivity,
      closing_radius=closing_radius,
      band_fraction=band_fraction,
      pmma_thickness=pmma_thickness,
      target_spacing=target_spacing,
      floor=floor,
      bin_step=bin_step,
      strain_measure=strain_measure,
      reference_load=reference_load,
      linear_method=linear_method,
      increments=increments,
      target_strain=target_strain,
      tangent=tangent,
      max_cutbacks=max_cutbacks,
      end_condition=end_condition,
      load_point=load_point,
    )
    result = run_pipeline(
      read_vgrid(grid),
      cfg,
      rois=common.load_rois(rois),
      specimen=specimen if specimen is not None else grid.stem,
    )
    if out is not None:
      write_result(out, result)

  if out is None:
    sys.stdout.write(result.to_json() + '\n')
    return
  console.print(
    f'✅ [green]{result.model.value} failure load:[/green] {result.failure.failure_load:.1f} N'
  )
  console.print(f'📄 [blue]Result:[/blue] {out}')
