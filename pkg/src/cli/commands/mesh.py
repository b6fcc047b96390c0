"""Mesh a specimen grid without solving."""

from pathlib import Path
from typing import Annotated

import typer

from vertfe.material import assign_materials, write_material_csv
from vertfe.mesh import write_mesh
from vertfe.pipeline import build_mesh, model_density
from vertfe.voxel import read_vgrid

from .. import common
from ..common import console, guard


def mesh(
  grid: Annotated[Path, typer.Argument(help='Grey or density input grid (.vgrid).')],
  out: Annotated[Path, typer.Argument(help='ASCII mesh output.')],
  materials: Annotated[
    Path | None, typer.Option(help='Also write the per-element material CSV here.')
  ] = None,
  rois: Annotated[Path | None, typer.Option(help='Calibration ROIs for grey input.')] = None,
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
):
  """Segment and mesh the grid, tag the endplates and add PMMA caps."""
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
    )
    density, _ = model_density(read_vgrid(grid), cfg, common.load_rois(rois))
    result = build_mesh(density, cfg)
    write_mesh(out, result)
    if materials is not None:
      mapping = assign_materials(
        result,
        density,
        cfg.variant,
        floor=cfg.floor,
        bin_step=cfg.bin_step,
        yield_strain=cfg.yield_strain,
      )
      write_material_csv(materials, result, mapping)

  console.print(
    f'✅ [green]Mesh written:[/green] {out} '
    f'({result.n_elements} {result.kind.value} elements, {result.n_nodes} nodes)'
  )
  if materials is not None:
    console.print(f'🧱 [blue]Materials:[/blue] {materials}')
