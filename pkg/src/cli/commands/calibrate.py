"""Grey to density calibration from phantom inserts."""

from pathlib import Path
from typing import Annotated

import typer

from vertfe.errors import ConfigError
from vertfe.voxel import apply_calibration, calibrate_from_phantom, read_vgrid, write_vgrid

from ..common import console, guard, load_rois


def calibrate(
  grid: Annotated[Path, typer.Argument(help='Grey input grid (.vgrid).')],
  out: Annotated[Path, typer.Argument(help='Density output grid (.vgrid).')],
  rois: Annotated[
    Path | None,
    typer.Option(help='ROI JSON: list of {lo, hi, density} or a phantom ground truth.'),
  ] = None,
):
  """Fit density = slope * grey + intercept on the ROIs and write the density grid."""
  with guard():
    samples = load_rois(rois)
    if not samples:
      raise ConfigError('calibrate needs --rois')
    grey = read_vgrid(grid)
    cal = calibrate_from_phantom(grey, samples)
    write_vgrid(out, apply_calibration(grey, cal))

  console.print(f'🧪 density = {cal.slope:.9g} * grey + {cal.intercept:.9g}')
  console.print(f'✅ [green]Density grid written:[/green] {out}')
