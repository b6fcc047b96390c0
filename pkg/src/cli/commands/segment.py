"""Bone segmentation of a density grid."""

from pathlib import Path
from typing import Annotated

import typer

from vertfe.segment import Connectivity, segment_body
from vertfe.voxel import read_vgrid, write_vgrid

from ..common import console, guard


def segment(
  grid: Annotated[Path, typer.Argument(help='Density input grid (.vgrid).')],
  out: Annotated[Path, typer.Argument(help='Mask output grid (.vgrid).')],
  threshold: Annotated[float, typer.Option(help='Density threshold (g/cm3).')] = 0.15,
  connectivity: Annotated[
    Connectivity, typer.Option(help='Connectivity of the kept component.')
  ] = Connectivity.FACE6,
  closing_radius: Annotated[int, typer.Option(help='Closing radius in voxels.')] = 1,
):
  """Threshold, keep the largest component and close small cavities."""
  with guard():
    mask = segment_body(read_vgrid(grid), threshold, connectivity, closing_radius)
    write_vgrid(out, mask)

  console.print(f'✅ [green]Mask written:[/green] {out} ({mask.count} voxels)')
