"""Generate a synthetic calibrated specimen."""

from pathlib import Path
from typing import Annotated

import typer

from vertfe.phantom import PhantomSpec, gen_phantom, load_phantom_spec, write_ground_truth
from vertfe.voxel import write_vgrid

from ..common import console, guard


def phantom(
  out: Annotated[Path, typer.Argument(help='Output grey grid (.vgrid).')],
  spec: Annotated[
    Path | None, typer.Option('--spec', '-s', help='PhantomSpec JSON; defaults if omitted.')
  ] = None,
  truth: Annotated[
    Path | None, typer.Option(help='Ground-truth JSON (default: <out>.truth.json).')
  ] = None,
  noise_sd: Annotated[float | None, typer.Option(help='Override grey noise SD.')] = None,
  seed: Annotated[int | None, typer.Option(help='Override noise seed.')] = None,
):
  """Write a phantom grey grid and its ground truth (calibration, ROIs, body box)."""
  with guard():
    phantom_spec = load_phantom_spec(spec) if spec is not None else PhantomSpec()
    overrides = {'noise_sd': noise_sd, 'seed': seed}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
      phantom_spec = PhantomSpec.from_dict({**phantom_spec.to_dict(), **overrides})
    grid, ground_truth = gen_phantom(phantom_spec)
    truth = truth or out.with_suffix('.truth.json')
    write_vgrid(out, grid)
    write_ground_truth(truth, ground_truth)

  console.print(f'✅ [green]Phantom grid written:[/green] {out} {list(grid.dims)}')
  console.print(f'📐 [blue]Ground truth:[/blue] {truth}')
  console.print(
    f'🧪 [blue]Calibration:[/blue] density = {ground_truth.calibration.slope:g} * grey'
    f' + {ground_truth.calibration.intercept:g}'
  )
