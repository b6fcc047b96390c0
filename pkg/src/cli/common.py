"""Shared console, logging setup, error guard and config options for the commands."""

import json
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any

import typer
from rich.console import Console
from rich.logging import RichHandler

from vertfe.config import PipelineConfig, load_config
from vertfe.errors import VertfeError
from vertfe.phantom import read_ground_truth_rois
from vertfe.voxel import RoiSample

console = Console()
err_console = Console(stderr=True)


def setup_logging(verbose: bool = False, debug: bool = False) -> None:
  """Route the ``vertfe`` logger through rich."""
  level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
  logger = logging.getLogger('vertfe')
  logger.handlers.clear()
  logger.addHandler(RichHandler(console=err_console, show_path=False, rich_tracebacks=True))
  logger.setLevel(level)
  logger.propagate = False


@contextmanager
def guard() -> Iterator[None]:
  """Turn toolkit errors into one JSON line on stderr and the matching exit code."""
  try:
    yield
  except VertfeError as e:
    sys.stderr.write(json.dumps(e.to_dict(), sort_keys=True, default=str) + '\n')
    raise typer.Exit(e.exit_code) from e


# Options shared by every command that builds a PipelineConfig. None means
# "keep the value from --config or the model defaults".
ConfigPath = Annotated[
  Path | None, typer.Option('--config', '-c', help='Pipeline config JSON file.')
]
Model = Annotated[str | None, typer.Option(help='Model variant: ensam or lyon.')]
Element = Annotated[str | None, typer.Option(help='Element type: hex8 or tet10.')]
AxialAxis = Annotated[str | None, typer.Option(help='Grid axis along the spine: x, y or z.')]
Anterior = Annotated[str | None, typer.Option(help='Anterior direction, e.g. +y.')]
Threshold = Annotated[float | None, typer.Option(help='Bone density threshold (g/cm3).')]
Connectivity = Annotated[str | None, typer.Option(help='Component connectivity.')]
ClosingRadius = Annotated[int | None, typer.Option(help='Closing radius in voxels.')]
BandFraction = Annotated[float | None, typer.Option(help='Endplate band, fraction of height.')]
PmmaThickness = Annotated[float | None, typer.Option(help='PMMA cap thickness (mm), 0 = none.')]
TargetSpacing = Annotated[float | None, typer.Option(help='Resample to this spacing (mm).')]
Floor = Annotated[
  bool | None,
  typer.Option(
    '--floor/--no-floor', ' /--no-floor-ensam', help='Apply the 100 MPa modulus floor.'
  ),
]
BinStep = Annotated[float | None, typer.Option(help='Bin moduli to this step (MPa).')]
StrainMeasure = Annotated[str | None, typer.Option(help='von_mises or min_principal.')]
ReferenceLoad = Annotated[float | None, typer.Option(help='Reference load F0 (N).')]
LinearMethod = Annotated[str | None, typer.Option(help='Linear solver: cg or direct.')]
Increments = Annotated[int | None, typer.Option(help='Load increments (Lyon).')]
TargetStrain = Annotated[float | None, typer.Option(help='Overall strain at failure (Lyon).')]
Tangent = Annotated[str | None, typer.Option(help='Newton tangent: elastic or consistent.')]
MaxCutbacks = Annotated[int | None, typer.Option(help='Increment halvings before giving up.')]
EndCondition = Annotated[str | None, typer.Option(help='bonded or frictionless ends.')]
LoadPoint = Annotated[str | None, typer.Option(help='anterior_third or centroid.')]


def build_config(config_path: Path | None, **overrides: Any) -> PipelineConfig:
  """Config from file (or model defaults) with the flags that were given on top."""
  given = {k: v for k, v in overrides.items() if v is not None}
  if config_path is not None:
    data = load_config(config_path).to_dict()
    if 'model' in given and given['model'] != data['model']:
      # switching model restarts from that model's defaults
      data = {}
    data.update(given)
  else:
    data = given
  return PipelineConfig.from_dict(data)


def load_rois(path: Path | None) -> list[RoiSample] | None:
  return read_ground_truth_rois(path) if path is not None else None
