"""Main CLI application for the vertfe toolkit."""

from typing import Annotated

import typer

from . import __version__
from .commands.batch import batch
from .commands.calibrate import calibrate
from .commands.mesh import mesh
from .commands.phantom import phantom
from .commands.pipeline import pipeline
from .commands.segment import segment
from .commands.stats import stats
from .common import console, setup_logging

app = typer.Typer(
  help='Vertebral failure-load prediction from voxel grids, and model agreement statistics.',
  no_args_is_help=True,
)


def _show_version(value: bool):
  if value:
    console.print(f'vertfe {__version__}')
    raise typer.Exit()


@app.callback()
def main(
  verbose: Annotated[bool, typer.Option('--verbose', '-v', help='Log pipeline stages.')] = False,
  debug: Annotated[bool, typer.Option('--debug', help='Log solver details.')] = False,
  version: Annotated[
    bool,
    typer.Option('--version', callback=_show_version, is_eager=True, help='Show the version.'),
  ] = False,
):
  setup_logging(verbose=verbose, debug=debug)


app.command()(phantom)
app.command()(calibrate)
app.command()(segment)
app.command()(mesh)
app.command()(pipeline)
app.command()(stats)
app.command()(batch)

if __name__ == '__main__':
  app()
