"""Run the vertfe CLI from a source checkout: ``python app.py --help``."""

from src.cli import cli

if __name__ == '__main__':
  cli.app()
