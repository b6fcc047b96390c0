"""Command line interface of the vertfe toolkit."""

from vertfe import __version__

__all__ = ['__version__']
