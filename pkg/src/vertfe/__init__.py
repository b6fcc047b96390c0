"""Voxel-to-failure-load finite element toolkit for vertebral bodies."""

__all__ = ['__version__']
__version__ = '0.1.0'
