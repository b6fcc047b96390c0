"""Shared synthetic fixtures."""

import numpy as np
import pytest

from vertfe.mesh import Orientation, hex_mesh_from_mask
from vertfe.voxel import GridKind, VoxelGrid, VoxelMask


def density_grid(array, spacing=1.0) -> VoxelGrid:
  return VoxelGrid.from_array(np.asarray(array, dtype=float), (spacing,) * 3, kind=GridKind.DENSITY)


def box_mask(grid: VoxelGrid, lo, hi) -> VoxelMask:
  bits = np.zeros(grid.dims, dtype=bool)
  bits[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = True
  return VoxelMask.like(grid, bits.ravel(order='F'))


def column_mesh(nx: int, ny: int, nz: int, spacing: float = 1.0, density: float = 0.3):
  """Solid hex column of nx * ny * nz voxels, axis along z."""
  grid = density_grid(np.full((nx, ny, nz), density), spacing)
  return hex_mesh_from_mask(grid, box_mask(grid, (0, 0, 0), (nx, ny, nz))), grid


@pytest.fixture
def orient() -> Orientation:
  return Orientation.parse('z', '+y')


@pytest.fixture
def cube_mesh():
  """10 x 10 x 10 mm column of 1 mm hexes."""
  mesh, _ = column_mesh(10, 10, 10)
  return mesh


@pytest.fixture
def rng():
  return np.random.default_rng(12345)
