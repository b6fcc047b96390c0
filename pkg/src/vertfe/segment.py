"""Vertebral-body mask: threshold, island removal and morphological closing."""

import logging
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, InvalidGrid, WrongKind
from .voxel import GridKind, VoxelGrid, VoxelMask

logger = logging.getLogger(__name__)

__all__ = [
  'Connectivity',
  'VoxelMask',
  'ball',
  'close_mask',
  'largest_component',
  'segment_body',
  'threshold_mask',
]


class Connectivity(str, Enum):
  FACE6 = 'face6'
  VERTEX26 = 'vertex26'

  def structure(self) -> np.ndarray:
    rank = 1 if self is Connectivity.FACE6 else 3
    return ndimage.generate_binary_structure(3, rank)


def threshold_mask(grid: VoxelGrid, tau: float) -> VoxelMask:
  """Set every voxel whose density is >= tau."""
  if grid.kind != GridKind.DENSITY:
    raise WrongKind(f'thresholding needs a density grid, got {grid.kind.value}')
  if not np.isfinite(tau):
    raise InvalidGrid(f'threshold must be finite, got {tau}')
  return VoxelMask.like(grid, grid.values >= tau)


def largest_component(
  mask: VoxelMask, connectivity: Connectivity = Connectivity.FACE6
) -> VoxelMask:
  """Keep only the largest connected component.

  Ties on voxel count go to the component holding the smallest linear
  (x-fastest) voxel index.
  """
  labels, n = ndimage.label(mask.array(), structure=Connectivity(connectivity).structure())
  if n == 0:
    raise EmptyMask('segmentation produced an empty mask')

  flat = labels.ravel(order='F')
  sizes = np.bincount(flat, minlength=n + 1)[1:]
  seeds = np.full(n + 1, flat.size, dtype=np.int64)
  hit = np.flatnonzero(flat)
  np.minimum.at(seeds, flat[hit], hit)
  seeds = seeds[1:]

  # lexsort: last key is primary
  winner = int(np.lexsort((seeds, -sizes))[0]) + 1
  logger.debug(
    'Found %d components, keeping label %d with %d voxels', n, winner, sizes[winner - 1]
  )
  return VoxelMask.like(mask, flat == winner)


def ball(radius: int) -> np.ndarray:
  """Discrete ball structuring element: offsets with i^2 + j^2 + k^2 <= r^2."""
  r = int(radius)
  axis = np.arange(-r, r + 1)
  i, j, k = np.meshgrid(axis, axis, axis, indexing='ij')
  return i**2 + j**2 + k**2 <= r * r


def close_mask(mask: VoxelMask, radius_vox: int) -> VoxelMask:
  """Morphological closing (dilate then erode) with a ball of the given radius.

  The mask is padded by the radius first so the closing behaves as on an
  unbounded domain and is then cropped back.
  """
  if radius_vox < 0:
    raise InvalidGrid(f'closing radius must be >= 0, got {radius_vox}')
  if radius_vox == 0 or mask.count == 0:
    return VoxelMask.like(mask, mask.bits)

  r = int(radius_vox)
  footprint = ball(r)
  padded = np.pad(mask.array(), r, mode='constant', constant_values=False)
  dilated = ndimage.binary_dilation(padded, structure=footprint)
  closed = ndimage.binary_erosion(dilated, structure=footprint, border_value=0)
  closed = closed[r:-r, r:-r, r:-r]
  logger.debug('Closing radius %d added %d voxels', r, int(closed.sum()) - mask.count)
  return VoxelMask.like(mask, closed.ravel(order='F'))


def segment_body(
  grid: VoxelGrid,
  tau: float,
  connectivity: Connectivity = Connectivity.FACE6,
  closing_radius: int = 1,
) -> VoxelMask:
  """Threshold, drop islands, then close small cavities."""
  mask = threshold_mask(grid, tau)
  mask = largest_component(mask, connectivity)
  mask = close_mask(mask, closing_radius)
  logger.info('Segmented %d voxels at tau=%g', mask.count, tau)
  return mask
