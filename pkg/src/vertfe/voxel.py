"""Voxel grids, phantom-based density calibration and box-average resampling.

Grid values are stored flat in x-fastest order: voxel (i, j, k) lives at
``i + nx * (j + ny * k)``. ``origin`` is the outer corner of voxel (0, 0, 0),
so voxel (i, j, k) spans ``origin + (i, j, k) * spacing`` to
``origin + (i + 1, j + 1, k + 1) * spacing``.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
  DegenerateFit,
  FewerThanTwoSamples,
  InputNotFound,
  InvalidGrid,
  UpsampleRequested,
  WrongKind,
)

logger = logging.getLogger(__name__)

Triple = tuple[float, float, float]


class GridKind(str, Enum):
  GREY = 'grey'
  DENSITY = 'density'
  MASK = 'mask'


@dataclass(frozen=True)
class VoxelGrid:
  """Regular 3D scalar field with spacing/origin metadata (mm)."""

  dims: tuple[int, int, int]
  spacing: Triple
  origin: Triple
  values: np.ndarray = field(repr=False)
  kind: GridKind = GridKind.GREY

  def __post_init__(self):
    dims = tuple(int(d) for d in self.dims)
    spacing = tuple(float(s) for s in self.spacing)
    origin = tuple(float(o) for o in self.origin)
    if len(dims) != 3 or min(dims) < 1:
      raise InvalidGrid(f'dims must be three positive integers, got {self.dims}')
    if len(spacing) != 3 or not all(s > 0 and math.isfinite(s) for s in spacing):
      raise InvalidGrid(f'spacing must be three positive values, got {self.spacing}')
    if self.kind == GridKind.MASK:
      values = np.asarray(self.values, dtype=bool).ravel()
    else:
      values = np.asarray(self.values, dtype=np.float64).ravel()
    if values.size != dims[0] * dims[1] * dims[2]:
      raise InvalidGrid(
        f'values length {values.size} does not match dims {dims}', dims=list(dims)
      )
    values = values.copy()
    values.flags.writeable = False
    object.__setattr__(self, 'dims', dims)
    object.__setattr__(self, 'spacing', spacing)
    object.__setattr__(self, 'origin', origin)
    object.__setattr__(self, 'values', values)
    object.__setattr__(self, 'kind', GridKind(self.kind))

  @classmethod
  def from_array(
    cls,
    array: np.ndarray,
    spacing: Sequence[float],
    origin: Sequence[float] = (0.0, 0.0, 0.0),
    kind: GridKind = GridKind.GREY,
  ) -> 'VoxelGrid':
    """Build a grid from an array indexed ``[i, j, k]``."""
    array = np.asarray(array)
    if array.ndim != 3:
      raise InvalidGrid(f'expected a 3D array, got shape {array.shape}')
    return cls(array.shape, tuple(spacing), tuple(origin), array.ravel(order='F'), kind)

  def array(self) -> np.ndarray:
    """Read-only view indexed ``[i, j, k]``."""
    return self.values.reshape(self.dims, order='F')

  def with_values(self, values: np.ndarray, kind: GridKind) -> 'VoxelGrid':
    return VoxelGrid(self.dims, self.spacing, self.origin, values, kind)

  @property
  def voxel_volume(self) -> float:
    return self.spacing[0] * self.spacing[1] * self.spacing[2]

  @property
  def extent(self) -> Triple:
    return tuple(n * s for n, s in zip(self.dims, self.spacing))

  def voxel_centers(self) -> np.ndarray:
    """Centers of all voxels, shape (n, 3), in storage order."""
    i, j, k = np.unravel_index(np.arange(self.values.size), self.dims, order='F')
    index = np.stack([i, j, k], axis=1).astype(np.float64)
    return np.asarray(self.origin) + (index + 0.5) * np.asarray(self.spacing)

  def same_geometry(self, other: 'VoxelGrid') -> bool:
    return (
      self.dims == other.dims and self.spacing == other.spacing and self.origin == other.origin
    )


@dataclass(frozen=True)
class VoxelMask(VoxelGrid):
  """Boolean voxel set sharing the geometry of the grid it was derived from."""

  kind: GridKind = GridKind.MASK

  def __post_init__(self):
    object.__setattr__(self, 'kind', GridKind.MASK)
    super().__post_init__()

  @classmethod
  def like(cls, grid: VoxelGrid, bits: np.ndarray) -> 'VoxelMask':
    """Mask with the geometry of ``grid`` and flat x-fastest ``bits``."""
    return cls(grid.dims, grid.spacing, grid.origin, bits)

  @property
  def bits(self) -> np.ndarray:
    return self.values

  @property
  def count(self) -> int:
    return int(np.count_nonzero(self.values))


@dataclass(frozen=True)
class DensityCalibration:
  """Linear grey-to-density map: density = slope * grey + intercept (g/cm3)."""

  slope: float
  intercept: float

  def __post_init__(self):
    if not (math.isfinite(self.slope) and self.slope > 0):
      raise DegenerateFit(f'calibration slope must be finite and positive, got {self.slope}')
    if not math.isfinite(self.intercept):
      raise DegenerateFit(f'calibration intercept must be finite, got {self.intercept}')


@dataclass(frozen=True)
class RoiSample:
  """Axis-aligned half-open index box ``[lo, hi)`` with a known insert density."""

  lo: tuple[int, int, int]
  hi: tuple[int, int, int]
  known_density: float

  @classmethod
  def from_dict(cls, data: dict) -> 'RoiSample':
    return cls(tuple(data['lo']), tuple(data['hi']), float(data['density']))

  def to_dict(self) -> dict:
    return {'lo': list(self.lo), 'hi': list(self.hi), 'density': self.known_density}

  def mean_in(self, grid: VoxelGrid) -> float:
    if self.known_density < 0:
      raise InvalidGrid(f'known density must be >= 0, got {self.known_density}')
    for lo, hi, n in zip(self.lo, self.hi, grid.dims):
      if not 0 <= lo < hi <= n:
        raise InvalidGrid(
          f'ROI {list(self.lo)}..{list(self.hi)} is empty or outside grid {list(grid.dims)}'
        )
    block = grid.array()[
      self.lo[0] : self.hi[0], self.lo[1] : self.hi[1], self.lo[2] : self.hi[2]
    ]
    return float(block.mean())


def calibrate_from_phantom(grid: VoxelGrid, samples: Sequence[RoiSample]) -> DensityCalibration:
  """Fit density = slope * grey + intercept to the mean grey value of each insert."""
  if grid.kind != GridKind.GREY:
    raise WrongKind(f'calibration needs a grey grid, got {grid.kind.value}')
  if len(samples) < 2:
    raise FewerThanTwoSamples(f'need at least 2 calibration inserts, got {len(samples)}')

  greys = np.array([s.mean_in(grid) for s in samples])
  densities = np.array([s.known_density for s in samples])
  grey_mean = greys.mean()
  centered = greys - grey_mean
  sxx = float(centered @ centered)
  if sxx == 0.0:
    raise DegenerateFit('all calibration inserts have the same mean grey value')

  slope = float(centered @ (densities - densities.mean())) / sxx
  intercept = float(densities.mean() - slope * grey_mean)
  logger.debug('Calibration from %d inserts: slope=%g intercept=%g', len(samples), slope, intercept)
  return DensityCalibration(slope, intercept)


def apply_calibration(grid: VoxelGrid, cal: DensityCalibration) -> VoxelGrid:
  """Map grey values to density; negative densities are kept as they are."""
  if grid.kind != GridKind.GREY:
    raise WrongKind(f'apply_calibration needs a grey grid, got {grid.kind.value}')
  return grid.with_values(cal.slope * grid.values + cal.intercept, GridKind.DENSITY)


def _overlap_weights(n_in: int, step_in: float, step_out: float) -> np.ndarray:
  """Overlap lengths between output cells (rows) and input cells (columns).

  Only whole output cells are kept, so the output never extends past the input;
  a grid shorter than one output cell collapses to a single cell.
  """
  extent = n_in * step_in
  n_out = max(1, math.floor(extent / step_out + 1e-9))
  in_lo = np.arange(n_in) * step_in
  in_hi = in_lo + step_in
  out_lo = np.arange(n_out) * step_out
  out_hi = np.minimum(out_lo + step_out, extent)
  upper = np.minimum(out_hi[:, None], in_hi[None, :])
  lower = np.maximum(out_lo[:, None], in_lo[None, :])
  return np.clip(upper - lower, 0.0, None)


def downsample(grid: VoxelGrid, target_spacing: float | Sequence[float]) -> VoxelGrid:
  """Box-average resampling to a coarser spacing.

  Each output voxel is the volume-weighted mean of the input voxels it overlaps;
  the trailing remainder thinner than one output cell is cropped, so the
  volume-weighted mean over the covered extent is preserved.
  """
  if grid.kind == GridKind.MASK:
    raise WrongKind('masks cannot be box-averaged')
  if np.isscalar(target_spacing):
    target = (float(target_spacing),) * 3
  else:
    target = tuple(float(t) for t in target_spacing)
  for src, dst in zip(grid.spacing, target):
    if dst < src:
      raise UpsampleRequested(
        f'target spacing {list(target)} is finer than source {list(grid.spacing)}'
      )

  data = grid.array()
  new_spacing = []
  for axis, (src, dst) in enumerate(zip(grid.spacing, target)):
    if dst == src:
      new_spacing.append(src)
      continue
    weights = _overlap_weights(data.shape[axis], src, dst)
    weights = weights / weights.sum(axis=1, keepdims=True)
    data = np.moveaxis(np.tensordot(weights, data, axes=([1], [axis])), 0, axis)
    new_spacing.append(dst)

  logger.debug('Downsampled %s -> %s', grid.dims, data.shape)
  return VoxelGrid.from_array(data, new_spacing, grid.origin, grid.kind)


# vgrid file format: one UTF-8 JSON header line, newline, raw little-endian payload.


def write_vgrid(path: Path, grid: VoxelGrid) -> None:
  """Write a grid (any kind) in the vgrid format."""
  if grid.kind == GridKind.MASK:
    payload = grid.values.astype('u1').tobytes()
    scalar = 'uint8'
  else:
    payload = grid.values.astype('<f4').tobytes()
    scalar = 'float32le'
  header = {
    'format': 'vgrid',
    'version': 1,
    'dims': list(grid.dims),
    'spacing_mm': list(grid.spacing),
    'origin_mm': list(grid.origin),
    'kind': grid.kind.value,
    'scalar': scalar,
  }
  path = Path(path)
  with path.open('wb') as f:
    f.write(json.dumps(header, sort_keys=True).encode('utf-8'))
    f.write(b'\n')
    f.write(payload)


def read_vgrid(path: Path) -> VoxelGrid:
  """Read a grid written by :func:`write_vgrid`."""
  path = Path(path)
  if not path.is_file():
    raise InputNotFound(f'grid file not found: {path}', path=str(path))
  raw = path.read_bytes()
  newline = raw.find(b'\n')
  if newline < 0:
    raise InvalidGrid(f'{path}: missing vgrid header line')
  try:
    header = json.loads(raw[:newline].decode('utf-8'))
  except (UnicodeDecodeError, json.JSONDecodeError) as e:
    raise InvalidGrid(f'{path}: unreadable vgrid header ({e})') from e

  scalar = header.get('scalar')
  if scalar == 'float32le':
    dtype = np.dtype('<f4')
  elif scalar == 'uint8':
    dtype = np.dtype('u1')
  else:
    raise InvalidGrid(f'{path}: unsupported scalar type {scalar!r}')

  values = np.frombuffer(raw[newline + 1 :], dtype=dtype)
  kind = GridKind(header.get('kind', 'grey'))
  if kind == GridKind.MASK:
    return VoxelMask(
      tuple(header['dims']), tuple(header['spacing_mm']), tuple(header['origin_mm']), values
    )
  return VoxelGrid(
    tuple(header['dims']),
    tuple(header['spacing_mm']),
    tuple(header['origin_mm']),
    values,
    kind,
  )
