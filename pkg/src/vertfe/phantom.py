"""Synthetic calibrated specimens with known ground truth, and the shipped study table.

Phantom grey values encode density affinely (``grey = 1000 * density + 100``)
with optional seeded Gaussian noise. Calibration inserts sit in a strip at the
low-x side of the grid, separated from the body by an air margin.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputNotFound, InsertOverlapsBody, SchemaError
from .stats import StudyTable, read_study_table
from .voxel import DensityCalibration, GridKind, RoiSample, VoxelGrid, VoxelMask

logger = logging.getLogger(__name__)

GREY_PER_DENSITY = 1000.0
GREY_OFFSET = 100.0
TABLE1_SHA256 = 'd2e3204894811d9cac81ee82f2d5da365fbb97a2807b0a9737d15a777e3846c7'


class PhantomShape(str, Enum):
  COLUMN = 'column'
  ELLIPTIC_SHELL = 'elliptic_cylinder_with_shell'


@dataclass(frozen=True)
class PhantomSpec:
  """Geometry and densities (g/cm3) of a synthetic specimen; lengths in mm.

  The body axis is z. ``insert_positions`` optionally fixes the low index
  corner of each calibration insert; by default they are stacked along z in
  the reserved strip.
  """

  shape: PhantomShape = PhantomShape.COLUMN
  dims: tuple[float, float, float] = (10.0, 10.0, 20.0)
  spacing: float = 1.0
  margin: float = 4.0
  core_density: float = 0.3
  shell_density: float = 0.6
  shell_thickness: float = 1.0
  background_density: float = 0.0
  insert_densities: tuple[float, ...] = (0.0, 0.25, 0.5, 1.0)
  insert_size: float = 2.0
  insert_positions: tuple[tuple[int, int, int], ...] | None = None
  noise_sd: float = 0.0
  seed: int = 0

  def __post_init__(self):
    object.__setattr__(self, 'shape', PhantomShape(self.shape))
    object.__setattr__(self, 'dims', tuple(float(d) for d in self.dims))
    object.__setattr__(self, 'insert_densities', tuple(float(d) for d in self.insert_densities))
    if self.insert_positions is not None:
      positions = tuple(tuple(int(i) for i in p) for p in self.insert_positions)
      object.__setattr__(self, 'insert_positions', positions)
      if len(positions) != len(self.insert_densities):
        raise ConfigError('insert_positions needs one corner per insert density')
    if len(self.dims) != 3 or min(self.dims) <= 0:
      raise ConfigError(f'phantom dims must be three positive lengths, got {self.dims}')
    if self.spacing <= 0 or self.insert_size <= 0 or self.margin < 0:
      raise ConfigError('spacing and insert size must be positive, margin non-negative')
    densities = (
      self.core_density,
      self.shell_density,
      self.background_density,
    ) + self.insert_densities
    if min(densities) < 0:
      raise ConfigError('phantom densities must be >= 0')
    if self.noise_sd < 0:
      raise ConfigError('noise_sd must be >= 0')
    if self.shape is PhantomShape.ELLIPTIC_SHELL and not (
      0 < self.shell_thickness < min(self.dims[:2]) / 2
    ):
      raise ConfigError('shell thickness must be positive and smaller than the semi-axes')

  @classmethod
  def from_dict(cls, data: dict) -> 'PhantomSpec':
    known = {f for f in cls.__dataclass_fields__}
    unknown = sorted(set(data) - known)
    if unknown:
      raise ConfigError(f'unknown phantom field(s): {", ".join(unknown)}', fields=unknown)
    return cls(**data)

  def to_dict(self) -> dict:
    data = asdict(self)
    data['shape'] = self.shape.value
    data['dims'] = list(self.dims)
    data['insert_densities'] = list(self.insert_densities)
    if self.insert_positions is not None:
      data['insert_positions'] = [list(p) for p in self.insert_positions]
    return data


def load_phantom_spec(path: Path) -> PhantomSpec:
  path = Path(path)
  if not path.is_file():
    raise InputNotFound(f'phantom spec not found: {path}', path=str(path))
  try:
    return PhantomSpec.from_dict(json.loads(path.read_text(encoding='utf-8')))
  except json.JSONDecodeError as e:
    raise ConfigError(f'{path}: invalid JSON ({e})') from e


@dataclass(frozen=True)
class PhantomTruth:
  """What the generator put where: calibration, insert ROIs, body box and exact densities."""

  calibration: DensityCalibration
  rois: tuple[RoiSample, ...]
  body_lo: tuple[int, int, int]
  body_hi: tuple[int, int, int]
  body_mask: VoxelMask = field(repr=False)
  density: VoxelGrid = field(repr=False)
  spec: PhantomSpec = field(repr=False)

  def to_dict(self) -> dict:
    return {
      'calibration': {
        'slope': self.calibration.slope,
        'intercept': self.calibration.intercept,
      },
      'grey_encoding': {'per_density': GREY_PER_DENSITY, 'offset': GREY_OFFSET},
      'rois': [r.to_dict() for r in self.rois],
      'body': {
        'lo': list(self.body_lo),
        'hi': list(self.body_hi),
        'voxels': self.body_mask.count,
        'volume_mm3': self.body_mask.count * self.density.voxel_volume,
      },
      'spec': self.spec.to_dict(),
    }


def _n_vox(length: float, spacing: float) -> int:
  return max(1, math.ceil(length / spacing - 1e-9))


def _boxes_overlap(lo_a, hi_a, lo_b, hi_b) -> bool:
  return all(la < hb and lb < ha for la, ha, lb, hb in zip(lo_a, hi_a, lo_b, hi_b))


def _layout(spec: PhantomSpec):
  """Grid dims, body box and insert boxes in voxel indices."""
  body_n = tuple(_n_vox(d, spec.spacing) for d in spec.dims)
  margin = _n_vox(spec.margin, spec.spacing) if spec.margin > 0 else 0
  ins = _n_vox(spec.insert_size, spec.spacing)
  n_ins = len(spec.insert_densities)
  strip = 2 * ins if n_ins else 0

  body_lo = (strip + margin, margin, margin)
  body_hi = tuple(lo + n for lo, n in zip(body_lo, body_n))
  dims = [body_hi[0] + margin, body_hi[1] + margin, body_hi[2] + margin]
  if spec.insert_positions is None:
    corners = [(0, margin, k * (ins + 1)) for k in range(n_ins)]
    dims[2] = max(dims[2], n_ins * (ins + 1))
  else:
    corners = list(spec.insert_positions)
  boxes = [(c, tuple(i + ins for i in c)) for c in corners]
  for lo, hi in boxes:
    if min(lo) < 0:
      raise ConfigError(f'insert corner {list(lo)} lies outside the grid')
    if _boxes_overlap(lo, hi, body_lo, body_hi):
      raise InsertOverlapsBody(
        f'insert at {list(lo)} overlaps the body box {list(body_lo)}..{list(body_hi)}',
        insert=list(lo),
      )
    dims = [max(d, h) for d, h in zip(dims, hi)]
  return tuple(dims), body_lo, body_hi, boxes


def _body_density(spec: PhantomSpec, centers: np.ndarray, body_lo, body_hi) -> np.ndarray:
  """Density inside the body box (NaN outside the body), centers relative to the grid corner."""
  lo = np.asarray(body_lo) * spec.spacing
  hi = np.asarray(body_hi) * spec.spacing
  inside_box = np.all((centers >= lo) & (centers < hi), axis=-1)
  out = np.full(centers.shape[:-1], np.nan)
  if spec.shape is PhantomShape.COLUMN:
    out[inside_box] = spec.core_density
    return out

  mid = (lo + hi) / 2.0
  a, b = (hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0
  x = centers[..., 0] - mid[0]
  y = centers[..., 1] - mid[1]
  z = centers[..., 2]
  body = inside_box & ((x / a) ** 2 + (y / b) ** 2 <= 1.0)
  t = spec.shell_thickness
  core = (
    body
    & ((x / (a - t)) ** 2 + (y / (b - t)) ** 2 <= 1.0)
    & (z >= lo[2] + t)
    & (z < hi[2] - t)
  )
  out[body] = spec.shell_density
  out[core] = spec.core_density
  return out


def gen_phantom(spec: PhantomSpec) -> tuple[VoxelGrid, PhantomTruth]:
  """Grey grid of the specimen plus its ground truth."""
  dims, body_lo, body_hi, boxes = _layout(spec)
  spacing = (spec.spacing,) * 3
  origin = (0.0, 0.0, 0.0)
  shape_grid = VoxelGrid(dims, spacing, origin, np.zeros(int(np.prod(dims))), GridKind.DENSITY)
  centers = shape_grid.voxel_centers().reshape(dims[2], dims[1], dims[0], 3)
  body = np.transpose(_body_density(spec, centers, body_lo, body_hi), (2, 1, 0))

  density = np.full(dims, spec.background_density)
  inside = ~np.isnan(body)
  density[inside] = body[inside]
  rois = []
  for (lo, hi), value in zip(boxes, spec.insert_densities):
    density[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = value
    rois.append(RoiSample(tuple(lo), tuple(hi), value))

  grey = GREY_PER_DENSITY * density + GREY_OFFSET
  if spec.noise_sd > 0:
    rng = np.random.default_rng(spec.seed)
    grey = grey + rng.normal(0.0, spec.noise_sd, size=grey.shape)

  grid = VoxelGrid.from_array(grey, spacing, origin, GridKind.GREY)
  density_grid = VoxelGrid.from_array(density, spacing, origin, GridKind.DENSITY)
  mask = VoxelMask.like(density_grid, inside.ravel(order='F'))
  truth = PhantomTruth(
    calibration=DensityCalibration(1.0 / GREY_PER_DENSITY, -GREY_OFFSET / GREY_PER_DENSITY),
    rois=tuple(rois),
    body_lo=body_lo,
    body_hi=body_hi,
    body_mask=mask,
    density=density_grid,
    spec=spec,
  )
  logger.info(
    'Phantom %s: grid %s, %d body voxels, %d inserts, noise %.3g',
    spec.shape.value,
    list(dims),
    mask.count,
    len(rois),
    spec.noise_sd,
  )
  return grid, truth


def write_ground_truth(path: Path, truth: PhantomTruth) -> None:
  text = json.dumps(truth.to_dict(), indent=2, sort_keys=True)
  Path(path).write_text(text + '\n', encoding='utf-8')


def read_ground_truth_rois(path: Path) -> list[RoiSample]:
  """Calibration ROIs from a ground-truth record or a bare ``[{lo, hi, density}]`` list."""
  path = Path(path)
  if not path.is_file():
    raise InputNotFound(f'ROI file not found: {path}', path=str(path))
  try:
    data = json.loads(path.read_text(encoding='utf-8'))
  except json.JSONDecodeError as e:
    raise ConfigError(f'{path}: invalid JSON ({e})') from e
  items = data['rois'] if isinstance(data, dict) and 'rois' in data else data
  if not isinstance(items, list):
    raise ConfigError(f'{path}: expected a list of ROIs or a record with "rois"')
  try:
    return [RoiSample.from_dict(item) for item in items]
  except (KeyError, TypeError, ValueError) as e:
    raise ConfigError(f'{path}: ROI entries need lo, hi and density ({e})') from e


def table1_path():
  return resources.files('vertfe').joinpath('data', 'table1.csv')


def embedded_table1() -> StudyTable:
  """The shipped 28-specimen study table, verified against its checksum."""
  resource = table1_path()
  digest = hashlib.sha256(resource.read_bytes()).hexdigest()
  if digest != TABLE1_SHA256:
    raise SchemaError('shipped table1.csv does not match its checksum', sha256=digest)
  with resources.as_file(resource) as path:
    return read_study_table(path)
