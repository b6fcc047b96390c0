"""Density to elastic properties: BMD averaging, the linear modulus law, floor and binning."""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, MissingMaterial, NoVoxelInElement, WrongKind
from .mesh import ElementTag, Mesh
from .voxel import GridKind, VoxelGrid

logger = logging.getLogger(__name__)

MODULUS_SLOPE = 3230.0  # MPa per g/cm3
MODULUS_INTERCEPT = -34.7  # MPa
MODULUS_FLOOR = 100.0  # MPa
UNFLOORED_MINIMUM = 1.0  # MPa, keeps the system definite without the 100 MPa floor
PMMA_MODULUS = 2500.0
PMMA_POISSON = 0.3
YIELD_STRAIN = 0.007


class ModelVariant(str, Enum):
  ENSAM = 'ensam'
  LYON = 'lyon'

  @property
  def poisson(self) -> float:
    return 0.4 if self is ModelVariant.ENSAM else 0.3


@dataclass(frozen=True)
class MaterialMap:
  """Per-element modulus (MPa) and Poisson ratio."""

  young: np.ndarray
  nu: np.ndarray
  variant: ModelVariant
  bmd: np.ndarray
  young_raw: np.ndarray
  yield_strain: float | None = None
  plastic: np.ndarray | None = None

  def __post_init__(self):
    if np.any(~np.isfinite(self.young)) or np.any(self.young <= 0):
      raise MissingMaterial('every element needs a finite positive modulus')
    if np.any((self.nu <= 0) | (self.nu >= 0.5)):
      raise ConfigError('Poisson ratios must lie in (0, 0.5)')

  @classmethod
  def uniform(
    cls,
    n_elements: int,
    young: float,
    nu: float,
    variant: ModelVariant = ModelVariant.ENSAM,
    yield_strain: float | None = None,
  ) -> 'MaterialMap':
    """Homogeneous material, mostly for analytic fixtures."""
    e = np.full(n_elements, float(young))
    return cls(
      young=e,
      nu=np.full(n_elements, float(nu)),
      variant=ModelVariant(variant),
      bmd=np.full(n_elements, np.nan),
      young_raw=e.copy(),
      yield_strain=yield_strain,
    )

  def __len__(self) -> int:
    return self.young.shape[0]

  def yield_stress(self) -> np.ndarray:
    """Per-element von Mises yield stress; infinite where no yield strain applies."""
    sigma_y = np.full(self.young.shape, np.inf)
    if self.yield_strain is not None:
      plastic = np.ones(self.young.shape, bool) if self.plastic is None else self.plastic
      sigma_y[plastic] = self.young[plastic] * self.yield_strain
    return sigma_y


def element_bmd(mesh: Mesh, grid: VoxelGrid) -> np.ndarray:
  """Mean density of the voxels belonging to each bone element (NaN for PMMA).

  Voxel-derived elements take their source voxel's density; others average
  the voxels whose centers fall in the element's half-open bounding box.
  """
  if grid.kind != GridKind.DENSITY:
    raise WrongKind(f'element BMD needs a density grid, got {grid.kind.value}')
  bmd = np.full(mesh.n_elements, np.nan)
  bone = mesh.bone
  linked = bone & (mesh.source_voxel >= 0)
  bmd[linked] = grid.values[mesh.source_voxel[linked]]

  unlinked = np.flatnonzero(bone & (mesh.source_voxel < 0))
  if unlinked.size:
    data = grid.array()
    origin = np.asarray(grid.origin)
    spacing = np.asarray(grid.spacing)
    dims = np.asarray(grid.dims)
    for e in unlinked:
      coords = mesh.nodes[mesh.elements[e]]
      # voxel centers c = origin + (i + 0.5) * spacing inside [lo, hi)
      lo = np.ceil((coords.min(axis=0) - origin) / spacing - 0.5).astype(int)
      hi = np.ceil((coords.max(axis=0) - origin) / spacing - 0.5).astype(int)
      lo = np.clip(lo, 0, dims)
      hi = np.clip(hi, 0, dims)
      if np.any(hi <= lo):
        raise NoVoxelInElement(f'element {e} contains no voxel center', element=int(e))
      bmd[e] = data[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]].mean()
  return bmd


def bmd_to_modulus(bmd, floor: float = MODULUS_FLOOR):
  """E = max(3230 * BMD - 34.7, floor) in MPa."""
  raw = MODULUS_SLOPE * np.asarray(bmd, dtype=np.float64) + MODULUS_INTERCEPT
  result = np.maximum(raw, floor)
  return float(result) if np.ndim(result) == 0 else result


def bin_materials(young, step: float = 10.0, floor: float = MODULUS_FLOOR):
  """Snap moduli to the nearest multiple of ``step`` (ties up), then re-apply the floor."""
  if step <= 0:
    raise ConfigError(f'material bin step must be positive, got {step}')
  young = np.asarray(young, dtype=np.float64)
  binned = np.maximum(np.floor(young / step + 0.5) * step, floor)
  return float(binned) if np.ndim(binned) == 0 else binned


def assign_materials(
  mesh: Mesh,
  grid: VoxelGrid,
  variant: ModelVariant,
  *,
  floor: bool = True,
  bin_step: float | None = None,
  yield_strain: float = YIELD_STRAIN,
) -> MaterialMap:
  """Full material mapping for one model variant.

  Bone elements follow the modulus law (with the 100 MPa floor unless
  ``floor`` is off, in which case a 1 MPa positive minimum is kept); PMMA
  elements get E=2500 MPa, nu=0.3. Lyon carries a yield strain, Ensam does not.
  """
  variant = ModelVariant(variant)
  bmd = element_bmd(mesh, grid)
  minimum = MODULUS_FLOOR if floor else UNFLOORED_MINIMUM
  bone = mesh.bone

  young_raw = np.full(mesh.n_elements, PMMA_MODULUS)
  young_raw[bone] = MODULUS_SLOPE * bmd[bone] + MODULUS_INTERCEPT
  young = young_raw.copy()
  young[bone] = bmd_to_modulus(bmd[bone], floor=minimum)
  if bin_step is not None:
    young[bone] = bin_materials(young[bone], bin_step, floor=minimum)

  nu = np.where(mesh.tags == ElementTag.PMMA, PMMA_POISSON, variant.poisson)
  floored = int(np.count_nonzero(young_raw[bone] < minimum))
  logger.info(
    'Materials (%s): %d bone elements, %d floored, %d distinct moduli',
    variant.value,
    int(bone.sum()),
    floored,
    np.unique(young[bone]).size,
  )
  return MaterialMap(
    young=young,
    nu=nu,
    variant=variant,
    bmd=bmd,
    young_raw=young_raw,
    yield_strain=yield_strain if variant is ModelVariant.LYON else None,
    plastic=bone,
  )


def write_material_csv(path: Path, mesh: Mesh, materials: MaterialMap) -> None:
  """CSV dump: element_id, tag, bmd, E_raw, E_binned, nu."""
  frame = pd.DataFrame(
    {
      'tag': [ElementTag(int(t)).name.lower() for t in mesh.tags],
      'bmd': materials.bmd,
      'E_raw': materials.young_raw,
      'E_binned': materials.young,
      'nu': materials.nu,
    }
  )
  frame.to_csv(path, index_label='element_id')
