"""End-to-end failure-load prediction for one specimen grid."""

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import PipelineConfig
from .errors import WrongKind
from .failure import FailureResult, ensam_failure_load, lyon_failure_load
from .fem.elements import ElementKind
from .fem.loadcases import ensam_loadcase, lyon_loadcase
from .fem.plasticity import solve_plastic
from .fem.solver import solve_linear
from .material import ModelVariant, assign_materials
from .mesh import (
  Mesh,
  bone_height,
  detect_endplates,
  extrude_pmma,
  hex_mesh_from_mask,
  tet_mesh_from_mask,
)
from .segment import segment_body
from .voxel import (
  DensityCalibration,
  GridKind,
  RoiSample,
  VoxelGrid,
  apply_calibration,
  calibrate_from_phantom,
  downsample,
)

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
  """Outcome of one specimen run; ``to_dict`` is the JSON record."""

  model: ModelVariant
  specimen: str
  config_hash: str
  failure: FailureResult
  diagnostics: dict = field(default_factory=dict)
  mesh: Mesh | None = field(default=None, repr=False)

  def to_dict(self) -> dict:
    return {
      'model': self.model.value,
      'specimen': self.specimen,
      'config_hash': self.config_hash,
      'failure_load_N': float(self.failure.failure_load),
      'failure': self.failure.to_dict(),
      'diagnostics': self.diagnostics,
      'version': __version__,
    }

  def to_json(self) -> str:
    return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def prepare_density(
  grid: VoxelGrid, rois: Sequence[RoiSample] | None
) -> tuple[VoxelGrid, DensityCalibration | None]:
  """Density grid from a grey grid plus ROIs, or the density grid itself."""
  if grid.kind == GridKind.DENSITY:
    return grid, None
  if grid.kind == GridKind.GREY:
    if not rois:
      raise WrongKind('a grey input grid needs calibration ROIs')
    cal = calibrate_from_phantom(grid, rois)
    return apply_calibration(grid, cal), cal
  raise WrongKind(f'pipeline input must be grey or density, got {grid.kind.value}')


def model_density(
  grid: VoxelGrid, config: PipelineConfig, rois: Sequence[RoiSample] | None = None
) -> tuple[VoxelGrid, DensityCalibration | None]:
  """Calibrated density grid at the model resolution."""
  density, cal = prepare_density(grid, rois)
  if config.target_spacing is not None:
    # axes already coarser than the target keep their spacing
    target = tuple(max(config.target_spacing, s) for s in density.spacing)
    if any(t > config.target_spacing for t in target):
      logger.info(
        'Source spacing %s is coarser than %.3f mm; kept on those axes',
        list(density.spacing),
        config.target_spacing,
      )
    density = downsample(density, target)
  return density, cal


def build_mesh(density: VoxelGrid, config: PipelineConfig) -> Mesh:
  """Segment, mesh, tag endplates and add PMMA caps as configured."""
  mask = segment_body(density, config.threshold, config.connectivity, config.closing_radius)
  if ElementKind(config.element) is ElementKind.HEX8:
    mesh = hex_mesh_from_mask(density, mask)
  else:
    mesh = tet_mesh_from_mask(density, mask)
  orient = config.orientation()
  inferior, superior = detect_endplates(mesh, orient, config.band_fraction)
  mesh = mesh.with_node_sets(inferior=inferior, superior=superior)
  if config.pmma_thickness > 0:
    mesh = extrude_pmma(mesh, orient, config.pmma_thickness)
  return mesh


def run_pipeline(
  grid: VoxelGrid,
  config: PipelineConfig,
  *,
  rois: Sequence[RoiSample] | None = None,
  specimen: str = '',
) -> PipelineResult:
  """calibrate -> resample -> segment -> mesh -> materials -> solve -> failure."""
  logger.info(
    'Pipeline %s on %s (config %s)', config.model, specimen or 'grid', config.config_hash()[:12]
  )
  density, cal = model_density(grid, config, rois)

  mesh = build_mesh(density, config)
  orient = config.orientation()
  variant = config.variant
  materials = assign_materials(
    mesh,
    density,
    variant,
    floor=config.floor,
    bin_step=config.bin_step,
    yield_strain=config.yield_strain,
  )
  bone = mesh.bone
  diagnostics = {
    'grid_dims': list(density.dims),
    'spacing_mm': list(density.spacing),
    'elements': int(mesh.n_elements),
    'bone_elements': int(bone.sum()),
    'nodes': int(mesh.n_nodes),
    'bone_volume_mm3': float(mesh.volumes()[bone].sum()),
    'bone_height_mm': bone_height(mesh, orient),
    'mean_bone_modulus_MPa': float(materials.young[bone].mean()),
  }
  if cal is not None:
    diagnostics['calibration'] = {'slope': cal.slope, 'intercept': cal.intercept}

  if variant is ModelVariant.ENSAM:
    loadcase = ensam_loadcase(
      mesh,
      orient,
      reference_load=config.reference_load,
      end_condition=config.end_condition,
      load_point=config.load_point,
      band_fraction=config.band_fraction,
    )
    solution = solve_linear(
      mesh,
      materials,
      loadcase,
      measure=config.strain_measure,
      method=config.linear_method,
      rtol=config.cg_rtol,
    )
    failure = ensam_failure_load(
      mesh,
      solution.eq_strain,
      config.reference_load,
      config.critical_strain,
      config.critical_volume,
    )
    diagnostics.update(
      ndof=solution.ndof,
      iterations=solution.iterations,
      residual=solution.residual,
      reaction_N=[float(r) for r in solution.reaction],
      max_eq_strain=solution.max_eq_strain(bone),
      load_point_mm=[float(x) for x in loadcase.couplings[0].master_point],
    )
  else:
    loadcase = lyon_loadcase(
      mesh,
      orient,
      overall_strain=config.target_strain,
      end_condition=config.end_condition,
      load_point=config.load_point,
      band_fraction=config.band_fraction,
    )
    curve = solve_plastic(
      mesh,
      materials,
      loadcase,
      config.increments,
      config.target_strain,
      tangent=config.tangent,
      rtol=config.newton_rtol,
      max_iter=config.newton_max_iter,
      max_cutbacks=config.max_cutbacks,
    )
    failure = lyon_failure_load(curve, config.target_strain)
    diagnostics.update(
      newton_iterations=[int(i) for i in curve.iterations],
      curve=curve.to_dict(),
      load_point_mm=[float(x) for x in loadcase.couplings[0].master_point],
    )

  logger.info('Predicted failure load %.1f N (%s)', failure.failure_load, variant.value)
  return PipelineResult(
    model=variant,
    specimen=specimen,
    config_hash=config.config_hash(),
    failure=failure,
    diagnostics=diagnostics,
    mesh=mesh,
  )


def write_result(path: Path, result: PipelineResult) -> None:
  Path(path).write_text(result.to_json() + '\n', encoding='utf-8')
