"""Boundary conditions of the two vertebral models.

Ensam: base fixed, a force applied at the load point through a rigid coupling
to the top face, rotations free. Lyon: base fixed, the axial translation of
the coupled load point imposed, transverse translations held, rotations free.
With ``frictionless`` ends only the axial DOFs are constrained or coupled.
"""

import logging
from enum import Enum

import numpy as np

from ..errors import ConstraintConflict
from ..material import ModelVariant
from ..mesh import LoadPoint, Mesh, Orientation, anterior_third_point, bone_height, detect_endplates
from .constraints import DirichletBC, LoadCase, MasterDof, RigidCoupling

logger = logging.getLogger(__name__)

DEFAULT_REFERENCE_LOAD = 1000.0  # N


class EndCondition(str, Enum):
  BONDED = 'bonded'
  FRICTIONLESS = 'frictionless'


def end_node_sets(
  mesh: Mesh, orient: Orientation, band_fraction: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
  """Base and top node sets: PMMA faces when present, else the bone endplates."""
  sets = mesh.node_sets
  if 'pmma_bottom' in sets and 'pmma_top' in sets:
    return sets['pmma_bottom'], sets['pmma_top']
  if 'inferior' in sets and 'superior' in sets:
    return sets['inferior'], sets['superior']
  return detect_endplates(mesh, orient, band_fraction)


def transverse_pins(mesh: Mesh, orient: Orientation, base: np.ndarray) -> tuple[DirichletBC, ...]:
  """Minimal transverse supports removing in-plane rigid motion of a base.

  Node A (lowest transverse coordinates) is pinned in both transverse
  directions; node B, the farthest base node on A's line along the first
  transverse axis, is pinned across that line.
  """
  t1, t2 = [a for a in range(3) if a != orient.axial_axis]
  xyz = mesh.nodes[base]
  span = np.ptp(xyz, axis=0)
  tol = 1e-9 * max(float(span.max()), 1.0)
  a_idx = np.lexsort((xyz[:, t1], xyz[:, t2]))[0]
  node_a = base[a_idx]

  # prefer a line along t1, fall back to t2
  for along, across in ((t1, t2), (t2, t1)):
    on_line = np.abs(xyz[:, across] - xyz[a_idx, across]) <= tol
    reach = np.where(on_line, xyz[:, along] - xyz[a_idx, along], -np.inf)
    b_idx = int(np.argmax(reach))
    if reach[b_idx] > tol:
      return (
        DirichletBC(np.array([node_a]), (t1, t2)),
        DirichletBC(np.array([base[b_idx]]), (across,)),
      )
  raise ConstraintConflict('base face is too small to suppress in-plane rotation')


def _base_conditions(
  mesh: Mesh, orient: Orientation, base: np.ndarray, end_condition: EndCondition
) -> tuple[DirichletBC, ...]:
  if end_condition is EndCondition.BONDED:
    return (DirichletBC(base, (0, 1, 2)),)
  pins = transverse_pins(mesh, orient, base)
  return (DirichletBC(base, (orient.axial_axis,)),) + pins


def _master(
  mesh: Mesh, orient: Orientation, top: np.ndarray, load_point: LoadPoint
) -> np.ndarray:
  point = anterior_third_point(mesh, orient, load_point)
  point[orient.axial_axis] = mesh.nodes[top, orient.axial_axis].max()
  return point


def _coupling(
  point: np.ndarray,
  top: np.ndarray,
  orient: Orientation,
  axial: MasterDof,
  end_condition: EndCondition,
  transverse: MasterDof,
) -> RigidCoupling:
  ax = orient.axial_axis
  dofs = [transverse, transverse, transverse, MasterDof.free(), MasterDof.free(), MasterDof.free()]
  dofs[ax] = axial
  components = (0, 1, 2)
  if end_condition is EndCondition.FRICTIONLESS:
    # axial-only coupling: transverse translations and the axial spin carry no stiffness
    components = (ax,)
    for i in range(3):
      if i != ax:
        dofs[i] = MasterDof.imposed(0.0)
    dofs[3 + ax] = MasterDof.imposed(0.0)
  return RigidCoupling(point, top, tuple(dofs), components)


def ensam_loadcase(
  mesh: Mesh,
  orient: Orientation,
  *,
  reference_load: float = DEFAULT_REFERENCE_LOAD,
  end_condition: EndCondition = EndCondition.BONDED,
  load_point: LoadPoint = LoadPoint.ANTERIOR_THIRD,
  band_fraction: float = 0.05,
) -> LoadCase:
  """Compressive force ``reference_load`` (N) at the load point, rotations free."""
  end_condition = EndCondition(end_condition)
  base, top = end_node_sets(mesh, orient, band_fraction)
  point = _master(mesh, orient, top, LoadPoint(load_point))
  coupling = _coupling(
    point,
    top,
    orient,
    MasterDof.loaded(-reference_load),
    end_condition,
    MasterDof.free(),
  )
  logger.debug(
    'Ensam load case: %d base nodes, %d coupled nodes, master at %s',
    base.size,
    top.size,
    np.array2string(point, precision=3),
  )
  return LoadCase(
    dirichlet=_base_conditions(mesh, orient, base, end_condition),
    couplings=(coupling,),
    variant=ModelVariant.ENSAM.value,
    reference_length=bone_height(mesh, orient),
  )


def lyon_loadcase(
  mesh: Mesh,
  orient: Orientation,
  *,
  overall_strain: float,
  end_condition: EndCondition = EndCondition.BONDED,
  load_point: LoadPoint = LoadPoint.ANTERIOR_THIRD,
  band_fraction: float = 0.05,
) -> LoadCase:
  """Axial shortening of ``overall_strain`` times the bone height at the load point."""
  end_condition = EndCondition(end_condition)
  base, top = end_node_sets(mesh, orient, band_fraction)
  height = bone_height(mesh, orient)
  point = _master(mesh, orient, top, LoadPoint(load_point))
  coupling = _coupling(
    point,
    top,
    orient,
    MasterDof.imposed(-overall_strain * height),
    end_condition,
    MasterDof.imposed(0.0),
  )
  logger.debug(
    'Lyon load case: height %.3f mm, imposed %.4f mm', height, overall_strain * height
  )
  return LoadCase(
    dirichlet=_base_conditions(mesh, orient, base, end_condition),
    couplings=(coupling,),
    variant=ModelVariant.LYON.value,
    control=(0, orient.axial_axis),
    reference_length=height,
  )
