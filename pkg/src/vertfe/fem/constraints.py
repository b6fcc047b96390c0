"""Load cases and exact constraint elimination by master-slave transformation.

Every node DOF that is not a slave of a rigid coupling becomes a coordinate of
its own; each coupling adds six master coordinates (three translations, three
small rotations). Slaves follow ``u_s = u_m + theta x (x_s - x_m)`` on their
coupled components. With ``u = A c`` the reduced operator is ``A^T K A``;
Dirichlet DOFs and imposed master DOFs are the fixed coordinates.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import sparse

from ..errors import ConstraintConflict, SingularSystem
from ..mesh import Mesh

logger = logging.getLogger(__name__)


class DofMode(str, Enum):
  FREE = 'free'
  IMPOSED = 'imposed'
  LOADED = 'loaded'


@dataclass(frozen=True)
class MasterDof:
  """State of one master DOF: free, imposed displacement/rotation, or loaded force/moment."""

  mode: DofMode = DofMode.FREE
  value: float = 0.0

  @classmethod
  def free(cls) -> 'MasterDof':
    return cls(DofMode.FREE)

  @classmethod
  def imposed(cls, value: float) -> 'MasterDof':
    return cls(DofMode.IMPOSED, float(value))

  @classmethod
  def loaded(cls, value: float) -> 'MasterDof':
    return cls(DofMode.LOADED, float(value))


@dataclass(frozen=True)
class RigidCoupling:
  """Rigid link from a master point to a set of slave nodes.

  ``components`` selects which translational components of the slaves are
  coupled; uncoupled components stay independent.
  """

  master_point: np.ndarray
  slaves: np.ndarray
  dofs: tuple[MasterDof, ...] = tuple(MasterDof() for _ in range(6))
  components: tuple[int, ...] = (0, 1, 2)

  def __post_init__(self):
    object.__setattr__(self, 'master_point', np.asarray(self.master_point, dtype=np.float64))
    object.__setattr__(self, 'slaves', np.unique(np.asarray(self.slaves, dtype=np.int64)))
    if self.slaves.size == 0:
      raise ConstraintConflict('rigid coupling needs at least one slave node')
    if len(self.dofs) != 6:
      raise ConstraintConflict('rigid coupling needs exactly six master DOF states')


@dataclass(frozen=True)
class DirichletBC:
  """Prescribed displacement (mm) on selected components of a node set."""

  nodes: np.ndarray
  components: tuple[int, ...] = (0, 1, 2)
  values: float | np.ndarray = 0.0

  def value_table(self) -> np.ndarray:
    nodes = np.asarray(self.nodes)
    return np.broadcast_to(
      np.asarray(self.values, dtype=np.float64), (nodes.size, len(self.components))
    )


@dataclass(frozen=True)
class LoadCase:
  """Boundary conditions of one analysis.

  ``control`` names the ``(coupling, local dof)`` pair driven in displacement
  control and ``reference_length`` the height (mm) its overall strain is
  measured against.
  """

  dirichlet: tuple[DirichletBC, ...] = ()
  couplings: tuple[RigidCoupling, ...] = ()
  nodal_forces: np.ndarray | None = None
  variant: str | None = None
  control: tuple[int, int] | None = None
  reference_length: float | None = None

  def scaled(self, factor: float) -> 'LoadCase':
    """Same constraints with every imposed value and load multiplied by ``factor``."""
    dirichlet = tuple(replace(bc, values=bc.value_table() * factor) for bc in self.dirichlet)
    couplings = tuple(
      replace(c, dofs=tuple(MasterDof(d.mode, d.value * factor) for d in c.dofs))
      for c in self.couplings
    )
    forces = None if self.nodal_forces is None else self.nodal_forces * factor
    return replace(self, dirichlet=dirichlet, couplings=couplings, nodal_forces=forces)


@dataclass
class Reduction:
  """Coordinate map ``u = A c`` with the free/fixed partition of ``c``."""

  a: sparse.csr_matrix
  free: np.ndarray
  fixed: np.ndarray
  fixed_values: np.ndarray
  coord_force: np.ndarray
  coord_component: np.ndarray
  master_coords: np.ndarray
  dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

  @property
  def n_coords(self) -> int:
    return self.a.shape[1]

  def coords(self, q: np.ndarray, fixed_values: np.ndarray | None = None) -> np.ndarray:
    c = np.zeros(self.n_coords)
    c[self.free] = q
    c[self.fixed] = self.fixed_values if fixed_values is None else fixed_values
    return c

  def expand(self, q: np.ndarray, fixed_values: np.ndarray | None = None) -> np.ndarray:
    """Full node DOF vector from the free coordinates."""
    return self.a @ self.coords(q, fixed_values)

  def operator(self, k: sparse.spmatrix) -> sparse.csr_matrix:
    at = self.a.T.tocsr()
    return (at @ k @ self.a).tocsr()

  def force_totals(self, generalized: np.ndarray, which: np.ndarray) -> np.ndarray:
    """Sum generalized forces of translational coordinates in ``which`` per axis."""
    total = np.zeros(3)
    comp = self.coord_component[which]
    keep = comp >= 0
    np.add.at(total, comp[keep], generalized[which][keep])
    return total


def _slave_rows(mesh: Mesh, coupling: RigidCoupling, master_base: int):
  """Sparse triplets for the slaves of one coupling."""
  rows, cols, vals = [], [], []
  r = mesh.nodes[coupling.slaves] - coupling.master_point
  # (theta x r)_i = sum_j cross[i][j] * theta_j
  cross = {
    0: ((4, r[:, 2]), (5, -r[:, 1])),
    1: ((5, r[:, 0]), (3, -r[:, 2])),
    2: ((3, r[:, 1]), (4, -r[:, 0])),
  }
  for comp in coupling.components:
    dof = 3 * coupling.slaves + comp
    rows.append(dof)
    cols.append(np.full(dof.size, master_base + comp))
    vals.append(np.ones(dof.size))
    for local, arm in cross[comp]:
      rows.append(dof)
      cols.append(np.full(dof.size, master_base + local))
      vals.append(arm)
  return rows, cols, vals


def build_reduction(mesh: Mesh, loadcase: LoadCase) -> Reduction:
  """Eliminate Dirichlet DOFs and rigid couplings; checks each constrained DOF appears once."""
  n_dof = 3 * mesh.n_nodes
  slaved = np.zeros(n_dof, dtype=bool)
  for coupling in loadcase.couplings:
    dofs = (3 * coupling.slaves[:, None] + np.asarray(coupling.components)[None, :]).ravel()
    if slaved[dofs].any():
      raise ConstraintConflict('a node DOF is slaved to more than one coupling')
    slaved[dofs] = True

  prescribed = np.full(n_dof, np.nan)
  for bc in loadcase.dirichlet:
    dofs = 3 * np.asarray(bc.nodes)[:, None] + np.asarray(bc.components)[None, :]
    dofs = dofs.ravel()
    if np.unique(dofs).size != dofs.size or not np.all(np.isnan(prescribed[dofs])):
      raise ConstraintConflict('a DOF is prescribed more than once')
    if slaved[dofs].any():
      raise ConstraintConflict('a DOF is both prescribed and slaved to a coupling')
    prescribed[dofs] = bc.value_table().ravel()

  independent = np.flatnonzero(~slaved)
  node_coord = np.full(n_dof, -1, dtype=np.int64)
  node_coord[independent] = np.arange(independent.size)
  n_coords = independent.size + 6 * len(loadcase.couplings)

  rows = [independent]
  cols = [np.arange(independent.size)]
  vals = [np.ones(independent.size)]
  coord_component = np.full(n_coords, -1, dtype=np.int64)
  coord_component[: independent.size] = independent % 3
  coord_force = np.zeros(n_coords)
  if loadcase.nodal_forces is not None:
    forces = np.asarray(loadcase.nodal_forces, dtype=np.float64).ravel()
    coord_force[: independent.size] = forces[independent]

  fixed = list(np.flatnonzero(~np.isnan(prescribed[independent])))
  fixed_values = list(prescribed[independent][fixed])
  master_coords = np.zeros((len(loadcase.couplings), 6), dtype=np.int64)

  for ci, coupling in enumerate(loadcase.couplings):
    base = independent.size + 6 * ci
    master_coords[ci] = base + np.arange(6)
    coord_component[base : base + 3] = np.arange(3)
    r, c, v = _slave_rows(mesh, coupling, base)
    rows += r
    cols += c
    vals += v
    for local, dof in enumerate(coupling.dofs):
      if dof.mode is DofMode.IMPOSED:
        fixed.append(base + local)
        fixed_values.append(dof.value)
      elif dof.mode is DofMode.LOADED:
        coord_force[base + local] += dof.value
    if loadcase.nodal_forces is not None:
      # loads on slaved DOFs act through the coupling
      forces = np.asarray(loadcase.nodal_forces, dtype=np.float64).ravel()
      extra = sparse.coo_matrix(
        (np.concatenate(v), (np.concatenate(r), np.concatenate(c) - base)), shape=(n_dof, 6)
      )
      coord_force[base : base + 6] += extra.T @ forces

  a = sparse.coo_matrix(
    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_dof, n_coords)
  ).tocsr()

  fixed = np.asarray(fixed, dtype=np.int64)
  fixed_values = np.asarray(fixed_values, dtype=np.float64)
  # coordinates no element DOF depends on carry no stiffness: pin them at zero
  col_nnz = np.diff(a.tocsc().indptr)
  dead = np.setdiff1d(np.flatnonzero(col_nnz == 0), fixed)
  if dead.size:
    if np.any(coord_force[dead] != 0.0):
      raise SingularSystem('a load acts on a master DOF that no slave depends on')
    logger.warning('Pinning %d coordinate(s) with no stiffness at zero', dead.size)
    fixed = np.concatenate([fixed, dead])
    fixed_values = np.concatenate([fixed_values, np.zeros(dead.size)])
  order = np.argsort(fixed, kind='stable')
  fixed, fixed_values = fixed[order], fixed_values[order]
  free = np.setdiff1d(np.arange(n_coords), fixed)

  n_constrained = fixed.size - dead.size
  if n_constrained < 6:
    raise SingularSystem(
      f'only {n_constrained} constrained DOFs; rigid-body motion is not suppressed',
      constrained=int(n_constrained),
    )
  logger.debug(
    'Reduction: %d node dofs -> %d coordinates (%d free, %d fixed)',
    n_dof,
    n_coords,
    free.size,
    fixed.size,
  )
  return Reduction(
    a=a,
    free=free,
    fixed=fixed,
    fixed_values=fixed_values,
    coord_force=coord_force,
    coord_component=coord_component,
    master_coords=master_coords,
    dropped=dead,
  )
