"""Global stiffness assembly and element-level scatter helpers."""

import logging

import numpy as np
from scipy import sparse

from ..errors import MissingMaterial
from ..material import MaterialMap
from ..mesh import Mesh
from .elements import stiffness_matrices

logger = logging.getLogger(__name__)


def element_dofs(mesh: Mesh) -> np.ndarray:
  """Global DOF numbers per element, shape ``(E, 3n)``; DOF = 3 * node + component."""
  return (3 * mesh.elements[:, :, None] + np.arange(3)[None, None, :]).reshape(
    mesh.n_elements, -1
  )


def scatter_matrices(mesh: Mesh, blocks: np.ndarray) -> sparse.csr_matrix:
  """Sum per-element ``(E, 3n, 3n)`` blocks into a global sparse matrix."""
  dofs = element_dofs(mesh)
  size = dofs.shape[1]
  rows = np.repeat(dofs, size, axis=1).ravel()
  cols = np.tile(dofs, (1, size)).ravel()
  n = 3 * mesh.n_nodes
  return sparse.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def scatter_vectors(mesh: Mesh, blocks: np.ndarray) -> np.ndarray:
  """Sum per-element ``(E, 3n)`` vectors into a global vector."""
  out = np.zeros(3 * mesh.n_nodes)
  np.add.at(out, element_dofs(mesh).ravel(), blocks.ravel())
  return out


def check_materials(mesh: Mesh, materials: MaterialMap) -> None:
  if len(materials) != mesh.n_elements:
    raise MissingMaterial(
      f'{len(materials)} materials for {mesh.n_elements} elements',
      materials=len(materials),
      elements=mesh.n_elements,
    )


def assemble(mesh: Mesh, materials: MaterialMap) -> sparse.csr_matrix:
  """Global symmetric stiffness of size ``3 * n_nodes``."""
  check_materials(mesh, materials)
  blocks = stiffness_matrices(mesh.kind, mesh.element_coords(), materials.young, materials.nu)
  k = scatter_matrices(mesh, blocks)
  logger.debug('Assembled K: %d dofs, %d nonzeros', k.shape[0], k.nnz)
  return k
