"""Linear static solve, strain recovery and reaction bookkeeping."""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import linalg as spla

from ..errors import ConfigError, NoConvergence, SingularSystem
from ..material import MaterialMap
from ..mesh import Mesh
from .assembly import assemble
from .constraints import LoadCase, Reduction, build_reduction
from .elements import centroid_point, jacobians, strain_displacement

logger = logging.getLogger(__name__)

CG_RTOL = 1e-10


class StrainMeasure(str, Enum):
  VON_MISES = 'von_mises'
  MIN_PRINCIPAL = 'min_principal'


class LinearMethod(str, Enum):
  CG = 'cg'
  DIRECT = 'direct'


@dataclass(frozen=True)
class LinearSolution:
  """Displacements (mm), centroid strains and boundary forces (N) of one solve.

  ``reaction`` sums the generalized forces at every fixed coordinate
  (Dirichlet DOFs and imposed master translations); ``applied`` sums the
  prescribed loads. ``master_motion`` and ``master_reaction`` hold the six
  master coordinates of each coupling.
  """

  u: np.ndarray
  element_strain: np.ndarray
  eq_strain: np.ndarray
  reaction: np.ndarray
  applied: np.ndarray
  master_motion: np.ndarray
  master_reaction: np.ndarray
  ndof: int
  iterations: int
  residual: float

  def max_eq_strain(self, which: np.ndarray | None = None) -> float:
    values = self.eq_strain if which is None else self.eq_strain[which]
    return float(values.max()) if values.size else 0.0


def pcg(
  a: sparse.spmatrix,
  b: np.ndarray,
  *,
  rtol: float = CG_RTOL,
  max_iter: int | None = None,
) -> tuple[np.ndarray, int, float]:
  """Jacobi-preconditioned conjugate gradients for SPD ``a``.

  Returns ``(x, iterations, relative residual)``. The iteration cap defaults
  to twenty times the system size.
  """
  n = b.shape[0]
  max_iter = 20 * n if max_iter is None else max_iter
  diag = a.diagonal()
  if np.any(diag <= 0.0):
    raise SingularSystem(
      f'{int(np.count_nonzero(diag <= 0.0))} reduced DOF(s) without stiffness',
      zero_pivots=int(np.count_nonzero(diag <= 0.0)),
    )
  inv_diag = 1.0 / diag
  x = np.zeros(n)
  b_norm = float(np.linalg.norm(b))
  if b_norm == 0.0:
    return x, 0, 0.0

  r = b.copy()
  z = inv_diag * r
  p = z.copy()
  rz = r @ z
  for it in range(1, max_iter + 1):
    ap = a @ p
    pap = p @ ap
    if pap <= 0.0:
      raise SingularSystem('conjugate gradients hit a non-positive curvature direction')
    alpha = rz / pap
    x += alpha * p
    r -= alpha * ap
    residual = float(np.linalg.norm(r)) / b_norm
    if residual <= rtol:
      return x, it, residual
    z = inv_diag * r
    rz_next = r @ z
    p = z + (rz_next / rz) * p
    rz = rz_next
  raise NoConvergence(
    f'CG did not reach {rtol:g} in {max_iter} iterations',
    iterations=max_iter,
    residual=residual,
  )


def direct_solve(a: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
  try:
    lu = spla.splu(sparse.csc_matrix(a))
  except RuntimeError as e:
    raise SingularSystem(f'sparse LU failed: {e}') from e
  x = lu.solve(b)
  if not np.all(np.isfinite(x)):
    raise SingularSystem('sparse LU produced non-finite values')
  return x


def centroid_strains(mesh: Mesh, u: np.ndarray) -> np.ndarray:
  """Symmetric small-strain tensors at element centroids, shape ``(E, 3, 3)``."""
  dndx, _ = jacobians(mesh.kind, mesh.element_coords(), centroid_point(mesh.kind))
  b = strain_displacement(dndx)[:, 0]
  ue = np.asarray(u).reshape(-1, 3)[mesh.elements].reshape(mesh.n_elements, -1)
  voigt = np.einsum('eij,ej->ei', b, ue)
  return voigt_to_tensor(voigt)


def voigt_to_tensor(voigt: np.ndarray) -> np.ndarray:
  """Engineering-shear Voigt ``[xx, yy, zz, xy, yz, xz]`` to tensors."""
  t = np.empty(voigt.shape[:-1] + (3, 3))
  t[..., 0, 0] = voigt[..., 0]
  t[..., 1, 1] = voigt[..., 1]
  t[..., 2, 2] = voigt[..., 2]
  t[..., 0, 1] = t[..., 1, 0] = 0.5 * voigt[..., 3]
  t[..., 1, 2] = t[..., 2, 1] = 0.5 * voigt[..., 4]
  t[..., 0, 2] = t[..., 2, 0] = 0.5 * voigt[..., 5]
  return t


def equivalent_strain(strain: np.ndarray, measure: StrainMeasure = StrainMeasure.VON_MISES):
  """Scalar strain per tensor.

  ``von_mises`` is ``sqrt(2/3 e:e)`` with ``e`` the deviatoric strain;
  ``min_principal`` is the magnitude of the smallest principal strain.
  """
  measure = StrainMeasure(measure)
  if measure is StrainMeasure.VON_MISES:
    trace = np.trace(strain, axis1=-2, axis2=-1)
    dev = strain - trace[..., None, None] / 3.0 * np.eye(3)
    return np.sqrt(2.0 / 3.0 * np.einsum('...ij,...ij->...', dev, dev))
  return np.abs(np.linalg.eigvalsh(strain)[..., 0])


def reduced_system(k: sparse.spmatrix, red: Reduction):
  """Free/free and free/fixed blocks of the reduced operator."""
  kc = red.operator(k)
  kf = kc[red.free]
  return kc, kf[:, red.free].tocsr(), kf[:, red.fixed].tocsr()


def boundary_forces(red: Reduction, kc: sparse.spmatrix, c: np.ndarray):
  """Generalized reactions at fixed coordinates and the force totals.

  Returns ``(generalized reaction vector, reaction totals, applied totals)``.
  """
  generalized = np.zeros(red.n_coords)
  generalized[red.fixed] = kc[red.fixed] @ c - red.coord_force[red.fixed]
  reaction = red.force_totals(generalized, red.fixed)
  applied = red.force_totals(red.coord_force, np.arange(red.n_coords))
  return generalized, reaction, applied


def solve_linear(
  mesh: Mesh,
  materials: MaterialMap,
  loadcase: LoadCase,
  *,
  measure: StrainMeasure = StrainMeasure.VON_MISES,
  method: LinearMethod = LinearMethod.CG,
  rtol: float = CG_RTOL,
) -> LinearSolution:
  """Assemble, eliminate constraints exactly, solve and recover strains."""
  method = LinearMethod(method)
  k = assemble(mesh, materials)
  red = build_reduction(mesh, loadcase)
  kc, k_ff, k_fc = reduced_system(k, red)
  rhs = red.coord_force[red.free] - k_fc @ red.fixed_values

  if method is LinearMethod.CG:
    q, iterations, _ = pcg(k_ff, rhs, rtol=rtol)
  elif method is LinearMethod.DIRECT:
    q, iterations = direct_solve(k_ff, rhs), 0
  else:
    raise ConfigError(f'unknown linear method {method}')
  rhs_norm = float(np.linalg.norm(rhs))
  residual = float(np.linalg.norm(k_ff @ q - rhs)) / rhs_norm if rhs_norm else 0.0

  c = red.coords(q)
  u = red.a @ c
  generalized, reaction, applied = boundary_forces(red, kc, c)
  strain = centroid_strains(mesh, u)
  eq = equivalent_strain(strain, measure)

  logger.info(
    'Linear solve: %d free dofs, %d iterations, residual %.2e, reaction %s N',
    red.free.size,
    iterations,
    residual,
    np.array2string(reaction, precision=3),
  )
  return LinearSolution(
    u=u.reshape(-1, 3),
    element_strain=strain,
    eq_strain=eq,
    reaction=reaction,
    applied=applied,
    master_motion=c[red.master_coords] if red.master_coords.size else np.zeros((0, 6)),
    master_reaction=(
      generalized[red.master_coords] if red.master_coords.size else np.zeros((0, 6))
    ),
    ndof=int(red.free.size),
    iterations=int(iterations),
    residual=residual,
  )


def write_displacement_csv(path: Path, solution: LinearSolution) -> None:
  u = np.asarray(solution.u)
  frame = pd.DataFrame({'ux': u[:, 0], 'uy': u[:, 1], 'uz': u[:, 2]})
  frame.to_csv(path, index_label='node_id')
