"""Isoparametric Hex8 / Tet10 kinematics and element stiffness.

All routines are batched over elements: coordinates come in as ``(E, n, 3)``.
Strains use Voigt order ``[xx, yy, zz, xy, yz, xz]`` with engineering shear.
"""

from enum import Enum

import numpy as np

from ..errors import InvertedElement


class ElementKind(str, Enum):
  HEX8 = 'hex8'
  TET10 = 'tet10'

  @property
  def n_nodes(self) -> int:
    return 8 if self is ElementKind.HEX8 else 10


HEX8_CORNERS = np.array(
  [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
  ],
  dtype=np.int64,
)

# Local corner pairs for the six Tet10 midside nodes (local ids 4..9).
TET10_EDGES = np.array([[0, 1], [1, 2], [2, 0], [0, 3], [1, 3], [2, 3]], dtype=np.int64)

_GAUSS_2 = 1.0 / np.sqrt(3.0)
_TET_A = 0.5854101966249685
_TET_B = 0.1381966011250105


def quadrature(kind: ElementKind) -> tuple[np.ndarray, np.ndarray]:
  """Integration points (natural coords) and weights.

  Hex8 uses 2x2x2 Gauss on [-1, 1]^3; Tet10 the 4-point degree-2 rule on the
  unit tetrahedron.
  """
  if kind is ElementKind.HEX8:
    points = (2 * HEX8_CORNERS - 1) * _GAUSS_2
    return points.astype(np.float64), np.ones(8)
  points = np.array(
    [
      [_TET_B, _TET_B, _TET_B],
      [_TET_A, _TET_B, _TET_B],
      [_TET_B, _TET_A, _TET_B],
      [_TET_B, _TET_B, _TET_A],
    ]
  )
  return points, np.full(4, 1.0 / 24.0)


def centroid_point(kind: ElementKind) -> np.ndarray:
  if kind is ElementKind.HEX8:
    return np.zeros((1, 3))
  return np.full((1, 3), 0.25)


def shape_functions(kind: ElementKind, points: np.ndarray) -> np.ndarray:
  """Shape function values, shape ``(P, n)``."""
  points = np.atleast_2d(points)
  if kind is ElementKind.HEX8:
    signs = 2 * HEX8_CORNERS - 1
    return np.prod(1.0 + points[:, None, :] * signs[None, :, :], axis=2) / 8.0

  xi, eta, zeta = points.T
  bary = np.stack([1.0 - xi - eta - zeta, xi, eta, zeta], axis=1)
  corners = bary * (2.0 * bary - 1.0)
  mids = 4.0 * bary[:, TET10_EDGES[:, 0]] * bary[:, TET10_EDGES[:, 1]]
  return np.concatenate([corners, mids], axis=1)


def shape_gradients(kind: ElementKind, points: np.ndarray) -> np.ndarray:
  """Derivatives w.r.t. natural coordinates, shape ``(P, n, 3)``."""
  points = np.atleast_2d(points)
  if kind is ElementKind.HEX8:
    signs = (2 * HEX8_CORNERS - 1).astype(np.float64)
    factors = 1.0 + points[:, None, :] * signs[None, :, :]
    grads = np.empty((points.shape[0], 8, 3))
    for a in range(3):
      others = [b for b in range(3) if b != a]
      grads[:, :, a] = signs[None, :, a] * factors[:, :, others[0]] * factors[:, :, others[1]] / 8.0
    return grads

  xi, eta, zeta = points.T
  bary = np.stack([1.0 - xi - eta - zeta, xi, eta, zeta], axis=1)
  # d(bary)/d(natural): L0 -> -1 in every direction, L1..L3 -> unit vectors
  dbary = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
  grads = np.empty((points.shape[0], 10, 3))
  grads[:, :4, :] = (4.0 * bary - 1.0)[:, :, None] * dbary[None, :, :]
  a, b = TET10_EDGES[:, 0], TET10_EDGES[:, 1]
  grads[:, 4:, :] = 4.0 * (
    bary[:, b, None] * dbary[None, a, :] + bary[:, a, None] * dbary[None, b, :]
  )
  return grads


def jacobians(kind: ElementKind, coords: np.ndarray, points: np.ndarray):
  """Physical gradients and Jacobian determinants.

  Returns ``(dNdx, detJ)`` with shapes ``(E, P, n, 3)`` and ``(E, P)``.
  Raises InvertedElement when any determinant is not positive.
  """
  coords = np.asarray(coords, dtype=np.float64)
  dn = shape_gradients(kind, points)
  # J[e, p, a, b] = d x_b / d xi_a
  jac = np.einsum('pna,enb->epab', dn, coords)
  det = np.linalg.det(jac)
  if np.any(det <= 0.0):
    bad = np.unique(np.nonzero(det <= 0.0)[0])
    raise InvertedElement(
      f'{bad.size} element(s) with non-positive Jacobian', elements=bad[:20].tolist()
    )
  inv = np.linalg.inv(jac)
  dndx = np.einsum('epba,pna->epnb', inv, dn)
  return dndx, det


def strain_displacement(dndx: np.ndarray) -> np.ndarray:
  """Voigt B matrices, shape ``(E, P, 6, 3n)``."""
  n_el, n_pt, n_nodes, _ = dndx.shape
  b = np.zeros((n_el, n_pt, 6, 3 * n_nodes))
  dx, dy, dz = dndx[..., 0], dndx[..., 1], dndx[..., 2]
  b[..., 0, 0::3] = dx
  b[..., 1, 1::3] = dy
  b[..., 2, 2::3] = dz
  b[..., 3, 0::3] = dy
  b[..., 3, 1::3] = dx
  b[..., 4, 1::3] = dz
  b[..., 4, 2::3] = dy
  b[..., 5, 0::3] = dz
  b[..., 5, 2::3] = dx
  return b


def isotropic_elasticity(young: np.ndarray, nu: np.ndarray) -> np.ndarray:
  """Isotropic Voigt elasticity matrices, shape ``(E, 6, 6)``."""
  young = np.atleast_1d(np.asarray(young, dtype=np.float64))
  nu = np.broadcast_to(np.asarray(nu, dtype=np.float64), young.shape)
  lam = young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
  mu = young / (2.0 * (1.0 + nu))
  d = np.zeros(young.shape + (6, 6))
  d[:, :3, :3] = lam[:, None, None]
  for i in range(3):
    d[:, i, i] += 2.0 * mu
    d[:, i + 3, i + 3] = mu
  return d


def stiffness_matrices(
  kind: ElementKind, coords: np.ndarray, young: np.ndarray, nu: np.ndarray
) -> np.ndarray:
  """Element stiffness matrices, shape ``(E, 3n, 3n)``."""
  points, weights = quadrature(kind)
  dndx, det = jacobians(kind, coords, points)
  b = strain_displacement(dndx)
  d = isotropic_elasticity(young, nu)
  k = np.einsum('epia,eij,epjb,ep->eab', b, d, b, det * weights[None, :], optimize=True)
  return 0.5 * (k + np.swapaxes(k, 1, 2))


def element_stiffness(kind: ElementKind, coords: np.ndarray, young: float, nu: float) -> np.ndarray:
  """Stiffness of a single element with ``coords`` of shape ``(n, 3)``."""
  coords = np.asarray(coords, dtype=np.float64)[None, :, :]
  return stiffness_matrices(ElementKind(kind), coords, np.array([young]), np.array([nu]))[0]


def element_volumes(kind: ElementKind, coords: np.ndarray) -> np.ndarray:
  """Exact volumes of straight-sided elements (quadrature of det J)."""
  points, weights = quadrature(kind)
  _, det = jacobians(kind, coords, points)
  return det @ weights
