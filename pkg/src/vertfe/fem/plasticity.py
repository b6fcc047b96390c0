"""Displacement-controlled elasto-perfectly-plastic solve (von Mises, radial return)."""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from ..errors import ConfigError, NewtonDiverged, SingularSystem
from ..material import MaterialMap
from ..mesh import Mesh
from .assembly import check_materials, scatter_matrices, scatter_vectors
from .constraints import DofMode, LoadCase, build_reduction
from .elements import isotropic_elasticity, jacobians, quadrature, strain_displacement

logger = logging.getLogger(__name__)

NEWTON_RTOL = 1e-6
NEWTON_MAX_ITER = 30
MAX_CUTBACKS = 5
SECANT_MEMORY = 10

_SHEAR = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
_IDENTITY = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
# deviatoric projector acting on engineering-shear Voigt strain
_I_DEV = np.diag([1.0, 1.0, 1.0, 0.5, 0.5, 0.5]) - np.outer(_IDENTITY, _IDENTITY) / 3.0


class Tangent(str, Enum):
  CONSISTENT = 'consistent'
  ELASTIC = 'elastic'


@dataclass(frozen=True)
class PlasticState:
  """Committed integration-point state, Voigt arrays of shape ``(E, P, 6)``."""

  stress: np.ndarray
  plastic_strain: np.ndarray
  u: np.ndarray


@dataclass(frozen=True)
class ReactionCurve:
  """Overall compressive strain (ratio) against axial reaction (N), starting at the origin."""

  strain: np.ndarray
  reaction: np.ndarray
  iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
  final_state: PlasticState | None = None

  def __post_init__(self):
    strain = np.asarray(self.strain, dtype=np.float64)
    if strain.shape != np.shape(self.reaction):
      raise ConfigError('reaction curve needs one reaction per strain')
    if strain.size and np.any(np.diff(strain) <= 0.0):
      raise ConfigError('reaction curve strains must be strictly increasing')

  def points(self) -> list[tuple[float, float]]:
    return [(float(s), float(r)) for s, r in zip(self.strain, self.reaction)]

  def to_dict(self) -> dict:
    return {
      'strain': [float(s) for s in self.strain],
      'reaction_N': [float(r) for r in self.reaction],
    }


def von_mises_stress(stress: np.ndarray) -> np.ndarray:
  """Equivalent stress ``sqrt(3/2 s:s)`` of Voigt stresses."""
  pressure = stress[..., :3].mean(axis=-1, keepdims=True)
  dev = stress - pressure * _IDENTITY
  return np.sqrt(1.5 * np.sum(_SHEAR * dev**2, axis=-1))


def radial_return(
  strain: np.ndarray,
  plastic_strain: np.ndarray,
  young: np.ndarray,
  nu: np.ndarray,
  yield_stress: np.ndarray,
):
  """Return mapping for perfect von Mises plasticity.

  ``strain`` and ``plastic_strain`` are engineering-shear Voigt arrays of shape
  ``(E, P, 6)``; material arrays are per element. Returns ``(stress,
  plastic_strain, flow, theta, yielded)`` where ``flow`` is the unit
  deviatoric direction (tensor components) and ``theta = 1 - 2 mu dgamma /
  |s_trial|`` scales the deviatoric tangent.
  """
  d = isotropic_elasticity(young, nu)
  mu = (young / (2.0 * (1.0 + nu)))[:, None]
  trial = np.einsum('eij,epj->epi', d, strain - plastic_strain)
  pressure = trial[..., :3].mean(axis=-1, keepdims=True)
  dev = trial - pressure * _IDENTITY
  norm = np.sqrt(np.sum(_SHEAR * dev**2, axis=-1))
  radius = np.sqrt(2.0 / 3.0) * yield_stress[:, None]
  yielded = norm > radius

  flow = np.zeros_like(dev)
  np.divide(dev, norm[..., None], out=flow, where=norm[..., None] > 0.0)
  dgamma = np.where(yielded, (norm - radius) / (2.0 * mu), 0.0)
  stress = trial - (2.0 * mu * dgamma)[..., None] * flow
  plastic_strain = plastic_strain + (dgamma[..., None] * flow) * _SHEAR
  theta = np.ones_like(norm)
  np.subtract(1.0, 2.0 * mu * dgamma / np.where(norm > 0.0, norm, 1.0), out=theta, where=yielded)
  return stress, plastic_strain, flow, theta, yielded


def algorithmic_moduli(
  young: np.ndarray, nu: np.ndarray, flow: np.ndarray, theta: np.ndarray, yielded: np.ndarray
) -> np.ndarray:
  """Consistent tangent per integration point, shape ``(E, P, 6, 6)``."""
  bulk = young / (3.0 * (1.0 - 2.0 * nu))
  mu = young / (2.0 * (1.0 + nu))
  ones = np.outer(_IDENTITY, _IDENTITY)
  elastic = isotropic_elasticity(young, nu)
  c = np.broadcast_to(elastic[:, None], flow.shape[:2] + (6, 6)).copy()
  e, p = np.nonzero(yielded)
  if e.size:
    n = flow[e, p]
    c[e, p] = (
      bulk[e, None, None] * ones
      + 2.0 * (mu[e] * theta[e, p])[:, None, None] * (_I_DEV - np.einsum('ki,kj->kij', n, n))
    )
  return c


class _Kinematics:
  """Cached strain-displacement operators of a mesh."""

  def __init__(self, mesh: Mesh):
    points, weights = quadrature(mesh.kind)
    dndx, det = jacobians(mesh.kind, mesh.element_coords(), points)
    self.mesh = mesh
    self.b = strain_displacement(dndx)
    self.wdet = det * weights[None, :]

  def strain(self, u: np.ndarray) -> np.ndarray:
    ue = u.reshape(-1, 3)[self.mesh.elements].reshape(self.mesh.n_elements, -1)
    return np.einsum('epij,ej->epi', self.b, ue)

  def internal_force(self, stress: np.ndarray) -> np.ndarray:
    blocks = np.einsum('epia,epi,ep->ea', self.b, stress, self.wdet)
    return scatter_vectors(self.mesh, blocks)

  def stiffness(self, moduli: np.ndarray) -> sparse.csr_matrix:
    if moduli.ndim == 3:
      blocks = np.einsum('epia,eij,epjb,ep->eab', self.b, moduli, self.b, self.wdet, optimize=True)
    else:
      blocks = np.einsum('epia,epij,epjb,ep->eab', self.b, moduli, self.b, self.wdet, optimize=True)
    return scatter_matrices(self.mesh, 0.5 * (blocks + np.swapaxes(blocks, 1, 2)))


def _factorize(k_ff: sparse.spmatrix):
  try:
    return spla.splu(sparse.csc_matrix(k_ff))
  except RuntimeError as e:
    raise SingularSystem(f'tangent factorization failed: {e}') from e


@dataclass
class _Step:
  """Outcome of one converged sub-step."""

  q: np.ndarray
  u: np.ndarray
  stress: np.ndarray
  plastic_strain: np.ndarray
  reaction: float
  iterations: int
  yielded: int


class _Diverged(Exception):
  def __init__(self, residual: float):
    super().__init__(residual)
    self.residual = residual


class _SecantInverse:
  """Elastic factorization refined by limited-memory BFGS updates."""

  def __init__(self, lu, memory: int):
    self.lu = lu
    self.memory = memory
    self.pairs: list[tuple[np.ndarray, np.ndarray, float]] = []

  def update(self, s: np.ndarray, y: np.ndarray) -> None:
    sy = float(s @ y)
    if self.memory == 0 or sy <= 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(y)):
      return
    self.pairs.append((s, y, 1.0 / sy))
    if len(self.pairs) > self.memory:
      self.pairs.pop(0)

  def solve(self, r: np.ndarray) -> np.ndarray:
    q = r.copy()
    alphas = []
    for s, y, rho in reversed(self.pairs):
      a = rho * float(s @ q)
      q -= a * y
      alphas.append(a)
    z = self.lu.solve(q)
    for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
      z += s * (a - rho * float(y @ z))
    return z


def solve_plastic(
  mesh: Mesh,
  materials: MaterialMap,
  loadcase: LoadCase,
  n_increments: int,
  target_overall_strain: float,
  *,
  tangent: Tangent = Tangent.ELASTIC,
  rtol: float = NEWTON_RTOL,
  max_iter: int = NEWTON_MAX_ITER,
  max_cutbacks: int = MAX_CUTBACKS,
  secant_memory: int = SECANT_MEMORY,
) -> ReactionCurve:
  """Ramp the controlled master displacement to ``target_overall_strain`` of the height.

  Every imposed value of ``loadcase`` is scaled by ``n / n_increments`` at
  increment ``n``; the controlled DOF reaches ``-target * reference_length``.
  Each increment starts from an elastic predictor and is corrected by Newton
  iteration. The default elastic tangent is factorized once and reused by
  every increment, refined within an increment by up to ``secant_memory``
  BFGS updates; the consistent tangent is refactorized per iteration. An
  increment that fails to converge is halved, up to ``max_cutbacks`` times,
  before ``NewtonDiverged`` is raised.
  """
  tangent = Tangent(tangent)
  if n_increments < 1:
    raise ConfigError(f'n_increments must be at least 1, got {n_increments}')
  if target_overall_strain <= 0:
    raise ConfigError('target overall strain must be positive')
  if max_cutbacks < 0 or secant_memory < 0:
    raise ConfigError('max_cutbacks and secant_memory must be non-negative')
  if loadcase.control is None or loadcase.reference_length is None:
    raise ConfigError('plastic solve needs a displacement-controlled master DOF')
  coupling_id, local = loadcase.control
  if loadcase.couplings[coupling_id].dofs[local].mode is not DofMode.IMPOSED:
    raise ConfigError('controlled master DOF must be imposed')
  check_materials(mesh, materials)

  red = build_reduction(mesh, loadcase)
  control = int(red.master_coords[coupling_id, local])
  final_values = red.fixed_values.copy()
  final_values[red.fixed == control] = -target_overall_strain * loadcase.reference_length

  kin = _Kinematics(mesh)
  young, nu = materials.young, materials.nu
  elasticity = isotropic_elasticity(young, nu)
  sigma_y = materials.yield_stress()
  at = red.a.T.tocsr()
  kc = red.operator(kin.stiffness(elasticity))
  elastic_lu = _factorize(kc[red.free][:, red.free])

  def residual_of(stress):
    return at @ kin.internal_force(stress) - red.coord_force

  def substep(q, plastic_strain, fixed_values, label):
    # elastic predictor from the committed state
    c = red.coords(q, fixed_values)
    trial = np.einsum('eij,epj->epi', elasticity, kin.strain(red.a @ c) - plastic_strain)
    q = q - elastic_lu.solve(residual_of(trial)[red.free])
    residual = np.inf
    inverse = _SecantInverse(elastic_lu, secant_memory)
    previous = None
    for it in range(max_iter + 1):
      u = red.a @ red.coords(q, fixed_values)
      stress, plastic, flow, theta, yielded = radial_return(
        kin.strain(u), plastic_strain, young, nu, sigma_y
      )
      r_c = residual_of(stress)
      r_free = r_c[red.free]
      reference = max(
        float(np.linalg.norm(r_c[red.fixed])), float(np.linalg.norm(red.coord_force)), 1.0
      )
      residual = float(np.linalg.norm(r_free))
      logger.debug('%s iteration %d: residual %.3e (ref %.3e)', label, it, residual, reference)
      if not np.isfinite(residual):
        raise _Diverged(residual)
      if residual <= rtol * reference:
        return _Step(q, u, stress, plastic, -float(r_c[control]), it, int(yielded.sum()))
      if it == max_iter:
        raise _Diverged(residual)
      if tangent is Tangent.ELASTIC:
        if previous is not None:
          inverse.update(previous[0], r_free - previous[1])
        dq = inverse.solve(-r_free)
        previous = (dq, r_free)
      elif not yielded.any():
        dq = elastic_lu.solve(-r_free)
      else:
        moduli = algorithmic_moduli(young, nu, flow, theta, yielded)
        kt = red.operator(kin.stiffness(moduli))
        dq = _factorize(kt[red.free][:, red.free]).solve(-r_free)
      q = q + dq

  n_el, n_pt = kin.wdet.shape
  plastic_strain = np.zeros((n_el, n_pt, 6))
  stress = np.zeros((n_el, n_pt, 6))
  q = np.zeros(red.free.size)
  u = np.zeros(3 * mesh.n_nodes)

  strains, reactions, iterations = [0.0], [0.0], []
  for step in range(1, n_increments + 1):
    # load factors in units of 1 / (n_increments * 2**max_cutbacks)
    unit = 2**max_cutbacks
    done, goal = (step - 1) * unit, step * unit
    size, depth, total_iter = unit, 0, 0
    while done < goal:
      size = min(size, goal - done)
      fixed_values = final_values * ((done + size) / (n_increments * unit))
      label = f'increment {step} ({done + size}/{goal})'
      try:
        result = substep(q, plastic_strain, fixed_values, label)
      except _Diverged as e:
        if depth == max_cutbacks:
          raise NewtonDiverged(
            f'Newton did not converge in increment {step}',
            increment=step,
            residual=e.residual,
            cutbacks=depth,
          ) from None
        depth += 1
        size //= 2
        logger.warning('Increment %d did not converge; cutting back to 1/%d', step, 2**depth)
        continue
      q, u = result.q, result.u
      stress, plastic_strain = result.stress, result.plastic_strain
      total_iter += result.iterations
      done += size

    strain_n = target_overall_strain * step / n_increments
    if step == n_increments:
      strain_n = target_overall_strain
    strains.append(strain_n)
    reactions.append(result.reaction)
    iterations.append(total_iter)
    logger.info(
      'Increment %d/%d: strain %.4f, reaction %.1f N, %d iteration(s), %d yielded point(s)',
      step,
      n_increments,
      strain_n,
      result.reaction,
      total_iter,
      result.yielded,
    )

  return ReactionCurve(
    strain=np.asarray(strains),
    reaction=np.asarray(reactions),
    iterations=np.asarray(iterations, dtype=np.int64),
    final_state=PlasticState(stress=stress, plastic_strain=plastic_strain, u=u.reshape(-1, 3)),
  )
