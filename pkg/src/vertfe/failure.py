"""Predicted failure loads from FE results.

Ensam: the load at which a face-connected region of ``V_crit`` mm3 of bone
first exceeds the critical strain, found from one linear solve by a sorted
union-find sweep. Lyon: the reaction of the plastic curve at the target
overall strain.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import CriterionUnreachable, SchemaError, TargetNotReached, ZeroStrainField
from .fem.plasticity import ReactionCurve
from .material import ModelVariant
from .mesh import Mesh, face_adjacency

logger = logging.getLogger(__name__)

CRITICAL_STRAIN = 0.015
CRITICAL_VOLUME = 1000.0  # mm3
TARGET_STRAIN = 0.019


@dataclass(frozen=True)
class FailureResult:
  failure_load: float
  criterion: ModelVariant
  detail: dict = field(default_factory=dict)

  def to_dict(self) -> dict:
    return {
      'failure_load_N': float(self.failure_load),
      'criterion': self.criterion.value,
      'detail': self.detail,
    }


class DisjointSet:
  """Union-find over element ids with per-root volume, path halving and union by size."""

  def __init__(self, volumes: np.ndarray):
    n = len(volumes)
    self.parent = np.arange(n)
    self.size = np.ones(n, dtype=np.int64)
    self.volume = np.asarray(volumes, dtype=np.float64).copy()

  def find(self, a: int) -> int:
    parent = self.parent
    while parent[a] != a:
      parent[a] = parent[parent[a]]
      a = parent[a]
    return int(a)

  def union(self, a: int, b: int) -> int:
    """Merge the sets of ``a`` and ``b``; returns the surviving root."""
    ra, rb = self.find(a), self.find(b)
    if ra == rb:
      return ra
    if self.size[ra] < self.size[rb]:
      ra, rb = rb, ra
    self.parent[rb] = ra
    self.size[ra] += self.size[rb]
    self.volume[ra] += self.volume[rb]
    return ra


def _neighbours(n: int, pairs: np.ndarray) -> list[np.ndarray]:
  pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
  both = np.concatenate([pairs, pairs[:, ::-1]])
  both = both[np.lexsort((both[:, 1], both[:, 0]))]
  splits = np.searchsorted(both[:, 0], np.arange(n + 1))
  return [both[splits[i] : splits[i + 1], 1] for i in range(n)]


def strain_sweep(
  strain: np.ndarray,
  volumes: np.ndarray,
  pairs: np.ndarray,
  critical_volume: float = CRITICAL_VOLUME,
  candidates: np.ndarray | None = None,
) -> tuple[int, float]:
  """Activate elements by decreasing strain until a connected volume reaches the limit.

  Ties in strain are broken by ascending element id. Only ``candidates``
  (default: all elements) take part. Returns ``(triggering element, component
  volume)``.
  """
  strain = np.asarray(strain, dtype=np.float64)
  volumes = np.asarray(volumes, dtype=np.float64)
  ids = np.arange(strain.size) if candidates is None else np.flatnonzero(candidates)
  if volumes[ids].sum() < critical_volume:
    raise CriterionUnreachable(
      f'bone volume {volumes[ids].sum():.1f} mm3 is below {critical_volume:g} mm3',
      volume_mm3=float(volumes[ids].sum()),
    )
  order = ids[np.lexsort((ids, -strain[ids]))]
  neighbours = _neighbours(strain.size, pairs)
  active = np.zeros(strain.size, dtype=bool)
  dsu = DisjointSet(volumes)
  for e in order:
    active[e] = True
    root = dsu.find(e)
    for other in neighbours[e]:
      if active[other]:
        root = dsu.union(root, other)
    if dsu.volume[root] >= critical_volume:
      return int(e), float(dsu.volume[root])
  raise CriterionUnreachable('no connected region reaches the critical volume')


def ensam_failure_load(
  mesh: Mesh,
  eq_strain: np.ndarray,
  reference_load: float,
  critical_strain: float = CRITICAL_STRAIN,
  critical_volume: float = CRITICAL_VOLUME,
) -> FailureResult:
  """Failure load: the scaled load at which ``critical_volume`` of connected bone yields.

  Strains are linear in the load, so the scale is ``critical_strain`` over the
  strain of the element that completes the region.
  """
  eq_strain = np.asarray(eq_strain, dtype=np.float64)
  bone = mesh.bone
  if not np.any(eq_strain[bone] > 0.0):
    raise ZeroStrainField('no bone element carries strain at the reference load')

  pairs = face_adjacency(mesh, bone)
  trigger, volume = strain_sweep(eq_strain, mesh.volumes(), pairs, critical_volume, bone)
  trigger_strain = float(eq_strain[trigger])
  if trigger_strain <= 0.0:
    raise CriterionUnreachable('the critical region only closes through unstrained elements')
  scale = critical_strain / trigger_strain
  load = scale * reference_load
  logger.info(
    'Ensam failure: element %d at strain %.3e closes %.1f mm3, scale %.4f, load %.1f N',
    trigger,
    trigger_strain,
    volume,
    scale,
    load,
  )
  return FailureResult(
    failure_load=float(load),
    criterion=ModelVariant.ENSAM,
    detail={
      'scale_factor': float(scale),
      'trigger_element': trigger,
      'trigger_strain': trigger_strain,
      'component_volume_mm3': volume,
      'reference_load_N': float(reference_load),
    },
  )


def lyon_failure_load(
  curve: ReactionCurve | Sequence[tuple[float, float]], target: float = TARGET_STRAIN
) -> FailureResult:
  """Reaction at ``target`` overall strain, linearly interpolated between increments."""
  if isinstance(curve, ReactionCurve):
    strain, reaction = np.asarray(curve.strain), np.asarray(curve.reaction)
  else:
    points = np.asarray(curve, dtype=np.float64).reshape(-1, 2)
    strain, reaction = points[:, 0], points[:, 1]
    if np.any(np.diff(strain) <= 0.0):
      raise SchemaError('curve strains must be strictly increasing')
  tol = 1e-12 * max(abs(target), 1.0)
  if strain.size == 0 or strain[-1] < target - tol:
    reached = float(strain[-1]) if strain.size else 0.0
    raise TargetNotReached(
      f'curve ends at strain {reached:g}, below the target {target:g}',
      reached=reached,
      target=target,
    )
  if strain[0] > target + tol:
    raise TargetNotReached(f'curve starts above the target {target:g}', target=target)

  hit = np.flatnonzero(np.abs(strain - target) <= tol)
  if hit.size:
    load = float(reaction[hit[0]])
    bracket = [float(strain[hit[0]]), float(strain[hit[0]])]
  else:
    hi = int(np.searchsorted(strain, target))
    lo = hi - 1
    w = (target - strain[lo]) / (strain[hi] - strain[lo])
    load = float(reaction[lo] + w * (reaction[hi] - reaction[lo]))
    bracket = [float(strain[lo]), float(strain[hi])]
  if load <= 0.0:
    raise CriterionUnreachable(f'reaction at the target strain is not compressive ({load:g} N)')
  logger.info('Lyon failure: %.1f N at strain %.4f', load, target)
  return FailureResult(
    failure_load=load,
    criterion=ModelVariant.LYON,
    detail={'target_strain': float(target), 'bracket_strain': bracket},
  )
