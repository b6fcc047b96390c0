"""Voxel-derived Hex8 / Tet10 meshes, endplate detection, PMMA caps and load points."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyEndplate, EmptyMask, InvalidGrid, NotHexMesh
from .fem.elements import HEX8_CORNERS, TET10_EDGES, ElementKind, element_volumes
from .voxel import VoxelGrid, VoxelMask

logger = logging.getLogger(__name__)

_AXES = {'x': 0, 'y': 1, 'z': 2}


class ElementTag(IntEnum):
  BONE = 0
  PMMA = 1


class LoadPoint(str, Enum):
  ANTERIOR_THIRD = 'anterior_third'
  CENTROID = 'centroid'


@dataclass(frozen=True)
class Orientation:
  """Axial axis plus the signed antero-posterior direction (axis indices 0..2)."""

  axial_axis: int = 2
  anterior_axis: int = 1
  anterior_sign: int = 1

  def __post_init__(self):
    if self.axial_axis not in (0, 1, 2) or self.anterior_axis not in (0, 1, 2):
      raise ConfigError('orientation axes must be 0, 1 or 2')
    if self.axial_axis == self.anterior_axis:
      raise ConfigError('anterior direction must be perpendicular to the axial axis')
    if self.anterior_sign not in (-1, 1):
      raise ConfigError('anterior sign must be +1 or -1')

  @classmethod
  def parse(cls, axial: str, anterior: str) -> 'Orientation':
    """Build from strings such as ``('z', '+y')``."""
    anterior = anterior.strip().lower()
    sign = -1 if anterior.startswith('-') else 1
    try:
      return cls(_AXES[axial.strip().lower()], _AXES[anterior.lstrip('+-')], sign)
    except KeyError as e:
      raise ConfigError(f'unknown axis {e.args[0]!r}; use x, y or z') from e

  @property
  def lateral_axis(self) -> int:
    return 3 - self.axial_axis - self.anterior_axis


@dataclass(frozen=True)
class LatticeFrame:
  """Voxel lattice a mesh was built on."""

  origin: tuple[float, float, float]
  spacing: tuple[float, float, float]

  def index_of(self, points: np.ndarray) -> np.ndarray:
    return np.rint((points - np.asarray(self.origin)) / np.asarray(self.spacing)).astype(np.int64)


@dataclass(frozen=True)
class Mesh:
  """Nodes (mm), single-kind element connectivity, tags and named node sets."""

  nodes: np.ndarray
  elements: np.ndarray
  kind: ElementKind
  tags: np.ndarray
  source_voxel: np.ndarray
  node_sets: dict[str, np.ndarray] = field(default_factory=dict)
  lattice: LatticeFrame | None = None

  def __post_init__(self):
    if self.elements.ndim != 2 or self.elements.shape[1] != self.kind.n_nodes:
      raise InvalidGrid(f'{self.kind.value} connectivity must have {self.kind.n_nodes} columns')
    if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= len(self.nodes)):
      raise InvalidGrid('element connectivity refers to missing nodes')

  @property
  def n_nodes(self) -> int:
    return self.nodes.shape[0]

  @property
  def n_elements(self) -> int:
    return self.elements.shape[0]

  @property
  def bone(self) -> np.ndarray:
    return self.tags == ElementTag.BONE

  def element_coords(self, which: np.ndarray | None = None) -> np.ndarray:
    conn = self.elements if which is None else self.elements[which]
    return self.nodes[conn]

  def volumes(self) -> np.ndarray:
    return element_volumes(self.kind, self.element_coords())

  def with_node_sets(self, **sets: np.ndarray) -> 'Mesh':
    merged = {**self.node_sets, **{k: np.asarray(v, dtype=np.int64) for k, v in sets.items()}}
    return Mesh(
      self.nodes, self.elements, self.kind, self.tags, self.source_voxel, merged, self.lattice
    )

  def bone_node_ids(self) -> np.ndarray:
    return np.unique(self.elements[self.bone])


def _set_voxels(grid: VoxelGrid, mask: VoxelMask) -> np.ndarray:
  if not grid.same_geometry(mask):
    raise InvalidGrid('mask geometry differs from the density grid')
  voxels = np.flatnonzero(mask.bits)
  if voxels.size == 0:
    raise EmptyMask('cannot mesh an empty mask')
  return voxels


def _lattice_corners(grid: VoxelGrid, voxels: np.ndarray):
  """Hex8 corner lattice ids per voxel and the coordinates of the used lattice nodes."""
  ijk = np.stack(np.unravel_index(voxels, grid.dims, order='F'), axis=1)
  corners = ijk[:, None, :] + HEX8_CORNERS[None, :, :]
  ldims = np.asarray(grid.dims) + 1
  lattice_ids = corners[..., 0] + ldims[0] * (corners[..., 1] + ldims[1] * corners[..., 2])
  used, conn = np.unique(lattice_ids, return_inverse=True)
  conn = conn.reshape(lattice_ids.shape)
  index = np.stack(np.unravel_index(used, tuple(ldims), order='F'), axis=1)
  nodes = np.asarray(grid.origin) + index * np.asarray(grid.spacing)
  return conn, nodes


def hex_mesh_from_mask(grid: VoxelGrid, mask: VoxelMask) -> Mesh:
  """One Hex8 per set voxel, corner nodes shared between neighbours."""
  voxels = _set_voxels(grid, mask)
  conn, nodes = _lattice_corners(grid, voxels)
  logger.info('Hex mesh: %d elements, %d nodes', len(conn), len(nodes))
  return Mesh(
    nodes=nodes,
    elements=conn,
    kind=ElementKind.HEX8,
    tags=np.full(len(conn), ElementTag.BONE, dtype=np.int8),
    source_voxel=voxels.astype(np.int64),
    lattice=LatticeFrame(grid.origin, grid.spacing),
  )


def _kuhn_tets() -> np.ndarray:
  """Six positively oriented tets sharing the (0,0,0)-(1,1,1) diagonal, as hex local ids."""
  lookup = {tuple(c): n for n, c in enumerate(HEX8_CORNERS.tolist())}
  tets = []
  for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
    step = np.zeros(3, dtype=np.int64)
    path = [lookup[(0, 0, 0)]]
    for axis in perm[:2]:
      step[axis] = 1
      path.append(lookup[tuple(step)])
    path.append(lookup[(1, 1, 1)])
    vertices = HEX8_CORNERS[path]
    if np.linalg.det((vertices[1:] - vertices[0]).astype(float)) < 0:
      path[1], path[2] = path[2], path[1]
    tets.append(path)
  return np.array(tets, dtype=np.int64)


KUHN_TETS = _kuhn_tets()


def tet_mesh_from_mask(grid: VoxelGrid, mask: VoxelMask) -> Mesh:
  """Kuhn six-tet split of every set voxel, elevated to Tet10 with shared midside nodes."""
  voxels = _set_voxels(grid, mask)
  hex_conn, corner_nodes = _lattice_corners(grid, voxels)
  tets = hex_conn[:, KUHN_TETS].reshape(-1, 4)

  edges = np.sort(tets[:, TET10_EDGES], axis=2).reshape(-1, 2)
  unique_edges, edge_ids = np.unique(edges, axis=0, return_inverse=True)
  edge_ids = edge_ids.reshape(-1, 6) + len(corner_nodes)
  midpoints = 0.5 * (corner_nodes[unique_edges[:, 0]] + corner_nodes[unique_edges[:, 1]])

  conn = np.concatenate([tets, edge_ids], axis=1)
  nodes = np.concatenate([corner_nodes, midpoints], axis=0)
  logger.info('Tet10 mesh: %d elements, %d nodes', len(conn), len(nodes))
  return Mesh(
    nodes=nodes,
    elements=conn,
    kind=ElementKind.TET10,
    tags=np.full(len(conn), ElementTag.BONE, dtype=np.int8),
    source_voxel=np.repeat(voxels.astype(np.int64), len(KUHN_TETS)),
    lattice=LatticeFrame(grid.origin, grid.spacing),
  )


# Faces as local node lists; the first ``corners`` entries identify the face.
_HEX8_FACES = np.array(
  [[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4], [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]]
)
_TET10_FACES = np.array(
  [[0, 1, 2, 4, 5, 6], [0, 1, 3, 4, 8, 7], [1, 2, 3, 5, 9, 8], [0, 2, 3, 6, 9, 7]]
)


def _face_table(mesh: Mesh, which: np.ndarray | None = None):
  local = _HEX8_FACES if mesh.kind is ElementKind.HEX8 else _TET10_FACES
  corners = 4 if mesh.kind is ElementKind.HEX8 else 3
  owners = np.arange(mesh.n_elements) if which is None else np.flatnonzero(which)
  faces = mesh.elements[owners][:, local].reshape(-1, local.shape[1])
  keys = np.sort(faces[:, :corners], axis=1)
  _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
  inverse = inverse.reshape(-1)
  return faces, np.repeat(owners, len(local)), inverse, counts


def boundary_faces(mesh: Mesh, which: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
  """Faces used by exactly one element: ``(face node lists, owner element ids)``."""
  faces, owner, inverse, counts = _face_table(mesh, which)
  single = counts[inverse] == 1
  return faces[single], owner[single]


def face_adjacency(mesh: Mesh, which: np.ndarray | None = None) -> np.ndarray:
  """Element pairs sharing a complete face, shape ``(P, 2)``, lower id first."""
  _, owner, inverse, counts = _face_table(mesh, which)
  order = np.argsort(inverse, kind='stable')
  grouped = inverse[order]
  same = (grouped[:-1] == grouped[1:]) & (counts[grouped[:-1]] == 2)
  pairs = np.stack([owner[order[:-1]][same], owner[order[1:]][same]], axis=1)
  return np.sort(pairs, axis=1)


def detect_endplates(
  mesh: Mesh, orient: Orientation, band_fraction: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
  """Inferior and superior boundary-surface node sets of the bone.

  Nodes within ``band_fraction`` of the axial extent from the lowest (inferior)
  or highest (superior) bone coordinate.
  """
  if not 0.0 < band_fraction <= 0.2:
    raise EmptyEndplate(f'band_fraction must lie in (0, 0.2], got {band_fraction}')
  faces, _ = boundary_faces(mesh, mesh.bone)
  surface = np.unique(faces)
  if surface.size == 0:
    raise EmptyEndplate('mesh has no bone surface')

  axial = mesh.nodes[surface, orient.axial_axis]
  low, high = axial.min(), axial.max()
  band = band_fraction * (high - low)
  tol = 1e-9 * max(high - low, 1.0)
  inferior = surface[axial <= low + band + tol]
  superior = surface[axial >= high - band - tol]
  if inferior.size == 0 or superior.size == 0 or high - low <= 0:
    raise EmptyEndplate('endplate detection found an empty node set')
  logger.debug('Endplates: %d inferior, %d superior nodes', inferior.size, superior.size)
  return inferior, superior


def extrude_pmma(mesh: Mesh, orient: Orientation, thickness: float) -> Mesh:
  """Add flat PMMA caps of Hex8 elements below and above the bone.

  Every bone column is filled up to the common outer plane of the body, then
  ``ceil(thickness / spacing)`` further layers are added, so the outermost
  faces (node sets ``pmma_bottom`` and ``pmma_top``) are planar.
  """
  if mesh.kind is not ElementKind.HEX8 or mesh.lattice is None:
    raise NotHexMesh('PMMA extrusion needs a voxel-derived hex mesh')
  if thickness <= 0:
    raise ConfigError(f'PMMA thickness must be positive, got {thickness}')

  ax = orient.axial_axis
  t1, t2 = [a for a in range(3) if a != ax]
  n_layers = math.ceil(thickness / mesh.lattice.spacing[ax] - 1e-9)

  node_index = mesh.lattice.index_of(mesh.nodes)
  base = node_index[mesh.elements[mesh.bone, 0]]
  columns, column_of = np.unique(base[:, [t1, t2]], axis=0, return_inverse=True)
  column_of = column_of.reshape(-1)
  n_cols = len(columns)
  col_top = np.full(n_cols, np.iinfo(np.int64).min)
  col_bottom = np.full(n_cols, np.iinfo(np.int64).max)
  np.maximum.at(col_top, column_of, base[:, ax] + 1)
  np.minimum.at(col_bottom, column_of, base[:, ax])
  top_plane = int(col_top.max()) + n_layers
  bottom_plane = int(col_bottom.min()) - n_layers

  new_voxels = []
  for col, (a, b) in enumerate(columns):
    levels = np.concatenate(
      [np.arange(col_top[col], top_plane), np.arange(bottom_plane, col_bottom[col])]
    )
    voxel = np.zeros((levels.size, 3), dtype=np.int64)
    voxel[:, ax] = levels
    voxel[:, t1] = a
    voxel[:, t2] = b
    new_voxels.append(voxel)
  new_voxels = np.concatenate(new_voxels)

  corners = (new_voxels[:, None, :] + HEX8_CORNERS[None, :, :]).reshape(-1, 3)
  low = np.minimum(node_index.min(axis=0), corners.min(axis=0))
  span = np.maximum(node_index.max(axis=0), corners.max(axis=0)) - low + 1

  def encode(index):
    shifted = index - low
    return shifted[:, 0] + span[0] * (shifted[:, 1] + span[1] * shifted[:, 2])

  old_keys = encode(node_index)
  old_order = np.argsort(old_keys)
  corner_keys = encode(corners)
  fresh_keys, fresh_inverse = np.unique(corner_keys, return_inverse=True)
  fresh_inverse = fresh_inverse.reshape(-1)

  pos = np.clip(np.searchsorted(old_keys[old_order], fresh_keys), 0, len(old_keys) - 1)
  existing = old_keys[old_order][pos] == fresh_keys
  key_to_id = np.empty(len(fresh_keys), dtype=np.int64)
  key_to_id[existing] = old_order[pos[existing]]
  n_added = int(np.count_nonzero(~existing))
  key_to_id[~existing] = mesh.n_nodes + np.arange(n_added)

  fresh_index = corners[np.unique(fresh_inverse, return_index=True)[1]]
  added_coords = np.asarray(mesh.lattice.origin) + fresh_index[~existing] * np.asarray(
    mesh.lattice.spacing
  )
  pmma_conn = key_to_id[fresh_inverse].reshape(-1, 8)

  nodes = np.concatenate([mesh.nodes, added_coords])
  all_index = np.concatenate([node_index, fresh_index[~existing]])
  result = Mesh(
    nodes=nodes,
    elements=np.concatenate([mesh.elements, pmma_conn]),
    kind=ElementKind.HEX8,
    tags=np.concatenate([mesh.tags, np.full(len(pmma_conn), ElementTag.PMMA, dtype=np.int8)]),
    source_voxel=np.concatenate([mesh.source_voxel, np.full(len(pmma_conn), -1, dtype=np.int64)]),
    node_sets=dict(mesh.node_sets),
    lattice=mesh.lattice,
  )
  logger.info('PMMA caps: %d layers per side, %d elements', n_layers, len(pmma_conn))
  return result.with_node_sets(
    pmma_bottom=np.flatnonzero(all_index[:, ax] == bottom_plane),
    pmma_top=np.flatnonzero(all_index[:, ax] == top_plane),
  )


def bone_centroid(mesh: Mesh) -> np.ndarray:
  """Volume-weighted centroid of the bone elements."""
  bone = mesh.bone
  if not bone.any():
    raise EmptyMask('mesh has no bone elements')
  coords = mesh.element_coords(bone)
  volumes = element_volumes(mesh.kind, coords)
  centers = coords[:, : 8 if mesh.kind is ElementKind.HEX8 else 4].mean(axis=1)
  return volumes @ centers / volumes.sum()


def anterior_third_point(
  mesh: Mesh, orient: Orientation, rule: LoadPoint = LoadPoint.ANTERIOR_THIRD
) -> np.ndarray:
  """Load point on the superior bone face.

  Left-right coordinate is the bone centroid; the antero-posterior coordinate
  sits one third of the A-P extent behind the anterior margin (or at the
  centroid for ``LoadPoint.CENTROID``).
  """
  bone_nodes = mesh.nodes[mesh.bone_node_ids()]
  if bone_nodes.size == 0:
    raise EmptyMask('mesh has no bone elements')
  centroid = bone_centroid(mesh)
  point = centroid.copy()
  point[orient.axial_axis] = bone_nodes[:, orient.axial_axis].max()

  if LoadPoint(rule) is LoadPoint.ANTERIOR_THIRD:
    ap = bone_nodes[:, orient.anterior_axis]
    extent = ap.max() - ap.min()
    if orient.anterior_sign > 0:
      point[orient.anterior_axis] = ap.max() - extent / 3.0
    else:
      point[orient.anterior_axis] = ap.min() + extent / 3.0
  return point


def bone_height(mesh: Mesh, orient: Orientation) -> float:
  """Axial extent of the bone elements (PMMA excluded)."""
  axial = mesh.nodes[mesh.bone_node_ids(), orient.axial_axis]
  return float(axial.max() - axial.min())


def write_mesh(path: Path, mesh: Mesh) -> None:
  """ASCII export: counts header, node lines, element lines, node-set blocks."""
  lines = [
    '# vertfe mesh v1',
    f'counts nodes={mesh.n_nodes} elements={mesh.n_elements} node_sets={len(mesh.node_sets)}',
  ]
  for i, (x, y, z) in enumerate(mesh.nodes):
    lines.append(f'{i} {x:.17g} {y:.17g} {z:.17g}')
  for i, (conn, tag) in enumerate(zip(mesh.elements, mesh.tags)):
    ids = ' '.join(str(n) for n in conn)
    lines.append(f'{i} {mesh.kind.value} {ElementTag(int(tag)).name.lower()} {ids}')
  for name in sorted(mesh.node_sets):
    ids = mesh.node_sets[name]
    lines.append(f'node_set {name} {len(ids)}')
    lines.append(' '.join(str(n) for n in ids))
  Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
