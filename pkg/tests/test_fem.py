"""Tests for element kinematics, assembly, constraints and the linear solver."""

import numpy as np
import pytest
from scipy import sparse

from vertfe.errors import (
  ConstraintConflict,
  InvertedElement,
  MissingMaterial,
  NoConvergence,
  SingularSystem,
)
from vertfe.fem.assembly import assemble
from vertfe.fem.constraints import (
  DirichletBC,
  LoadCase,
  MasterDof,
  RigidCoupling,
  build_reduction,
)
from vertfe.fem.elements import (
  HEX8_CORNERS,
  ElementKind,
  element_stiffness,
  element_volumes,
  quadrature,
  shape_functions,
)
from vertfe.fem.loadcases import EndCondition, ensam_loadcase, lyon_loadcase
from vertfe.fem.solver import (
  LinearMethod,
  StrainMeasure,
  direct_solve,
  equivalent_strain,
  pcg,
  solve_linear,
  write_displacement_csv,
)
from vertfe.material import MaterialMap
from vertfe.mesh import LoadPoint, boundary_faces, hex_mesh_from_mask, tet_mesh_from_mask
from vertfe.voxel import GridKind, VoxelGrid, VoxelMask

from .conftest import box_mask, column_mesh, density_grid

UNIT_TET10 = np.array(
  [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [0.5, 0, 0],
    [0.5, 0.5, 0],
    [0, 0.5, 0],
    [0, 0, 0.5],
    [0.5, 0, 0.5],
    [0, 0.5, 0.5],
  ]
)


def uniaxial(mesh, orient, load=1000.0, **kwargs):
  """Frictionless ends, axial load through the centroid."""
  return ensam_loadcase(
    mesh,
    orient,
    reference_load=load,
    end_condition=EndCondition.FRICTIONLESS,
    load_point=LoadPoint.CENTROID,
    **kwargs,
  )


class TestElements:
  @pytest.mark.parametrize(
    'kind, coords',
    [(ElementKind.HEX8, HEX8_CORNERS.astype(float)), (ElementKind.TET10, UNIT_TET10)],
  )
  def test_six_rigid_modes(self, kind, coords):
    k = element_stiffness(kind, coords, 1000.0, 0.3)
    np.testing.assert_allclose(k, k.T, atol=1e-12 * np.abs(k).max())
    eig = np.linalg.eigvalsh(k)
    assert np.sum(np.abs(eig) < 1e-9 * eig.max()) == 6
    assert np.all(eig[6:] > 0)

  def test_linear_in_young(self):
    coords = HEX8_CORNERS * np.array([1.0, 2.0, 0.5])
    k1 = element_stiffness(ElementKind.HEX8, coords, 700.0, 0.3)
    k2 = element_stiffness(ElementKind.HEX8, coords, 1400.0, 0.3)
    np.testing.assert_allclose(k2, 2 * k1, rtol=1e-14, atol=1e-12)

  @pytest.mark.parametrize('kind', list(ElementKind))
  def test_partition_of_unity(self, kind, rng):
    points = rng.random((5, 3)) * (0.3 if kind is ElementKind.TET10 else 1.0)
    np.testing.assert_allclose(shape_functions(kind, points).sum(axis=1), 1.0)

  def test_tet10_nodal_interpolation(self):
    """N_i is one at node i and zero at the others."""
    np.testing.assert_allclose(
      shape_functions(ElementKind.TET10, UNIT_TET10), np.eye(10), atol=1e-14
    )

  def test_quadrature_weights(self):
    assert quadrature(ElementKind.HEX8)[1].sum() == pytest.approx(8.0)
    assert quadrature(ElementKind.TET10)[1].sum() == pytest.approx(1.0 / 6.0)

  def test_volumes(self):
    hexes = (HEX8_CORNERS * np.array([2.0, 3.0, 0.5]))[None]
    assert element_volumes(ElementKind.HEX8, hexes)[0] == pytest.approx(3.0)
    assert element_volumes(ElementKind.TET10, UNIT_TET10[None])[0] == pytest.approx(1.0 / 6.0)

  def test_inverted_element(self):
    flipped = HEX8_CORNERS[[4, 5, 6, 7, 0, 1, 2, 3]].astype(float)
    with pytest.raises(InvertedElement):
      element_stiffness(ElementKind.HEX8, flipped, 1000.0, 0.3)


class TestAssembly:
  def test_single_element(self):
    mesh, _ = column_mesh(1, 1, 1)
    k = assemble(mesh, MaterialMap.uniform(1, 1000.0, 0.3)).toarray()
    kel = element_stiffness(ElementKind.HEX8, mesh.nodes[mesh.elements[0]], 1000.0, 0.3)
    dofs = (3 * mesh.elements[0][:, None] + np.arange(3)).ravel()
    np.testing.assert_allclose(k[np.ix_(dofs, dofs)], kel)

  def test_disjoint_elements_are_block_diagonal(self):
    grid = density_grid(np.ones((3, 1, 1)))
    bits = np.array([True, False, True])
    mesh = hex_mesh_from_mask(grid, VoxelMask.like(grid, bits))
    assert mesh.n_elements == 2
    k = assemble(mesh, MaterialMap.uniform(2, 1000.0, 0.3)).toarray()
    a = (3 * mesh.elements[0][:, None] + np.arange(3)).ravel()
    b = (3 * mesh.elements[1][:, None] + np.arange(3)).ravel()
    assert np.all(k[np.ix_(a, b)] == 0)

  @pytest.mark.parametrize('kind', list(ElementKind))
  def test_translation_in_kernel(self, kind):
    grid = density_grid(np.ones((3, 2, 2)))
    mask = box_mask(grid, (0, 0, 0), (3, 2, 2))
    if kind is ElementKind.HEX8:
      mesh, _ = column_mesh(3, 2, 2)
    else:
      mesh = tet_mesh_from_mask(grid, mask)
    k = assemble(mesh, MaterialMap.uniform(mesh.n_elements, 1000.0, 0.3))
    shift = np.tile([0.3, -1.2, 0.7], mesh.n_nodes)
    assert np.abs(k @ shift).max() < 1e-9 * abs(k).max()

  def test_material_count_checked(self):
    mesh, _ = column_mesh(2, 1, 1)
    with pytest.raises(MissingMaterial):
      assemble(mesh, MaterialMap.uniform(1, 1000.0, 0.3))


class TestConstraints:
  def test_double_prescription(self):
    mesh, _ = column_mesh(1, 1, 1)
    bc = DirichletBC(np.arange(4), (0, 1, 2))
    with pytest.raises(ConstraintConflict):
      build_reduction(mesh, LoadCase(dirichlet=(bc, bc)))

  def test_prescribed_and_slaved(self):
    mesh, _ = column_mesh(1, 1, 1)
    coupling = RigidCoupling(np.zeros(3), np.arange(4))
    with pytest.raises(ConstraintConflict):
      build_reduction(
        mesh, LoadCase(dirichlet=(DirichletBC(np.array([0]), (2,)),), couplings=(coupling,))
      )

  def test_rigid_motion_left_free(self):
    mesh, _ = column_mesh(1, 1, 1)
    with pytest.raises(SingularSystem):
      build_reduction(mesh, LoadCase(dirichlet=(DirichletBC(np.array([0]), (0, 1, 2)),)))

  def test_empty_coupling(self):
    with pytest.raises(ConstraintConflict):
      RigidCoupling(np.zeros(3), np.array([], dtype=int))

  def test_slaves_follow_master_exactly(self, cube_mesh, orient):
    """Bonded top: slave displacements equal u_m + theta x r to round-off."""
    lc = ensam_loadcase(cube_mesh, orient, reference_load=1000.0)
    sol = solve_linear(cube_mesh, MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.4), lc)
    coupling = lc.couplings[0]
    motion = sol.master_motion[0]
    r = cube_mesh.nodes[coupling.slaves] - coupling.master_point
    expected = motion[:3] + np.cross(motion[3:], r)
    np.testing.assert_allclose(sol.u[coupling.slaves], expected, atol=1e-12)

  def test_loads_scale_with_factor(self, cube_mesh, orient):
    lc = ensam_loadcase(cube_mesh, orient, reference_load=100.0).scaled(3.0)
    assert lc.couplings[0].dofs[2] == MasterDof.loaded(-300.0)


class TestLinearSolve:
  def test_uniaxial_column(self, cube_mesh, orient):
    """10 mm cube, E=1000, 1000 N: strain 0.01, tip displacement 0.1 mm."""
    materials = MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.3)
    sol = solve_linear(cube_mesh, materials, uniaxial(cube_mesh, orient))
    np.testing.assert_allclose(sol.element_strain[:, 2, 2], -0.01, rtol=1e-6)
    np.testing.assert_allclose(sol.element_strain[:, 0, 0], 0.003, rtol=1e-6)
    top = cube_mesh.nodes[:, 2] == 10.0
    np.testing.assert_allclose(sol.u[top, 2], -0.1, rtol=1e-6)
    assert sol.reaction[2] == pytest.approx(1000.0, rel=1e-6)

  def test_equilibrium(self, cube_mesh, orient):
    materials = MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.4)
    sol = solve_linear(cube_mesh, materials, ensam_loadcase(cube_mesh, orient))
    np.testing.assert_allclose(sol.reaction + sol.applied, 0.0, atol=1e-6 * 1000.0)
    assert sol.residual < 1e-6

  def test_patch_test(self, rng):
    """Affine boundary displacements give the same constant strain in every element."""
    grid = density_grid(np.ones((3, 3, 3)))
    mask = box_mask(grid, (0, 0, 0), (3, 3, 3))
    gradient = rng.normal(scale=1e-3, size=(3, 3))
    expected = 0.5 * (gradient + gradient.T)
    for mesh in (column_mesh(3, 3, 3)[0], tet_mesh_from_mask(grid, mask)):
      faces, _ = boundary_faces(mesh)
      surface = np.unique(faces)
      values = mesh.nodes[surface] @ gradient.T
      lc = LoadCase(dirichlet=(DirichletBC(surface, (0, 1, 2), values),))
      materials = MaterialMap.uniform(mesh.n_elements, 1000.0, 0.3)
      sol = solve_linear(mesh, materials, lc, method=LinearMethod.DIRECT)
      target = np.broadcast_to(expected, (mesh.n_elements, 3, 3))
      np.testing.assert_allclose(sol.element_strain, target, atol=1e-10)

  def test_direct_matches_cg(self, cube_mesh, orient):
    materials = MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.4)
    lc = ensam_loadcase(cube_mesh, orient)
    cg = solve_linear(cube_mesh, materials, lc)
    lu = solve_linear(cube_mesh, materials, lc, method=LinearMethod.DIRECT)
    np.testing.assert_allclose(cg.u, lu.u, rtol=1e-7, atol=1e-12)

  def test_doubling_the_load(self, cube_mesh, orient):
    materials = MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.4)
    half = ensam_loadcase(cube_mesh, orient, reference_load=500.0)
    full = ensam_loadcase(cube_mesh, orient, reference_load=1000.0)
    one = solve_linear(cube_mesh, materials, half)
    two = solve_linear(cube_mesh, materials, full)
    np.testing.assert_allclose(two.u, 2 * one.u, rtol=1e-12, atol=0)
    np.testing.assert_allclose(two.eq_strain, 2 * one.eq_strain, rtol=1e-12, atol=0)

  def test_imposed_axial_motion(self, cube_mesh, orient):
    """Lyon load case solved linearly: shortening of 1% of the height."""
    materials = MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.3)
    lc = lyon_loadcase(
      cube_mesh,
      orient,
      overall_strain=0.01,
      end_condition=EndCondition.FRICTIONLESS,
      load_point=LoadPoint.CENTROID,
    )
    sol = solve_linear(cube_mesh, materials, lc)
    assert sol.master_motion[0, 2] == pytest.approx(-0.1)
    assert sol.master_reaction[0, 2] == pytest.approx(-1000.0, rel=1e-6)

  def test_rigid_translation_of_the_grid(self, orient):
    """Moving the grid origin moves the load point and leaves the solution alone."""
    offset = np.array([12.5, -3.0, 40.0])
    meshes, cases = [], []
    for origin in (np.zeros(3), offset):
      grid = VoxelGrid.from_array(np.ones((3, 3, 6)), (1.0, 1.0, 1.0), origin, GridKind.DENSITY)
      mesh = hex_mesh_from_mask(grid, box_mask(grid, (0, 0, 0), (3, 3, 6)))
      meshes.append(mesh)
      cases.append(ensam_loadcase(mesh, orient))
    np.testing.assert_allclose(meshes[1].nodes, meshes[0].nodes + offset)
    np.testing.assert_allclose(
      cases[1].couplings[0].master_point, cases[0].couplings[0].master_point + offset
    )
    materials = MaterialMap.uniform(meshes[0].n_elements, 1000.0, 0.4)
    base, moved = (
      solve_linear(m, materials, lc, method=LinearMethod.DIRECT) for m, lc in zip(meshes, cases)
    )
    np.testing.assert_allclose(moved.u, base.u, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(moved.eq_strain, base.eq_strain, rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(moved.reaction, base.reaction, rtol=1e-8, atol=1e-8)


def test_displacement_csv(cube_mesh, orient, tmp_path):
  materials = MaterialMap.uniform(cube_mesh.n_elements, 1000.0, 0.3)
  sol = solve_linear(cube_mesh, materials, uniaxial(cube_mesh, orient))
  path = tmp_path / 'u.csv'
  write_displacement_csv(path, sol)
  lines = path.read_text().splitlines()
  assert lines[0] == 'node_id,ux,uy,uz'
  assert len(lines) == cube_mesh.n_nodes + 1
  top = int(np.flatnonzero(cube_mesh.nodes[:, 2] == 10.0)[0])
  assert float(lines[top + 1].split(',')[3]) == pytest.approx(-0.1, rel=1e-6)


class TestSolvers:
  def test_pcg_matches_dense(self, rng):
    m = rng.normal(size=(30, 30))
    a = sparse.csr_matrix(m @ m.T + 30 * np.eye(30))
    b = rng.normal(size=30)
    x, iterations, residual = pcg(a, b, rtol=1e-12)
    np.testing.assert_allclose(x, np.linalg.solve(a.toarray(), b), rtol=1e-9)
    assert 0 < iterations <= 30 * 20
    np.testing.assert_allclose(direct_solve(a, b), x, rtol=1e-9)

  def test_pcg_zero_rhs(self):
    x, iterations, _ = pcg(sparse.identity(4, format='csr'), np.zeros(4))
    assert iterations == 0
    assert not x.any()

  def test_pcg_iteration_cap(self, rng):
    m = rng.normal(size=(20, 20))
    a = sparse.csr_matrix(m @ m.T + np.eye(20))
    with pytest.raises(NoConvergence):
      pcg(a, rng.normal(size=20), rtol=1e-14, max_iter=1)

  def test_pcg_zero_diagonal(self):
    with pytest.raises(SingularSystem):
      pcg(sparse.csr_matrix(np.diag([1.0, 0.0])), np.ones(2))


class TestEquivalentStrain:
  def test_von_mises_uniaxial(self):
    strain = np.diag([-0.01, 0.004, 0.004])
    assert equivalent_strain(strain) == pytest.approx(2.0 / 3.0 * 0.014)

  def test_min_principal(self):
    strain = np.diag([0.003, -0.01, 0.003])
    assert equivalent_strain(strain, StrainMeasure.MIN_PRINCIPAL) == pytest.approx(0.01)

  def test_hydrostatic_has_no_von_mises_strain(self):
    assert equivalent_strain(0.02 * np.eye(3)) == pytest.approx(0.0, abs=1e-18)
