"""Section meshing, normalization, the cell problem, and Q1 assembly."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rodlimit.cross_section import (
    CellSolver,
    CrossSectionMesh,
    MeshFormatError,
    MeshGeometryError,
    Q1Form,
    WarpingField,
    assemble_q1,
    bending_moments,
    coords_from_skew,
    generate_disc,
    load_mesh,
    moment_map,
    normalize_section,
    q1_eval,
    skew_from_coords,
    solve_cell_problem,
    stress_field,
)
from rodlimit.material import isotropic_elasticity

UNIT_AREA_RADIUS = 1.0 / np.sqrt(np.pi)

L01 = isotropic_elasticity(0.0, 1.0)
L11 = isotropic_elasticity(1.0, 1.0)


@pytest.fixture(scope="module")
def disc5():
    mesh, _ = normalize_section(generate_disc(UNIT_AREA_RADIUS, 5))
    return mesh


@pytest.fixture(scope="module")
def disc3():
    mesh, _ = normalize_section(generate_disc(UNIT_AREA_RADIUS, 3))
    return mesh


def _l2_norm(mesh: CrossSectionMesh, nodal: np.ndarray) -> float:
    tri_vals = nodal[mesh.triangles]  # (tri, 3 nodes, 3 comps)
    return float(np.sqrt(np.einsum("t,tmk->", mesh.triangle_areas() / 3.0, tri_vals**2)))


# ---------------------------------------------------------------------------
# skew coordinates


@settings(max_examples=60, deadline=None)
@given(st.tuples(*(st.floats(min_value=-5.0, max_value=5.0) for _ in range(3))))
def test_skew_coords_roundtrip(a):
    a = np.array(a)
    A = skew_from_coords(a)
    assert np.allclose(A, -A.T, atol=0.0)
    assert np.array_equal(coords_from_skew(A), a)


def test_skew_coords_entry_convention():
    A = skew_from_coords([1.0, 2.0, 3.0])
    assert A[0, 1] == 1.0 and A[1, 0] == -1.0
    assert A[0, 2] == 2.0 and A[2, 0] == -2.0
    assert A[1, 2] == 3.0 and A[2, 1] == -3.0


# ---------------------------------------------------------------------------
# mesh file parsing


SQUARE_MESH = """\
# unit square, two triangles
nodes 4
0.0 0.0
1.0 0.0
1.0 1.0
0.0 1.0
triangles 2
0 1 2
0 2 3
"""


def _write(tmp_path, text, name="mesh.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_mesh_unit_square(tmp_path):
    mesh = load_mesh(_write(tmp_path, SQUARE_MESH))
    assert mesh.area == pytest.approx(1.0, abs=1e-14)
    centroid = mesh.first_moments / mesh.area
    assert np.allclose(centroid, [0.5, 0.5], atol=1e-14)
    assert mesh.second_moments == pytest.approx([1.0 / 3.0, 1.0 / 3.0], abs=1e-14)
    assert mesh.product_moment == pytest.approx(0.25, abs=1e-14)


def test_load_mesh_tolerates_comments_and_blank_lines(tmp_path):
    noisy = "\n# header comment\n" + SQUARE_MESH.replace("triangles 2", "\n# tri\ntriangles 2")
    mesh = load_mesh(_write(tmp_path, noisy))
    assert mesh.area == pytest.approx(1.0, abs=1e-14)


def test_load_mesh_disc_area(tmp_path, disc3):
    # write the generated disc out and read it back
    lines = [f"nodes {len(disc3.nodes)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in disc3.nodes]
    lines += [f"triangles {len(disc3.triangles)}"]
    lines += [f"{i} {j} {k}" for i, j, k in disc3.triangles]
    mesh = load_mesh(_write(tmp_path, "\n".join(lines) + "\n"))
    assert mesh.area == pytest.approx(disc3.area, rel=1e-15)
    assert np.allclose(mesh.nodes, disc3.nodes)


def test_load_mesh_repeated_index_is_degenerate(tmp_path):
    bad = SQUARE_MESH.replace("0 2 3", "0 2 2")
    with pytest.raises(MeshFormatError, match=r":9: repeated node index"):
        load_mesh(_write(tmp_path, bad))


def test_load_mesh_bad_header(tmp_path):
    with pytest.raises(MeshFormatError, match=r":1: expected 'nodes N'"):
        load_mesh(_write(tmp_path, "vertices 4\n"))


def test_load_mesh_bad_coordinate_reports_line(tmp_path):
    bad = SQUARE_MESH.replace("1.0 1.0", "1.0 one")
    with pytest.raises(MeshFormatError, match=r":5: bad coordinate"):
        load_mesh(_write(tmp_path, bad))


def test_load_mesh_truncated_file(tmp_path):
    truncated = "\n".join(SQUARE_MESH.splitlines()[:5])
    with pytest.raises(MeshFormatError, match="unexpected end of file"):
        load_mesh(_write(tmp_path, truncated))


def test_load_mesh_trailing_content(tmp_path):
    with pytest.raises(MeshFormatError, match="trailing content"):
        load_mesh(_write(tmp_path, SQUARE_MESH + "extra stuff\n"))


def test_load_mesh_index_out_of_range(tmp_path):
    bad = SQUARE_MESH.replace("0 2 3", "0 2 7")
    with pytest.raises(MeshGeometryError, match="out of range"):
        load_mesh(_write(tmp_path, bad))


# ---------------------------------------------------------------------------
# mesh geometry and topology


def test_mesh_reorients_negative_triangles():
    nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    mesh = CrossSectionMesh(nodes, [[0, 2, 1]])  # clockwise on input
    assert mesh.triangle_areas()[0] > 0.0


def test_mesh_rejects_degenerate_triangle():
    nodes = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]  # collinear
    with pytest.raises(MeshGeometryError, match="degenerate triangle"):
        CrossSectionMesh(nodes, [[0, 1, 2]])


def test_mesh_rejects_disconnected():
    nodes = [[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]]
    with pytest.raises(MeshGeometryError, match="disconnected"):
        CrossSectionMesh(nodes, [[0, 1, 2], [3, 4, 5]])


def test_mesh_rejects_nonmanifold_edge():
    nodes = [[0, 0], [1, 0], [0, 1], [1, 1], [-1, 1]]
    tris = [[0, 1, 2], [0, 1, 3], [0, 1, 4]]  # edge (0,1) shared three times
    with pytest.raises(MeshGeometryError, match="non-manifold"):
        CrossSectionMesh(nodes, tris)


def test_mesh_rejects_empty():
    with pytest.raises(MeshGeometryError, match="no triangles"):
        CrossSectionMesh(np.zeros((3, 2)), np.zeros((0, 3), dtype=int))


# ---------------------------------------------------------------------------
# disc generation


def test_disc_area_refinement5():
    mesh = generate_disc(UNIT_AREA_RADIUS, 5)
    assert abs(mesh.area - 1.0) <= 2e-3


def test_disc_second_moment_refinement6():
    mesh = generate_disc(UNIT_AREA_RADIUS, 6)
    target = 1.0 / (4.0 * np.pi)
    assert abs(mesh.second_moments[0] - target) <= 2e-3 * target


def test_disc_coarse_positively_oriented():
    mesh = generate_disc(1.0, 1)
    assert np.all(mesh.triangle_areas() > 0.0)


def test_disc_boundary_nodes_on_circle():
    radius = 0.73
    mesh = generate_disc(radius, 4)
    bnd = np.unique(mesh._boundary_edges)
    r = np.linalg.norm(mesh.nodes[bnd], axis=1)
    assert np.max(np.abs(r - radius)) <= 1e-12


def test_disc_node_count_growth():
    counts = [len(generate_disc(1.0, k).nodes) for k in (1, 2, 3, 4)]
    # midpoint subdivision: n_{k+1} = n_k + edges_k, roughly x4
    ratios = np.array(counts[1:]) / np.array(counts[:-1])
    assert np.all(ratios > 3.0) and np.all(ratios < 4.5)


def test_disc_rejects_bad_arguments():
    with pytest.raises(ValueError, match="radius"):
        generate_disc(0.0, 3)
    with pytest.raises(ValueError, match="refinement"):
        generate_disc(1.0, 0)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_fixes_unit_square():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = [[0, 1, 2], [0, 2, 3]]
    out, tform = normalize_section(CrossSectionMesh(nodes, tris))
    assert np.allclose(tform.shift, [-0.5, -0.5], atol=1e-14)
    assert tform.scale == pytest.approx(1.0, abs=1e-14)
    assert out.area == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(out.first_moments)) <= 1e-12
    assert abs(out.product_moment) <= 1e-12


def test_normalize_is_idempotent(disc3):
    again, tform = normalize_section(disc3)
    assert np.max(np.abs(tform.shift)) <= 1e-12
    assert tform.angle == pytest.approx(0.0, abs=1e-12)
    assert tform.scale == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(again.nodes - disc3.nodes)) <= 1e-12


def test_normalize_rotated_scaled_ellipse():
    base = generate_disc(1.0, 3)
    th = np.pi / 6.0
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    pts = (base.nodes * np.array([1.6, 0.7])) @ rot.T + np.array([0.3, -0.2])
    out, _ = normalize_section(CrossSectionMesh(pts, base.triangles))
    assert out.area == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(out.first_moments)) <= 1e-12
    assert abs(out.product_moment) <= 1e-12
    # principal axes: the long axis should land on a coordinate axis
    i2, i3 = out.second_moments
    assert abs(i2 - i3) > 1e-3  # genuinely anisotropic


def test_normalize_invariants_hold_for_disc(disc5):
    assert abs(disc5.area - 1.0) <= 1e-12
    assert np.max(np.abs(disc5.first_moments)) <= 1e-12
    assert abs(disc5.product_moment) <= 1e-12
    assert disc5.is_normalized()


# ---------------------------------------------------------------------------
# cell problem


def test_cell_zero_parameter_gives_zero_warping(disc3):
    f = solve_cell_problem(disc3, L11, (0.0, 0.0, 0.0))
    assert np.max(np.abs(f.values)) <= 1e-14


def test_cell_solver_requires_normalized_mesh():
    raw = generate_disc(1.0, 2)  # area pi, not normalized
    with pytest.raises(ValueError, match="normalized"):
        CellSolver(raw, L11)


def test_cell_bending_warping_closed_form(disc5):
    # alpha = -(1/8)(x2^2 - x3^2) e2 - (1/4) x2 x3 e3 for a = (1,0,0) at
    # lambda = mu = 1, coefficient lambda / (4 (lambda + mu)) = 1/8
    f = solve_cell_problem(disc5, L11, (1.0, 0.0, 0.0))
    x2, x3 = disc5.nodes[:, 0], disc5.nodes[:, 1]
    exact = np.zeros_like(f.values)
    exact[:, 1] = -(x2**2 - x3**2) / 8.0
    exact[:, 2] = -(2.0 * x2 * x3) / 8.0
    err = _l2_norm(disc5, f.values - exact)
    assert err <= 0.02 * _l2_norm(disc5, exact)


def test_cell_disc_has_no_torsional_warping(disc5):
    f = solve_cell_problem(disc5, L11, (0.0, 0.0, 1.0))
    bend = solve_cell_problem(disc5, L11, (1.0, 0.0, 0.0))
    assert _l2_norm(disc5, f.values) <= 1e-12 * _l2_norm(disc5, bend.values)


def test_cell_class_b_constraints(disc3):
    f = solve_cell_problem(disc3, L11, (0.4, -0.3, 0.9))
    assert f.class_b_defect() <= 1e-10 * disc3.diameter()
    assert f.constraint_residual <= 1e-10


def test_cell_weak_residual_small(disc3):
    f = solve_cell_problem(disc3, L11, (1.0, 0.0, 0.0))
    assert f.weak_residual <= 1e-10


def test_cell_solution_is_linear_in_parameter(disc3):
    a = np.array([0.7, -0.2, 0.4])
    b = np.array([-0.3, 0.5, 1.1])
    fa = solve_cell_problem(disc3, L11, a)
    fb = solve_cell_problem(disc3, L11, b)
    fab = solve_cell_problem(disc3, L11, a + b)
    scale = max(np.max(np.abs(fab.values)), 1e-30)
    assert np.max(np.abs(fab.values - fa.values - fb.values)) / scale <= 1e-10


def test_cell_minimality_against_class_b_perturbations(disc3):
    solver = CellSolver(disc3, L11)
    a = np.array([1.0, 0.5, -0.8])
    f = solver.solve(a)
    base = solver.energy_value(f)
    rng = np.random.default_rng(99)
    C = solver._C
    # project random nodal fields onto the constraint null space
    gram = (C @ C.T).toarray()
    for _ in range(20):
        d = rng.standard_normal(f.values.size)
        d -= C.T @ np.linalg.solve(gram, C @ d)
        for t in (1e-4, -1e-4):
            pert = WarpingField(
                values=f.values + t * d.reshape(-1, 3),
                a=a,
                mesh=disc3,
                weak_residual=np.nan,
                constraint_residual=np.nan,
            )
            assert solver.energy_value(pert) >= base - 1e-12


def test_cell_hat_function_divergence_residual(disc5):
    # discrete optimality: int (E e2 . d2 phi + E e3 . d3 phi) = 0 for all
    # P1 hat functions phi
    a = (0.0, 0.0, 1.0)
    f = solve_cell_problem(disc5, L11, a)
    E = stress_field(disc5, L11, a, f)
    areas = disc5.triangle_areas()
    grads = disc5.barycentric_gradients()
    resid = np.zeros((len(disc5.nodes), 3))
    contrib = np.einsum("t,tcd,tid->tic", areas, E[:, :, 1:], grads)
    np.add.at(resid, disc5.triangles.ravel(), contrib.reshape(-1, 3))
    scale = float(np.sqrt(np.einsum("t,tij->", areas, E**2)))
    assert np.max(np.abs(resid)) <= 1e-9 * scale


# ---------------------------------------------------------------------------
# Q1 assembly


def test_q1_torsion_anchor_refinement5(disc5):
    form = assemble_q1(disc5, L01)
    target = 1.0 / (2.0 * np.pi)
    assert abs(form.matrix[2, 2] - target) <= 0.01 * target


def test_q1_bending_anchor_lam0(disc5):
    # E int x2^2 with E = mu (3 lam + 2 mu) / (lam + mu) = 2 at (0, 1)
    form = assemble_q1(disc5, L01)
    target = 2.0 / (4.0 * np.pi)
    assert abs(form.matrix[0, 0] - target) <= 0.01 * target


def test_q1_bending_anchor_lam1(disc5):
    form = assemble_q1(disc5, L11)
    target = 2.5 / (4.0 * np.pi)  # 5 / (8 pi)
    assert abs(form.matrix[0, 0] - target) <= 0.01 * target


def test_q1_structure(disc5):
    form = assemble_q1(disc5, L11)
    m = form.matrix
    assert np.max(np.abs(m - m.T)) <= 1e-12
    assert form.smallest_eigenvalue > 0.0
    # disc isotropy: equal bending eigenvalues, no bending-torsion coupling
    assert abs(m[0, 0] - m[1, 1]) <= 1e-3 * m[0, 0]
    assert np.max(np.abs([m[0, 1], m[0, 2], m[1, 2]])) <= 1e-3 * m[0, 0]


def test_q1_weak_residuals_recorded(disc5):
    form = assemble_q1(disc5, L11)
    assert len(form.constraint_residuals) == 3
    assert max(form.constraint_residuals) <= 1e-10


def test_q1_refinement_monotone_from_above():
    diags = []
    for k in (2, 3, 4):
        mesh, _ = normalize_section(generate_disc(UNIT_AREA_RADIUS, k))
        diags.append(np.diag(assemble_q1(mesh, L11).matrix))
    d = np.array(diags)
    steps = np.diff(d, axis=0)
    assert np.all(steps < 1e-14)  # decreasing
    assert np.all(np.abs(steps[1]) < np.abs(steps[0]))  # Cauchy


def test_q1_frame_consistency(disc3):
    th = 0.35
    c, s = np.cos(th), np.sin(th)
    rot = np.array([[c, -s], [s, c]])
    rotated = CrossSectionMesh(disc3.nodes @ rot.T, disc3.triangles)
    q = assemble_q1(disc3, L11).matrix
    qr = assemble_q1(rotated, L11).matrix
    # bending block conjugates by the section rotation, torsion is fixed
    assert np.max(np.abs(qr[:2, :2] - rot @ q[:2, :2] @ rot.T)) <= 1e-3 * q[0, 0]
    assert abs(qr[2, 2] - q[2, 2]) <= 1e-3 * q[2, 2]


def test_q1_form_validates_shape():
    with pytest.raises(ValueError, match="3x3"):
        Q1Form(matrix=np.eye(2))


def test_q1_eval_basics(disc3):
    form = assemble_q1(disc3, L01)
    assert q1_eval(form, (0.0, 0.0, 0.0)) == 0.0
    a = np.array([0.3, -1.0, 0.7])
    assert q1_eval(form, a) == pytest.approx(q1_eval(form, -a), rel=1e-15)
    assert q1_eval(form, a) == pytest.approx(float(a @ form.matrix @ a), rel=1e-15)
    assert q1_eval(form, (0.0, 0.0, 1.0)) == pytest.approx(1.0 / (2.0 * np.pi), rel=0.01)


def test_q1_eval_consistent_with_cell_energy(disc3):
    # q1_eval must reproduce the cell energy at arbitrary parameters
    solver = CellSolver(disc3, L11)
    form = assemble_q1(disc3, L11)
    a = np.array([0.9, -0.4, 0.6])
    f = solver.solve(a)
    assert q1_eval(form, a) == pytest.approx(solver.energy_value(f), rel=1e-12)


# ---------------------------------------------------------------------------
# stress and moments


def test_stress_zero_parameter(disc3):
    f = solve_cell_problem(disc3, L11, (0.0, 0.0, 0.0))
    E = stress_field(disc3, L11, (0.0, 0.0, 0.0), f)
    assert np.max(np.abs(E)) <= 1e-14


def test_stress_field_rejects_foreign_mesh(disc3, disc5):
    f = solve_cell_problem(disc3, L11, (1.0, 0.0, 0.0))
    with pytest.raises(ValueError, match="does not belong"):
        stress_field(disc5, L11, (1.0, 0.0, 0.0), f)


def test_torsion_stress_pointwise(disc5):
    a = (0.0, 0.0, 1.0)
    f = solve_cell_problem(disc5, L01, a)
    E = stress_field(disc5, L01, a, f)
    cen = disc5.triangle_centroids()
    # E12 = mu x3, E13 = -mu x2, E11 = 0 for the disc (no warping)
    assert np.max(np.abs(E[:, 0, 1] - cen[:, 1])) <= 1e-10
    assert np.max(np.abs(E[:, 0, 2] + cen[:, 0])) <= 1e-10
    assert np.max(np.abs(E[:, 0, 0])) <= 1e-10


def test_bending_moments_zero_field(disc3):
    zeros = np.zeros((len(disc3.triangles), 3, 3))
    for M in bending_moments(zeros, disc3):
        assert np.max(np.abs(M)) == 0.0


def test_bending_moments_shape_check(disc3):
    with pytest.raises(ValueError, match="shape"):
        bending_moments(np.zeros((3, 3, 3)), disc3)


def test_torsion_moments(disc5):
    a = (0.0, 0.0, 1.0)
    f = solve_cell_problem(disc5, L11, a)
    E = stress_field(disc5, L11, a, f)
    ebar, etilde, ehat = bending_moments(E, disc5)
    target = 1.0 / (4.0 * np.pi)
    assert etilde[0, 2] == pytest.approx(-target, rel=1e-3)
    assert ehat[0, 1] == pytest.approx(target, rel=1e-3)
    # zeroth moment transverse columns vanish for cell-problem stress
    assert np.max(np.abs(ebar[:, 1:])) <= 1e-9


def test_bending_moment_first_entry(disc5):
    a = (1.0, 0.0, 0.0)
    f = solve_cell_problem(disc5, L11, a)
    E = stress_field(disc5, L11, a, f)
    _, etilde, _ = bending_moments(E, disc5)
    target = 2.5 / (4.0 * np.pi)  # Young's modulus at (1,1) times int x2^2
    assert etilde[0, 0] == pytest.approx(target, rel=1e-3)


def test_moment_map_matches_q1(disc5):
    # both encode the same linear map; they differ only by centroid-quadrature
    # error in the moment integrals
    q = assemble_q1(disc5, L11).matrix
    mm = moment_map(disc5, L11)
    assert np.max(np.abs(mm - q)) <= 1e-3 * np.max(np.abs(q))


def test_moment_map_cached(disc3):
    first = moment_map(disc3, L11)
    second = moment_map(disc3, L11)
    assert first is second
