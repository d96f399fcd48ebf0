"""Cross-section meshing, the warping cell problem, and the 1D stiffness form.

The section S lives in the (x2, x3) plane.  Skew coordinates are ordered
a = (A12, A13, A23) throughout, with A the skew matrix having those upper
entries.  The cell problem minimizes

    F_A(alpha) = integral_S Q_3( x2 A e2 + x3 A e3 | d2 alpha | d3 alpha )

over piecewise-linear vector fields alpha in class B (zero mean, zero mean
partial derivatives), enforced through 9 scalar Lagrange multipliers in one
symmetric indefinite sparse solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import ElasticityTensor

_DEGENERATE_AREA = 1e-14
# How exactly a mesh must satisfy the unit-area, centered normalization
# before the cell problem accepts it.
_NORMALIZED_SLACK = 1e-6


class MeshFormatError(ValueError):
    """Mesh file violates the plain-text format."""


class MeshGeometryError(ValueError):
    """Mesh is geometrically unusable (degenerate, disconnected, open boundary)."""


class CellSolveError(RuntimeError):
    """The constrained cell system could not be solved."""


def skew_from_coords(a: np.ndarray) -> np.ndarray:
    """Skew matrix with (1,2),(1,3),(2,3) entries a = (A12, A13, A23)."""
    a = np.asarray(a, dtype=float)
    A = np.zeros(a.shape[:-1] + (3, 3))
    A[..., 0, 1] = a[..., 0]
    A[..., 1, 0] = -a[..., 0]
    A[..., 0, 2] = a[..., 1]
    A[..., 2, 0] = -a[..., 1]
    A[..., 1, 2] = a[..., 2]
    A[..., 2, 1] = -a[..., 2]
    return A


def coords_from_skew(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.stack([A[..., 0, 1], A[..., 0, 2], A[..., 1, 2]], axis=-1)


# ---------------------------------------------------------------------------
# mesh type


@dataclass
class CrossSectionMesh:
    """Triangulated planar section with exact polygon moments.

    Triangles are reoriented positively at construction.  Moments are exact
    for the polygonal geometry (midpoint rule on each triangle, degree 2).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    area: float = field(init=False)
    first_moments: np.ndarray = field(init=False)
    product_moment: float = field(init=False)
    second_moments: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self._cache: dict = {}
        n = len(self.nodes)
        if len(self.triangles) == 0:
            raise MeshGeometryError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise MeshGeometryError("triangle index out of range")
        signed = self._signed_areas()
        if np.any(np.abs(signed) < _DEGENERATE_AREA):
            t = int(np.argmin(np.abs(signed)))
            raise MeshGeometryError(
                f"degenerate triangle {t} (area {abs(signed[t]):.3e} < {_DEGENERATE_AREA:g})"
            )
        flip = signed < 0.0
        if np.any(flip):
            tri = self.triangles.copy()
            tri[flip, 1], tri[flip, 2] = self.triangles[flip, 2], self.triangles[flip, 1]
            self.triangles = tri
        self._check_topology()
        self._compute_moments()

    def _signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def _check_topology(self) -> None:
        tri = self.triangles
        edges = np.sort(
            np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1
        )
        uniq, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshGeometryError("non-manifold edge (shared by more than two triangles)")
        # connectivity: union-find over triangles joined by interior edges
        m = len(tri)
        parent = np.arange(m)

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        owner = np.full(len(uniq), -1, dtype=np.int64)
        tri_of_edge = np.tile(np.arange(m), 3)  # edges stacked [01 | 12 | 20]
        for e, t in zip(inverse, tri_of_edge):
            if owner[e] < 0:
                owner[e] = t
            else:
                ra, rb = find(int(owner[e])), find(int(t))
                if ra != rb:
                    parent[ra] = rb
        roots = {find(i) for i in range(m)}
        if len(roots) > 1:
            raise MeshGeometryError(f"mesh is disconnected ({len(roots)} components)")
        # closed boundary: every boundary vertex must touch exactly two
        # boundary edges
        bnd = uniq[counts == 1]
        if len(bnd):
            deg: dict[int, int] = {}
            for i, j in bnd:
                deg[int(i)] = deg.get(int(i), 0) + 1
                deg[int(j)] = deg.get(int(j), 0) + 1
            if any(v != 2 for v in deg.values()):
                raise MeshGeometryError("boundary is not a closed loop")
        self._boundary_edges = bnd

    def _compute_moments(self) -> None:
        p = self.nodes[self.triangles]
        areas = self._signed_areas()  # positive now
        mids = 0.5 * (p + np.roll(p, -1, axis=1))  # edge midpoints, exact deg-2 rule
        w = areas[:, None] / 3.0
        self.area = float(np.sum(areas))
        self.first_moments = np.einsum("tm,tmk->k", w, mids)
        self.product_moment = float(np.einsum("tm,tm->", w, mids[:, :, 0] * mids[:, :, 1]))
        self.second_moments = np.einsum("tm,tmk->k", w, mids**2)

    # geometry helpers used by the FEM assembly

    def triangle_areas(self) -> np.ndarray:
        return self._signed_areas()

    def triangle_centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the three hat functions per triangle, shape (M, 3, 2)."""
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])[:, None]
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det
        return np.stack([-g1 - g2, g1, g2], axis=1)

    def diameter(self) -> float:
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def stats(self) -> dict:
        return {
            "nodes": int(len(self.nodes)),
            "triangles": int(len(self.triangles)),
            "area": self.area,
            "first_moments": [float(v) for v in self.first_moments],
            "product_moment": self.product_moment,
            "second_moments": [float(v) for v in self.second_moments],
            "diameter": self.diameter(),
        }

    def is_normalized(self, slack: float = _NORMALIZED_SLACK) -> bool:
        return (
            abs(self.area - 1.0) <= slack
            and float(np.max(np.abs(self.first_moments))) <= slack
        )


# ---------------------------------------------------------------------------
# construction


def load_mesh(path) -> CrossSectionMesh:
    """Parse the plain-text mesh format.

    Line 1: ``nodes N``; then N lines ``x2 x3``; then ``triangles M``; then
    M lines ``i j k`` with 0-based indices.  Blank lines and ``#`` comments
    are tolerated.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readlines()
    lines = [
        (lineno + 1, text.strip())
        for lineno, text in enumerate(raw)
        if text.strip() and not text.strip().startswith("#")
    ]
    pos = 0

    def take(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError(f"{path}: unexpected end of file while reading {what}")
        item = lines[pos]
        pos += 1
        return item

    lineno, head = take("'nodes N' header")
    parts = head.split()
    if len(parts) != 2 or parts[0] != "nodes":
        raise MeshFormatError(f"{path}:{lineno}: expected 'nodes N', got {head!r}")
    try:
        n_nodes = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"{path}:{lineno}: bad node count {parts[1]!r}") from None

    nodes = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        lineno, text = take(f"node {i}")
        parts = text.split()
        if len(parts) != 2:
            raise MeshFormatError(f"{path}:{lineno}: expected 'x2 x3', got {text!r}")
        try:
            nodes[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: bad coordinate in {text!r}") from None

    lineno, head = take("'triangles M' header")
    parts = head.split()
    if len(parts) != 2 or parts[0] != "triangles":
        raise MeshFormatError(f"{path}:{lineno}: expected 'triangles M', got {head!r}")
    try:
        n_tri = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"{path}:{lineno}: bad triangle count {parts[1]!r}") from None

    tris = np.empty((n_tri, 3), dtype=np.int64)
    for t in range(n_tri):
        lineno, text = take(f"triangle {t}")
        parts = text.split()
        if len(parts) != 3:
            raise MeshFormatError(f"{path}:{lineno}: expected 'i j k', got {text!r}")
        try:
            tris[t] = [int(parts[0]), int(parts[1]), int(parts[2])]
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: bad index in {text!r}") from None
        if len(set(tris[t].tolist())) != 3:
            raise MeshFormatError(
                f"{path}:{lineno}: repeated node index in triangle {t} (degenerate)"
            )
    if pos != len(lines):
        lineno, text = lines[pos]
        raise MeshFormatError(f"{path}:{lineno}: trailing content {text!r}")
    try:
        return CrossSectionMesh(nodes, tris)
    except MeshGeometryError as exc:
        raise MeshGeometryError(f"{path}: {exc}") from exc


def generate_disc(radius: float, refinement: int) -> CrossSectionMesh:
    """Quasi-uniform disc mesh: hexagon fan subdivided ``refinement`` times.

    New boundary nodes are projected onto the exact circle after every
    subdivision, so boundary nodes always lie at distance ``radius``.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    ang = np.arange(6) * (np.pi / 3.0)
    nodes = np.vstack([[0.0, 0.0], radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)])
    tris = np.array([[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)], dtype=np.int64)

    for _ in range(refinement):
        edges = np.sort(
            np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1
        )
        uniq, inv, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
        mids = 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]])
        on_boundary = counts == 1
        norms = np.linalg.norm(mids[on_boundary], axis=1)
        mids[on_boundary] *= (radius / norms)[:, None]
        mid_idx = len(nodes) + np.arange(len(uniq))
        nodes = np.vstack([nodes, mids])
        inv = inv.reshape(3, -1)  # rows: edge 01, 12, 20 per triangle
        mab, mbc, mca = (mid_idx[inv[0]], mid_idx[inv[1]], mid_idx[inv[2]])
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        tris = np.concatenate(
            [
                np.stack([a, mab, mca], axis=1),
                np.stack([mab, b, mbc], axis=1),
                np.stack([mca, mbc, c], axis=1),
                np.stack([mab, mbc, mca], axis=1),
            ]
        )
    return CrossSectionMesh(nodes, tris)


@dataclass(frozen=True)
class SectionTransform:
    """Normalization record: x_norm = scale * Rot(-angle) @ (x + shift)."""

    shift: np.ndarray
    angle: float
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        rot_t = np.array([[c, s], [-s, c]])  # Rot(-angle)
        return self.scale * (np.asarray(points, dtype=float) + self.shift) @ rot_t.T


def normalize_section(mesh: CrossSectionMesh) -> tuple[CrossSectionMesh, SectionTransform]:
    """Translate to zero centroid, rotate to principal axes, scale to unit area."""
    if mesh.area <= 0.0:
        raise MeshGeometryError("zero-area mesh cannot be normalized")
    shift = -mesh.first_moments / mesh.area
    pts = mesh.nodes + shift
    centered = CrossSectionMesh(pts, mesh.triangles)
    i2, i3 = centered.second_moments
    ixy = centered.product_moment
    if abs(ixy) > 1e-12 * (i2 + i3):
        angle = 0.5 * np.arctan2(2.0 * ixy, i2 - i3)
    else:
        angle = 0.0
    scale = 1.0 / np.sqrt(mesh.area)
    tform = SectionTransform(shift=shift, angle=float(angle), scale=float(scale))
    out = CrossSectionMesh(tform.apply(mesh.nodes), mesh.triangles)
    return out, tform


# ---------------------------------------------------------------------------
# cell problem


def _affine_data_matrix(a: np.ndarray, points: np.ndarray) -> np.ndarray:
    """The matrix (x2 A e2 + x3 A e3 | 0 | 0) at each point, shape (..., 3, 3)."""
    A = skew_from_coords(a)
    col = points[..., 0, None] * A[:, 1] + points[..., 1, None] * A[:, 2]
    out = np.zeros(points.shape[:-1] + (3, 3))
    out[..., :, 0] = col
    return out


@dataclass
class WarpingField:
    """P1 minimizer of the cell energy for one skew parameter a."""

    values: np.ndarray  # (n_nodes, 3)
    a: np.ndarray  # (3,)
    mesh: CrossSectionMesh
    weak_residual: float
    constraint_residual: float

    def class_b_defect(self) -> float:
        """max absolute mean of (alpha, d2 alpha, d3 alpha) over the section."""
        mesh = self.mesh
        areas = mesh.triangle_areas()
        tri_vals = self.values[mesh.triangles]
        mean_alpha = np.einsum("t,tmk->k", areas / 3.0, tri_vals)
        grads = mesh.barycentric_gradients()
        g = np.einsum("tmk,tmd->tdk", tri_vals, grads)  # (M, 2, 3)
        mean_grad = np.einsum("t,tdk->dk", areas, g)
        return float(max(np.max(np.abs(mean_alpha)), np.max(np.abs(mean_grad))))


class CellSolver:
    """Assembled cell problem on a fixed (mesh, L) pair.

    Holds the sparse KKT factorization so that repeated solves (the three
    basis parameters, moment maps, arbitrary a) cost one back-substitution.
    """

    def __init__(self, mesh: CrossSectionMesh, L: ElasticityTensor):
        if not mesh.is_normalized():
            raise ValueError(
                "cell problem expects a normalized section "
                f"(area {mesh.area:.6g}, centroid {mesh.first_moments})"
            )
        self.mesh = mesh
        self.L = L
        self._assemble()

    def _assemble(self) -> None:
        mesh = self.mesh
        L9 = self.L.matrix
        tri = mesh.triangles
        m = len(tri)
        n = len(mesh.nodes)
        areas = mesh.triangle_areas()
        grads = mesh.barycentric_gradients()  # (m, 3, 2)

        # local dof (i, ci) -> flattened 3x3 matrix (0 | b_i0 e_ci | b_i1 e_ci)
        B = np.zeros((m, 9, 9))
        for i in range(3):
            for ci in range(3):
                B[:, 3 * i + ci, 3 * ci + 1] = grads[:, i, 0]
                B[:, 3 * i + ci, 3 * ci + 2] = grads[:, i, 1]
        ke = np.einsum("t,tap,pq,tbq->tab", areas, B, L9, B, optimize=True)

        dof = (3 * tri[:, :, None] + np.arange(3)).reshape(m, 9)
        rows = np.repeat(dof, 9, axis=1).ravel()
        cols = np.tile(dof, (1, 9)).ravel()
        K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(3 * n, 3 * n)).tocsr()

        # linear term: column k is the load vector for basis parameter e_k
        cen = mesh.triangle_centroids()
        basis = np.eye(3)
        rhs_cols = np.zeros((3 * n, 3))
        c0 = np.zeros((3, 3))
        mids = 0.5 * (mesh.nodes[tri] + np.roll(mesh.nodes[tri], -1, axis=1))
        for k in range(3):
            Mc = _affine_data_matrix(basis[k], cen)  # (m, 3, 3)
            LM = self.L.apply(Mc).reshape(m, 9)
            be = np.einsum("t,tap,tp->ta", areas, B, LM, optimize=True)
            np.add.at(rhs_cols[:, k], dof.ravel(), be.ravel())
            for k2 in range(3):
                Mm1 = _affine_data_matrix(basis[k], mids).reshape(m, 3, 9)
                Mm2 = _affine_data_matrix(basis[k2], mids).reshape(m, 3, 9)
                c0[k, k2] = np.einsum(
                    "t,tmp,pq,tmq->", areas / 3.0, Mm1, L9, Mm2, optimize=True
                )
        self._rhs_cols = rhs_cols
        self._c0 = 0.5 * (c0 + c0.T)
        self._K = K

        # class-B constraints: mean alpha (lumped), mean d2 alpha, mean d3 alpha
        C = sp.lil_matrix((9, 3 * n))
        lump = np.zeros(n)
        np.add.at(lump, tri.ravel(), np.repeat(areas / 3.0, 3))
        for c in range(3):
            C[c, 3 * np.arange(n) + c] = lump
        wg = areas[:, None, None] * grads  # (m, 3, 2)
        for d in range(2):
            acc = np.zeros(n)
            np.add.at(acc, tri.ravel(), wg[:, :, d].ravel())
            for c in range(3):
                C[3 + 3 * d + c, 3 * np.arange(n) + c] = acc
        C = C.tocsr()
        self._C = C

        kkt = sp.bmat([[2.0 * K, C.T], [C, None]], format="csc")
        try:
            self._lu = spla.splu(kkt)
        except RuntimeError as exc:
            raise CellSolveError(f"constrained cell system is singular: {exc}") from exc
        self._n = n

    def solve(self, a: np.ndarray) -> WarpingField:
        a = np.asarray(a, dtype=float).reshape(3)
        b = self._rhs_cols @ a
        rhs = np.concatenate([-2.0 * b, np.zeros(9)])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise CellSolveError("cell solve produced non-finite values")
        u, lam = sol[: 3 * self._n], sol[3 * self._n :]
        grad = 2.0 * (self._K @ u) + 2.0 * b + self._C.T @ lam
        scale = max(float(np.linalg.norm(2.0 * b)), 1e-30)
        weak = float(np.linalg.norm(grad)) / scale
        cres = float(np.linalg.norm(self._C @ u))
        return WarpingField(
            values=u.reshape(self._n, 3),
            a=a,
            mesh=self.mesh,
            weak_residual=weak,
            constraint_residual=cres,
        )

    def energy_bilinear(self, fa: WarpingField, fb: WarpingField) -> float:
        """Polarization of F_A at two minimizers; equals Q_1 entries."""
        ua = fa.values.ravel()
        ub = fb.values.ravel()
        ba = self._rhs_cols @ fa.a
        bb = self._rhs_cols @ fb.a
        return float(
            fa.a @ self._c0 @ fb.a + ba @ ub + bb @ ua + ua @ (self._K @ ub)
        )

    def energy_value(self, f: WarpingField) -> float:
        return self.energy_bilinear(f, f)


@dataclass(frozen=True)
class Q1Form:
    """The limit stiffness quadratic form in coordinates (A12, A13, A23)."""

    matrix: np.ndarray
    constraint_residuals: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("Q1Form needs a 3x3 matrix")
        object.__setattr__(self, "matrix", m)

    @property
    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def solve_cell_problem(mesh: CrossSectionMesh, L: ElasticityTensor, a) -> WarpingField:
    """Minimize the cell energy for one skew parameter a (class-B minimizer)."""
    return _solver_for(mesh, L).solve(a)


def assemble_q1(mesh: CrossSectionMesh, L: ElasticityTensor) -> Q1Form:
    """Gram matrix of the cell energy over the three basis skew parameters."""
    solver = _solver_for(mesh, L)
    fields = [solver.solve(e) for e in np.eye(3)]
    q = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            q[i, j] = q[j, i] = solver.energy_bilinear(fields[i], fields[j])
    q = 0.5 * (q + q.T)
    residuals = tuple(float(f.weak_residual) for f in fields)
    return Q1Form(matrix=q, constraint_residuals=residuals)


def q1_eval(form: Q1Form, a) -> float:
    a = np.asarray(a, dtype=float).reshape(3)
    return float(a @ form.matrix @ a)


def stress_field(
    mesh: CrossSectionMesh, L: ElasticityTensor, a, warping: WarpingField
) -> np.ndarray:
    """Limit stress E = L(x2 Ae2 + x3 Ae3 | d2 alpha | d3 alpha) at centroids."""
    if warping.mesh is not mesh or len(warping.values) != len(mesh.nodes):
        raise ValueError("warping field does not belong to this mesh")
    a = np.asarray(a, dtype=float).reshape(3)
    grads = mesh.barycentric_gradients()
    tri_vals = warping.values[mesh.triangles]  # (m, 3 nodes, 3 comps)
    g = np.einsum("tmk,tmd->tkd", tri_vals, grads)  # (m, 3 comps, 2)
    F = _affine_data_matrix(a, mesh.triangle_centroids())
    F[:, :, 1:] += g
    return L.apply(F)


def bending_moments(stress: np.ndarray, mesh: CrossSectionMesh):
    """(Ebar, Etilde, Ehat) = (int E, int x2 E, int x3 E), centroid quadrature."""
    stress = np.asarray(stress, dtype=float)
    if stress.shape != (len(mesh.triangles), 3, 3):
        raise ValueError("stress field shape does not match the mesh")
    areas = mesh.triangle_areas()
    cen = mesh.triangle_centroids()
    ebar = np.einsum("t,tij->ij", areas, stress)
    etilde = np.einsum("t,tij->ij", areas * cen[:, 0], stress)
    ehat = np.einsum("t,tij->ij", areas * cen[:, 1], stress)
    return ebar, etilde, ehat


def moment_map(mesh: CrossSectionMesh, L: ElasticityTensor) -> np.ndarray:
    """3x3 matrix taking a = (A12, A13, A23) to (Etilde11, Ehat11, Ehat21 - Etilde31).

    Built once per (mesh, L) from the three basis cell solves and cached on
    the mesh; the map is linear by linearity of the cell problem.
    """
    key = ("moment_map", L.matrix.tobytes())
    cached = mesh._cache.get(key)
    if cached is not None:
        return cached
    solver = _solver_for(mesh, L)
    cols = []
    for e in np.eye(3):
        f = solver.solve(e)
        E = stress_field(mesh, L, e, f)
        _, etilde, ehat = bending_moments(E, mesh)
        cols.append([etilde[0, 0], ehat[0, 0], ehat[1, 0] - etilde[2, 0]])
    out = np.array(cols).T
    mesh._cache[key] = out
    return out


def _solver_for(mesh: CrossSectionMesh, L: ElasticityTensor) -> CellSolver:
    key = ("cell_solver", L.matrix.tobytes())
    solver = mesh._cache.get(key)
    if solver is None:
        solver = CellSolver(mesh, L)
        mesh._cache[key] = solver
    return solver
