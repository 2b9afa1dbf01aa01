"""Lagrange finite element spaces on the quarter-domain meshes.

Provides continuous P1 and P2 spaces (scalar or 2-vector), degree-of-freedom
maps with per-scalar-DOF Dirichlet marking, nodal interpolation onto P1,
exact transfer to a refined mesh, field evaluation, and the triangle
quadrature shared by all assembly.

Degrees of freedom are node-based: scalar DOF ``node * n_components + comp``.
P1 nodes are the mesh vertices, P2 nodes the vertices followed by the edge
midpoints (edges sorted lexicographically, so the ordering is deterministic
and refinements reuse coarse vertex ids unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import BOUNDARY_TAGS, CLAMP, FREE, SYMX, SYMY, Mesh, refine as _refine_mesh


# --------------------------------------------------------------------------
# quadrature


def triangle_quadrature(degree: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric triangle quadrature: barycentric points and weights.

    Weights sum to 1; the physical integral over a triangle of area A is
    ``A * sum(w_q f(x_q))``.  Degrees up to 5 use the classical 7-point
    symmetric rule; higher degrees fall back to a collapsed Gauss-Legendre
    product rule (exact for polynomials, non-symmetric).
    """
    if degree <= 5:
        s15 = np.sqrt(15.0)
        a1, b1 = (6 + s15) / 21, (9 - 2 * s15) / 21
        a2, b2 = (6 - s15) / 21, (9 + 2 * s15) / 21
        w1, w2 = (155 + s15) / 1200, (155 - s15) / 1200
        pts = np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [a1, a1, b1],
                [a1, b1, a1],
                [b1, a1, a1],
                [a2, a2, b2],
                [a2, b2, a2],
                [b2, a2, a2],
            ]
        )
        wts = np.array([0.225, w1, w1, w1, w2, w2, w2])
        return pts, wts

    # Duffy transform of the unit square: (u, v) -> (u(1-v), v), Jacobian 1-v.
    npt = (degree + 2 + 1) // 2
    gx, gw = np.polynomial.legendre.leggauss(npt)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    uu, vv = np.meshgrid(gx, gx, indexing="ij")
    wu, wv = np.meshgrid(gw, gw, indexing="ij")
    x = (uu * (1.0 - vv)).ravel()
    y = vv.ravel()
    w = (wu * wv * (1.0 - vv)).ravel()
    pts = np.column_stack([1.0 - x - y, x, y])
    return pts, 2.0 * w


def _p1_values(bary: np.ndarray) -> np.ndarray:
    """P1 shape functions at barycentric points; shape (nq, 3)."""
    return np.asarray(bary, dtype=float)


def _p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 shape functions at barycentric points; shape (nq, 6).

    Local order: vertices 0,1,2 then midpoints of edges (1,2), (2,0), (0,1).
    """
    L = np.asarray(bary, dtype=float)
    v = np.empty((L.shape[0], 6))
    for i in range(3):
        v[:, i] = L[:, i] * (2 * L[:, i] - 1)
    v[:, 3] = 4 * L[:, 1] * L[:, 2]
    v[:, 4] = 4 * L[:, 2] * L[:, 0]
    v[:, 5] = 4 * L[:, 0] * L[:, 1]
    return v


def _p1_bary_grads() -> np.ndarray:
    """d(shape)/d(L0,L1,L2), constant for P1; shape (3, 3)."""
    return np.eye(3)


def _p2_bary_grads(bary: np.ndarray) -> np.ndarray:
    """d(shape)/d(L0,L1,L2) at barycentric points; shape (nq, 6, 3)."""
    L = np.asarray(bary, dtype=float)
    nq = L.shape[0]
    d = np.zeros((nq, 6, 3))
    for i in range(3):
        d[:, i, i] = 4 * L[:, i] - 1
    d[:, 3, 1] = 4 * L[:, 2]
    d[:, 3, 2] = 4 * L[:, 1]
    d[:, 4, 2] = 4 * L[:, 0]
    d[:, 4, 0] = 4 * L[:, 2]
    d[:, 5, 0] = 4 * L[:, 1]
    d[:, 5, 1] = 4 * L[:, 0]
    return d


def _barycentric_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Physical gradients of the barycentric coordinates per triangle.

    Returns ``(gradL, area)`` with gradL of shape (nt, 3, 2).
    """
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    gradL = np.empty((p.shape[0], 3, 2))
    gradL[:, 1, 0] = d2[:, 1] / det
    gradL[:, 1, 1] = -d2[:, 0] / det
    gradL[:, 2, 0] = -d1[:, 1] / det
    gradL[:, 2, 1] = d1[:, 0] / det
    gradL[:, 0] = -gradL[:, 1] - gradL[:, 2]
    return gradL, area


# --------------------------------------------------------------------------
# degree-of-freedom maps


@dataclass
class DofMap:
    """Node-based Lagrange space on a mesh.

    ``elem_nodes`` maps each triangle to its node ids (3 for P1, 6 for P2
    in the local order of :func:`_p2_values`).  Scalar DOF ids interleave
    components: ``dof = node * n_components + comp``.  ``dirichlet_mask``
    marks constrained scalar DOFs; prescribed values are computed per
    continuation step by the solver (a vector DOF may have one component
    fixed and the other free).
    """

    mesh: Mesh
    degree: int
    n_components: int
    node_coords: np.ndarray
    elem_nodes: np.ndarray
    node_tags: dict = field(repr=False)
    dirichlet_mask: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.dirichlet_mask is None:
            self.dirichlet_mask = np.zeros(self.n_dofs, dtype=bool)

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.n_components

    @property
    def n_local(self) -> int:
        return self.elem_nodes.shape[1] * self.n_components

    @property
    def elem_dofs(self) -> np.ndarray:
        """(element, local index) -> global scalar DOF table."""
        nc = self.n_components
        nodes = self.elem_nodes
        dofs = nodes[:, :, None] * nc + np.arange(nc)[None, None, :]
        return dofs.reshape(nodes.shape[0], -1)

    @property
    def dof_coords(self) -> np.ndarray:
        """Coordinate of every scalar DOF (components share the node)."""
        return np.repeat(self.node_coords, self.n_components, axis=0)

    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)

    def component_dofs(self, comp: int) -> np.ndarray:
        return np.arange(self.n_nodes) * self.n_components + comp

    def nodes_on(self, tag: str) -> np.ndarray:
        return np.flatnonzero(self.node_tags[tag])


def build_space(mesh: Mesh, degree: int, n_components: int) -> DofMap:
    """Build a P1 or P2 space with deterministic DOF ordering."""
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    if n_components not in (1, 2):
        raise ValueError(f"n_components must be 1 or 2, got {n_components}")

    tris = mesh.triangles
    if degree == 1:
        node_coords = mesh.vertices
        elem_nodes = tris.copy()
        node_tags = {t: mesh.vertex_tags[t].copy() for t in BOUNDARY_TAGS}
    else:
        # edges as sorted vertex pairs, globally sorted for determinism
        pairs = np.vstack(
            [tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]]
        )
        pairs.sort(axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        nt = tris.shape[0]
        nv = mesh.n_vertices
        elem_nodes = np.empty((nt, 6), dtype=int)
        elem_nodes[:, :3] = tris
        elem_nodes[:, 3] = nv + inverse[:nt]
        elem_nodes[:, 4] = nv + inverse[nt : 2 * nt]
        elem_nodes[:, 5] = nv + inverse[2 * nt :]
        midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
        node_coords = np.vstack([mesh.vertices, midpoints])

        node_tags = {}
        edge_lookup = {tuple(sorted(e)): i for i, e in enumerate(mesh.boundary_edges)}
        for t in BOUNDARY_TAGS:
            mask = np.zeros(node_coords.shape[0], dtype=bool)
            mask[: nv] = mesh.vertex_tags[t]
            for k, (e0, e1) in enumerate(edges):
                be = edge_lookup.get((e0, e1))
                if be is not None and mesh.boundary_edge_tags[be] == t:
                    mask[nv + k] = True
            node_tags[t] = mask

    return DofMap(
        mesh=mesh,
        degree=degree,
        n_components=n_components,
        node_coords=node_coords,
        elem_nodes=elem_nodes,
        node_tags=node_tags,
    )


def evaluate(
    space: DofMap, coeffs: np.ndarray, element: int, barycentric
) -> tuple[np.ndarray, np.ndarray]:
    """Value and reference-coordinate gradient at one point of one element.

    Returns ``(value, grad)``: for scalar spaces a float and a (2,) array,
    for vector spaces a (2,) value and a (2, 2) gradient ``d value_i / d X_j``.
    Exact for polynomials of the space's degree.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.n_dofs,):
        raise ValueError(f"expected {space.n_dofs} coefficients, got {coeffs.shape}")
    if not 0 <= element < space.mesh.n_triangles:
        raise IndexError(f"element index {element} out of range")
    bary = np.asarray(barycentric, dtype=float).reshape(1, 3)

    gradL, _ = _barycentric_gradients(space.mesh)
    if space.degree == 1:
        vals = _p1_values(bary)[0]
        dldb = _p1_bary_grads()  # (3, 3)
        grads = dldb @ gradL[element]  # (3, 2)
    else:
        vals = _p2_values(bary)[0]
        dldb = _p2_bary_grads(bary)[0]  # (6, 3)
        grads = dldb @ gradL[element]  # (6, 2)

    local = coeffs[space.elem_dofs[element]].reshape(-1, space.n_components)
    value = vals @ local
    grad = np.einsum("lc,lj->cj", local, grads)
    if space.n_components == 1:
        return value[0], grad[0]
    return value, grad


def nodal_interpolate(space: DofMap, point_values: np.ndarray) -> np.ndarray:
    """P1 nodal interpolation: coefficients whose node values are the inputs.

    For Lagrange P1 this is the identity on the value vector; it exists to
    make the interpolation operator explicit where assembly needs it.
    """
    if space.degree != 1 or space.n_components != 1:
        raise ValueError("nodal interpolation is defined on the scalar P1 space")
    vals = np.asarray(point_values, dtype=float)
    if vals.shape != (space.n_nodes,):
        raise ValueError(f"expected one value per node ({space.n_nodes}), got {vals.shape}")
    return vals.copy()


def transfer_to_refined(
    coarse_space: DofMap, coarse_coeffs: np.ndarray, fine_space: DofMap
) -> np.ndarray:
    """Re-express a coarse-mesh function on the refined mesh (exact).

    The fine mesh must be ``refine(coarse mesh)`` and the spaces must share
    degree and component count; nested P1/P2 spaces make the transfer exact.
    """
    cm, fm = coarse_space.mesh, fine_space.mesh
    if (
        coarse_space.degree != fine_space.degree
        or coarse_space.n_components != fine_space.n_components
        or fm.params.ar != cm.params.ar
        or abs(fm.params.h - cm.params.h / 2) > 1e-15
    ):
        raise ValueError("target space is not the refinement of the source space")
    coarse_coeffs = np.asarray(coarse_coeffs, dtype=float)
    if coarse_coeffs.shape != (coarse_space.n_dofs,):
        raise ValueError("coefficient length mismatch")

    elems, bary = cm.locate(fine_space.node_coords)
    nc = coarse_space.n_components
    local = coarse_coeffs[coarse_space.elem_dofs[elems]].reshape(len(elems), -1, nc)
    vals = _p1_values(bary) if coarse_space.degree == 1 else _p2_values(bary)
    fine_nodal = np.einsum("pl,plc->pc", vals, local)
    return fine_nodal.reshape(-1)


def field_norm(space: DofMap, coeffs: np.ndarray, which: str = "L2") -> float:
    """L2 or full H1 norm of a finite element field, by quadrature."""
    pts, wts = triangle_quadrature(5)
    gradL, area = _barycentric_gradients(space.mesh)
    vals = _p1_values(pts) if space.degree == 1 else _p2_values(pts)
    nc = space.n_components
    local = coeffs[space.elem_dofs].reshape(space.mesh.n_triangles, -1, nc)
    fq = np.einsum("ql,elc->eqc", vals, local)
    acc = np.einsum("eqc,q,e->", fq * fq, wts, area)
    if which == "H1":
        if space.degree == 1:
            dldb = _p1_bary_grads()
            grads = np.einsum("lb,ebj->elj", dldb, gradL)[:, None]  # (nt,1,nl,2)
        else:
            dldb = _p2_bary_grads(pts)
            grads = np.einsum("qlb,ebj->eqlj", dldb, gradL)
        gq = np.einsum("eqlj,elc->eqcj", grads, local)
        acc += np.einsum("eqcj,q,e->", gq * gq, wts, area)
    elif which != "L2":
        raise ValueError(f"unknown norm {which!r}")
    return float(np.sqrt(acc))


# --------------------------------------------------------------------------
# problem bundle


@dataclass
class FieldState:
    """Coefficient vectors of the four fields at one continuation step."""

    u: np.ndarray
    n: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    t: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(self.u.copy(), self.n.copy(), self.p.copy(), self.lam.copy(), self.t)


FIELDS = ("u", "n", "p", "lam")


@dataclass
class ProblemSpaces:
    """The four spaces of the mixed discretization plus shared tables.

    Taylor-Hood P2 vector displacement with P1 pressure, and P1 vector
    director with P1 multiplier.  Dirichlet masks follow the experiment:
    u_X on SymX, u_Y on SymY, both u components on Clamp; n and lam on
    SymX, SymY and Clamp; the pressure is unconstrained.  Precomputed
    quadrature tables are shared by every assembly routine.
    """

    mesh: Mesh
    u: DofMap
    n: DofMap
    p: DofMap
    lam: DofMap
    quad_points: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    phi1: np.ndarray = field(repr=False)
    phi2: np.ndarray = field(repr=False)
    grad1: np.ndarray = field(repr=False)  # (nt, 3, 2), constant per element
    grad2: np.ndarray = field(repr=False)  # (nt, nq, 6, 2)
    mass_p1: sp.csr_matrix = field(repr=False)  # vertex mass matrix for pi_h terms

    def space(self, name: str) -> DofMap:
        return getattr(self, name)

    def refined(self) -> "ProblemSpaces":
        return build_problem_spaces(_refine_mesh(self.mesh), quad_degree=self._quad_degree)

    _quad_degree: int = 5


def _p1_mass_matrix(mesh: Mesh, pts: np.ndarray, wts: np.ndarray, area: np.ndarray):
    vals = _p1_values(pts)
    local = np.einsum("ql,qm,q->lm", vals, vals, wts)
    nt = mesh.n_triangles
    mats = local[None, :, :] * area[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    m = sp.coo_matrix(
        (mats.ravel(), (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)
    )
    return m.tocsr()


def build_problem_spaces(mesh: Mesh, quad_degree: int = 5) -> ProblemSpaces:
    """Build the four spaces with Dirichlet masks and quadrature tables."""
    space_u = build_space(mesh, 2, 2)
    space_n = build_space(mesh, 1, 2)
    space_p = build_space(mesh, 1, 1)
    space_lam = build_space(mesh, 1, 1)

    # u: per-component constraints; n, lam: all components on the n-Dirichlet sides
    for tag, comp in ((SYMX, 0), (SYMY, 1), (CLAMP, 0), (CLAMP, 1)):
        nodes = space_u.nodes_on(tag)
        space_u.dirichlet_mask[nodes * 2 + comp] = True
    for tag in (SYMX, SYMY, CLAMP):
        nodes = space_n.nodes_on(tag)
        space_n.dirichlet_mask[nodes * 2] = True
        space_n.dirichlet_mask[nodes * 2 + 1] = True
        space_lam.dirichlet_mask[space_lam.nodes_on(tag)] = True

    pts, wts = triangle_quadrature(quad_degree)
    gradL, area = _barycentric_gradients(mesh)
    phi1 = _p1_values(pts)
    phi2 = _p2_values(pts)
    grad1 = np.einsum("lb,ebj->elj", _p1_bary_grads(), gradL)
    grad2 = np.einsum("qlb,ebj->eqlj", _p2_bary_grads(pts), gradL)
    mass = _p1_mass_matrix(mesh, pts, wts, area)

    return ProblemSpaces(
        mesh=mesh,
        u=space_u,
        n=space_n,
        p=space_p,
        lam=space_lam,
        quad_points=pts,
        quad_weights=wts,
        area=area,
        phi1=phi1,
        phi2=phi2,
        grad1=grad1,
        grad2=grad2,
        mass_p1=mass,
        _quad_degree=quad_degree,
    )


def write_field(space: DofMap, coeffs: np.ndarray, path) -> None:
    """Dump a nodal field: one line per node, ``x y value`` or ``x y vx vy``."""
    coeffs = np.asarray(coeffs, dtype=float).reshape(space.n_nodes, space.n_components)
    with open(path, "w") as fh:
        for k in range(space.n_nodes):
            x, y = space.node_coords[k]
            vals = " ".join(f"{v:.17g}" for v in coeffs[k])
            fh.write(f"{x:.17g} {y:.17g} {vals}\n")
