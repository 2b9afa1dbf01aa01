"""Assembly of the discrete equilibrium residual, Jacobian and Gram matrices.

The residual is the gradient of the constrained energy

    E(u, n, p, lam) = int  |F|^2 - (1-a)|F^T n|^2 + b |grad n|^2
                         - p (det F - 1) + lam (pi_h(|n|^2) - 1)
                      - int f . u  -  int_{Free} g . u,

with F = I + grad u, evaluated on the Taylor-Hood / P1-P1 spaces; the
Jacobian is its (symmetric) Hessian.  The nodal-interpolation terms cannot
be written as weighted quadrature of pointwise products; they are assembled
exactly through the P1 vertex mass matrix acting on nodal values, which
reproduces int psi_j pi_h(.) dx because pi_h(.) is itself P1.

All element loops are vectorized over the whole mesh; global accumulation
uses deterministic sparse summation, so repeated assemblies are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .btw_core import MaterialParams
from .mesh import FREE
from .spaces import (
    DofMap,
    FieldState,
    FIELDS,
    ProblemSpaces,
    _barycentric_gradients,
    _p1_bary_grads,
    _p1_values,
    _p2_bary_grads,
    _p2_values,
    triangle_quadrature,
)


# --------------------------------------------------------------------------
# free-DOF layout


def free_layout(spaces: ProblemSpaces):
    """Free scalar-DOF indices per field and their offsets in the stacked
    (u, n, p, lam) system."""
    indices = {}
    offsets = {}
    total = 0
    for name in FIELDS:
        f = spaces.space(name).free_dofs()
        indices[name] = f
        offsets[name] = total
        total += len(f)
    return indices, offsets, total


def split_free_vector(vec: np.ndarray, spaces: ProblemSpaces) -> dict:
    """Split a stacked free-DOF vector back into per-field pieces."""
    indices, offsets, total = free_layout(spaces)
    if vec.shape != (total,):
        raise ValueError(f"expected stacked length {total}, got {vec.shape}")
    return {
        name: vec[offsets[name] : offsets[name] + len(indices[name])]
        for name in FIELDS
    }


def _check_state(state: FieldState, spaces: ProblemSpaces) -> None:
    for name in FIELDS:
        coeffs = getattr(state, name)
        ndof = spaces.space(name).n_dofs
        if coeffs.shape != (ndof,):
            raise ValueError(f"field {name!r}: expected {ndof} coefficients, got {coeffs.shape}")


# --------------------------------------------------------------------------
# pointwise kinematics at quadrature points


def _fields_at_qpoints(state: FieldState, spaces: ProblemSpaces):
    """Gather F, cof(F), det F, n, F^T n, p at every quadrature point."""
    nt = spaces.mesh.n_triangles
    u_elem = state.u[spaces.u.elem_dofs].reshape(nt, 6, 2)
    n_elem = state.n[spaces.n.elem_dofs].reshape(nt, 3, 2)
    p_elem = state.p[spaces.p.elem_dofs].reshape(nt, 3)

    F = np.einsum("elc,eqlj->eqcj", u_elem, spaces.grad2)
    F[:, :, 0, 0] += 1.0
    F[:, :, 1, 1] += 1.0
    cof = np.empty_like(F)
    cof[:, :, 0, 0] = F[:, :, 1, 1]
    cof[:, :, 0, 1] = -F[:, :, 1, 0]
    cof[:, :, 1, 0] = -F[:, :, 0, 1]
    cof[:, :, 1, 1] = F[:, :, 0, 0]
    detF = F[:, :, 0, 0] * F[:, :, 1, 1] - F[:, :, 0, 1] * F[:, :, 1, 0]

    n_q = np.einsum("ql,elc->eqc", spaces.phi1, n_elem)
    p_q = np.einsum("ql,el->eq", spaces.phi1, p_elem)
    Ftn = np.einsum("eqij,eqi->eqj", F, n_q)
    grad_n = np.einsum("elc,elj->ecj", n_elem, spaces.grad1)  # constant per element
    return F, cof, detF, n_q, p_q, Ftn, grad_n, u_elem


def _qweights(spaces: ProblemSpaces) -> np.ndarray:
    return spaces.quad_weights[None, :] * spaces.area[:, None]


# --------------------------------------------------------------------------
# boundary (traction) terms on the free edge


def _free_edge_table(spaces: ProblemSpaces) -> np.ndarray:
    """(n_edges, 4) table per Free-edge segment: u-space node ids of the two
    endpoints and the midpoint, plus the segment length packed separately."""
    mesh = spaces.mesh
    nv = mesh.n_vertices
    # u-space P2 edge nodes: locate via the element edge that matches
    edge_to_mid = {}
    for e in range(mesh.n_triangles):
        nodes = spaces.u.elem_nodes[e]
        for (i, j, m) in ((1, 2, 3), (2, 0, 4), (0, 1, 5)):
            key = (min(nodes[i], nodes[j]), max(nodes[i], nodes[j]))
            edge_to_mid[key] = nodes[m]
    rows = []
    for (v0, v1), tag in zip(mesh.boundary_edges, mesh.boundary_edge_tags):
        if tag != FREE:
            continue
        key = (min(v0, v1), max(v0, v1))
        rows.append((v0, v1, edge_to_mid[key]))
    _ = nv
    return np.asarray(rows, dtype=int).reshape(-1, 3)


_EDGE_GAUSS = np.polynomial.legendre.leggauss(3)


def _edge_shape(s: np.ndarray) -> np.ndarray:
    """1D quadratic Lagrange values at nodes (endpoint, endpoint, midpoint)."""
    return np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=-1)


def _traction_vector(spaces: ProblemSpaces, g) -> np.ndarray:
    """Full u-space load vector of the traction on the Free edge."""
    out = np.zeros(spaces.u.n_dofs)
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return out
    table = _free_edge_table(spaces)
    if table.size == 0:
        return out
    gx, gw = _EDGE_GAUSS
    s = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    shape = _edge_shape(s)  # (3 pts, 3 nodes)
    coords = spaces.u.node_coords
    for v0, v1, mid in table:
        length = np.linalg.norm(coords[v1] - coords[v0])
        for node, col in ((v0, 0), (v1, 1), (mid, 2)):
            contrib = length * np.dot(w, shape[:, col])
            out[node * 2] += contrib * g[0]
            out[node * 2 + 1] += contrib * g[1]
    return out


def _traction_energy(spaces: ProblemSpaces, g, u: np.ndarray) -> float:
    """int_{Free} g . u ds for a P2 displacement field."""
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return 0.0
    table = _free_edge_table(spaces)
    gx, gw = _EDGE_GAUSS
    s = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    shape = _edge_shape(s)
    coords = spaces.u.node_coords
    total = 0.0
    for v0, v1, mid in table:
        length = np.linalg.norm(coords[v1] - coords[v0])
        vals = u[[v0 * 2, v0 * 2 + 1, v1 * 2, v1 * 2 + 1, mid * 2, mid * 2 + 1]]
        ux = shape @ vals[[0, 2, 4]]
        uy = shape @ vals[[1, 3, 5]]
        total += length * np.dot(w, g[0] * ux + g[1] * uy)
    return total


# --------------------------------------------------------------------------
# energy and residual


def assemble_energy(state: FieldState, params: MaterialParams, spaces: ProblemSpaces) -> float:
    """The constrained energy E at the given state (load terms included)."""
    _check_state(state, spaces)
    a, b = params.a, params.b
    F, _, detF, n_q, p_q, Ftn, grad_n, u_elem = _fields_at_qpoints(state, spaces)
    w = _qweights(spaces)

    bulk = np.einsum("eq,eqcj->", w, F * F)
    bulk -= (1 - a) * np.einsum("eq,eqj->", w, Ftn * Ftn)
    bulk += b * np.einsum("e,ecj->", spaces.area, grad_n * grad_n)
    bulk -= np.einsum("eq,eq->", w, p_q * (detF - 1.0))

    n_arr = state.n.reshape(-1, 2)
    unity = np.sum(n_arr * n_arr, axis=1) - 1.0
    bulk += float(state.lam @ (spaces.mass_p1 @ unity))

    f = np.asarray(params.f, dtype=float)
    if np.any(f):
        u_q = np.einsum("ql,elc->eqc", spaces.phi2, u_elem)
        bulk -= np.einsum("eq,eqc,c->", w, u_q, f)
    bulk -= _traction_energy(spaces, params.g, state.u)
    return float(bulk)


def assemble_residual_fields(
    state: FieldState, params: MaterialParams, spaces: ProblemSpaces
) -> dict:
    """Full-space gradient of E, one vector per field (no Dirichlet
    elimination; used for reaction-force extraction)."""
    _check_state(state, spaces)
    a, b = params.a, params.b
    F, cof, detF, n_q, p_q, Ftn, grad_n, _ = _fields_at_qpoints(state, spaces)
    w = _qweights(spaces)
    nt = spaces.mesh.n_triangles

    # displacement block: int sigma(F, n, p) : grad v
    sigma = 2.0 * F - 2.0 * (1 - a) * np.einsum("eqd,eqj->eqdj", n_q, Ftn)
    sigma -= p_q[:, :, None, None] * cof
    r_u = np.einsum("eq,eqdj,eqlj->eld", w, sigma, spaces.grad2)
    f = np.asarray(params.f, dtype=float)
    if np.any(f):
        r_u -= np.einsum("eq,ql,d->eld", w, spaces.phi2, f)
    r_u_full = np.zeros(spaces.u.n_dofs)
    np.add.at(r_u_full, spaces.u.elem_dofs.ravel(), r_u.reshape(nt, -1).ravel())
    r_u_full -= _traction_vector(spaces, params.g)

    # director block: -2(1-a)(F F^T n, m) + 2b (grad n, grad m) + pi_h term
    FFtn = np.einsum("eqdj,eqj->eqd", F, Ftn)
    r_n = -2.0 * (1 - a) * np.einsum("eq,ql,eqd->eld", w, spaces.phi1, FFtn)
    r_n += 2.0 * b * np.einsum("e,edj,elj->eld", spaces.area, grad_n, spaces.grad1)
    r_n_full = np.zeros(spaces.n.n_dofs)
    np.add.at(r_n_full, spaces.n.elem_dofs.ravel(), r_n.reshape(nt, -1).ravel())
    mlam = spaces.mass_p1 @ state.lam
    n_arr = state.n.reshape(-1, 2)
    r_n_full += (2.0 * n_arr * mlam[:, None]).reshape(-1)

    # pressure block: -int q (det F - 1)
    r_p = -np.einsum("eq,ql,eq->el", w, spaces.phi1, detF - 1.0)
    r_p_full = np.zeros(spaces.p.n_dofs)
    np.add.at(r_p_full, spaces.p.elem_dofs.ravel(), r_p.ravel())

    # multiplier block: int mu pi_h(|n|^2 - 1), exact via the P1 mass matrix
    unity = np.sum(n_arr * n_arr, axis=1) - 1.0
    r_lam_full = np.asarray(spaces.mass_p1 @ unity)

    return {"u": r_u_full, "n": r_n_full, "p": r_p_full, "lam": r_lam_full}


def assemble_residual(
    state: FieldState, params: MaterialParams, spaces: ProblemSpaces
) -> np.ndarray:
    """Equilibrium residual over the free DOFs, stacked (u, n, p, lam)."""
    fields = assemble_residual_fields(state, params, spaces)
    indices, _, _ = free_layout(spaces)
    return np.concatenate([fields[name][indices[name]] for name in FIELDS])


# --------------------------------------------------------------------------
# Jacobian


def _jacobian_blocks(state: FieldState, params: MaterialParams, spaces: ProblemSpaces) -> dict:
    """Full-space Jacobian blocks: A1 (u,u), A2 (u,n), A3 (n,n),
    B1 (p,u), B2 (lam,n).  All other blocks vanish identically."""
    _check_state(state, spaces)
    a, b = params.a, params.b
    F, cof, _, n_q, p_q, Ftn, _, _ = _fields_at_qpoints(state, spaces)
    w = _qweights(spaces)
    nt = spaces.mesh.n_triangles
    G2, G1, phi1 = spaces.grad2, spaces.grad1, spaces.phi1

    # -- A1: 2(grad w, grad v) - 2(1-a)(grad w^T n, grad v^T n) - p d2det
    gg = np.einsum("eqlj,eqmj->eqlm", G2, G2)
    c1 = np.einsum("eq,eqlm->elm", w, gg)
    a1 = np.zeros((nt, 6, 2, 6, 2))
    a1[:, :, 0, :, 0] += 2.0 * c1
    a1[:, :, 1, :, 1] += 2.0 * c1
    a1 -= 2.0 * (1 - a) * np.einsum("eq,eqd,eqc,eqlm->eldmc", w, n_q, n_q, gg)
    # d2det is the constant antisymmetric-in-components pairing
    d12 = np.einsum("eq,eq,eql,eqm->elm", w, p_q,
                    G2[:, :, :, 0], G2[:, :, :, 1])
    d21 = np.einsum("eq,eq,eql,eqm->elm", w, p_q,
                    G2[:, :, :, 1], G2[:, :, :, 0])
    a1[:, :, 0, :, 1] -= d12 - d21
    a1[:, :, 1, :, 0] -= d21 - d12
    a1_mat = _scatter(a1.reshape(nt, 12, 12), spaces.u, spaces.u)

    # -- A2: -2(1-a)[(F^T l, grad v^T n) + (F^T n, grad v^T l)], v in P2, l in P1
    t1 = np.einsum("eq,qm,eqd,eqcj,eqlj->eldmc", w, phi1, n_q, F, G2)
    t2 = np.einsum("eq,qm,eqj,eqlj->elm", w, phi1, Ftn, G2)
    a2 = -2.0 * (1 - a) * t1
    a2[:, :, 0, :, 0] -= 2.0 * (1 - a) * t2
    a2[:, :, 1, :, 1] -= 2.0 * (1 - a) * t2
    a2_mat = _scatter(a2.reshape(nt, 12, 6), spaces.u, spaces.n)

    # -- A3: -2(1-a)(F^T l, F^T m) + 2b (grad l, grad m) + pi_h diagonal
    fft = np.einsum("eqdj,eqcj->eqdc", F, F)
    a3 = -2.0 * (1 - a) * np.einsum("eq,ql,qm,eqdc->eldmc", w, phi1, phi1, fft)
    stiff = np.einsum("e,elj,emj->elm", spaces.area, G1, G1)
    a3[:, :, 0, :, 0] += 2.0 * b * stiff
    a3[:, :, 1, :, 1] += 2.0 * b * stiff
    a3_mat = _scatter(a3.reshape(nt, 6, 6), spaces.n, spaces.n)
    mlam = np.asarray(spaces.mass_p1 @ state.lam)
    diag = np.repeat(2.0 * mlam, 2)
    a3_mat = (a3_mat + sp.diags(diag)).tocsr()

    # -- B1: -q cof(F) : grad w
    b1 = -np.einsum("eq,ql,eqdj,eqmj->elmd", w, phi1, cof, G2)
    b1_mat = _scatter(b1.reshape(nt, 3, 12), spaces.p, spaces.u)

    # -- B2: 2 mu pi_h(n, m), exact: B2[j, (c,d)] = 2 M_jc n_d(x_c)
    m_coo = spaces.mass_p1.tocoo()
    n_arr = state.n.reshape(-1, 2)
    rows = np.concatenate([m_coo.row, m_coo.row])
    cols = np.concatenate([2 * m_coo.col, 2 * m_coo.col + 1])
    vals = np.concatenate(
        [2.0 * m_coo.data * n_arr[m_coo.col, 0], 2.0 * m_coo.data * n_arr[m_coo.col, 1]]
    )
    b2_mat = sp.coo_matrix(
        (vals, (rows, cols)), shape=(spaces.lam.n_dofs, spaces.n.n_dofs)
    ).tocsr()

    return {"A1": a1_mat, "A2": a2_mat, "A3": a3_mat, "B1": b1_mat, "B2": b2_mat}


def _scatter(local: np.ndarray, row_space: DofMap, col_space: DofMap) -> sp.csr_matrix:
    """Accumulate per-element dense blocks into a global sparse matrix."""
    nt, nl, nm = local.shape
    rows = np.repeat(row_space.elem_dofs, nm, axis=1).ravel()
    cols = np.tile(col_space.elem_dofs, (1, nl)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(row_space.n_dofs, col_space.n_dofs)
    )
    return mat.tocsr()


def assemble_jacobian(
    state: FieldState, params: MaterialParams, spaces: ProblemSpaces
) -> sp.csr_matrix:
    """Symmetric Jacobian over the free DOFs in block order (u, n, p, lam).

    The zero blocks (p,p), (p,lam), (lam,lam), (u,lam), (n,p) are
    structurally absent from the sparsity pattern.
    """
    blocks = _jacobian_blocks(state, params, spaces)
    indices, _, _ = free_layout(spaces)
    fu, fn, fp, fl = (indices[n] for n in FIELDS)

    a1 = blocks["A1"][np.ix_(fu, fu)]
    a2 = blocks["A2"][np.ix_(fu, fn)]
    a3 = blocks["A3"][np.ix_(fn, fn)]
    b1 = blocks["B1"][np.ix_(fp, fu)]
    b2 = blocks["B2"][np.ix_(fl, fn)]

    k = sp.bmat(
        [
            [a1, a2, b1.T, None],
            [a2.T, a3, None, b2.T],
            [b1, None, None, None],
            [None, b2, None, None],
        ],
        format="csr",
    )
    return k


def assemble_constraint_blocks(state: FieldState, spaces: ProblemSpaces):
    """The constraint matrices on free DOFs: B1 (pressure rows, free u
    columns) and B2 (free lam rows, free n columns).  Identical to the
    corresponding off-diagonal Jacobian blocks."""
    # material constants do not enter either constraint form
    blocks = _jacobian_blocks(state, MaterialParams(), spaces)
    indices, _, _ = free_layout(spaces)
    b1 = blocks["B1"][np.ix_(indices["p"], indices["u"])]
    b2 = blocks["B2"][np.ix_(indices["lam"], indices["n"])]
    return b1, b2


MULTIPLIER_TERMS = ("omitted", "interpolated", "consistent")


def _director_block(
    state: FieldState, params: MaterialParams, spaces: ProblemSpaces, multiplier_term: str
) -> sp.csr_matrix:
    """Director-director block of the diagnostic primal form.

    The unit-director multiplier contributes a state-dependent mass term
    2 lam (l, m) to this block.  ``interpolated`` keeps the solver's exact
    Newton pairing (nodal interpolation of l.m, a lumped mass scaled by the
    multiplier), ``consistent`` uses the plain L2 pairing, and ``omitted``
    drops the term, probing the unstabilized elastic response.
    """
    if multiplier_term == "interpolated":
        return _jacobian_blocks(state, params, spaces)["A3"]
    if multiplier_term not in MULTIPLIER_TERMS:
        raise ValueError(f"unknown multiplier_term {multiplier_term!r}")
    a, b = params.a, params.b
    F, _, _, _, _, _, _, _ = _fields_at_qpoints(state, spaces)
    w = _qweights(spaces)
    nt = spaces.mesh.n_triangles
    phi1, G1 = spaces.phi1, spaces.grad1
    fft = np.einsum("eqdj,eqcj->eqdc", F, F)
    a3 = -2.0 * (1 - a) * np.einsum("eq,ql,qm,eqdc->eldmc", w, phi1, phi1, fft)
    stiff = np.einsum("e,elj,emj->elm", spaces.area, G1, G1)
    a3[:, :, 0, :, 0] += 2.0 * b * stiff
    a3[:, :, 1, :, 1] += 2.0 * b * stiff
    if multiplier_term == "consistent":
        lam_elem = state.lam[spaces.lam.elem_dofs].reshape(nt, 3)
        lam_q = np.einsum("ql,el->eq", phi1, lam_elem)
        massw = np.einsum("eq,eq,ql,qm->elm", w, lam_q, phi1, phi1)
        a3[:, :, 0, :, 0] += 2.0 * massw
        a3[:, :, 1, :, 1] += 2.0 * massw
    return _scatter(a3.reshape(nt, 6, 6), spaces.n, spaces.n)


# --------------------------------------------------------------------------
# Gram matrices


def assemble_gram(space: DofMap, which: str, free_only: bool = True):
    """L2, H1 or H^{-1} Gram matrix of a space.

    L2 and H1 are sparse; the H^{-1} Gram is the dense matrix A B^{-1} A
    built from the L2 matrix A and the full-H1 matrix B on the free DOFs
    of the multiplier space (it represents the discrete dual norm through
    the L2 projection onto the space).
    """
    if which not in ("L2", "H1", "Hminus1"):
        raise ValueError(f"unknown Gram kind {which!r}")

    pts, wts = triangle_quadrature(5)
    gradL, area = _barycentric_gradients(space.mesh)
    if space.degree == 1:
        vals = _p1_values(pts)
        grads = np.einsum("lb,ebj->elj", _p1_bary_grads(), gradL)[:, None]
        grads = np.broadcast_to(grads, (area.size, pts.shape[0], 3, 2))
    else:
        vals = _p2_values(pts)
        grads = np.einsum("qlb,ebj->eqlj", _p2_bary_grads(pts), gradL)
    w = wts[None, :] * area[:, None]

    mass_loc = np.einsum("eq,ql,qm->elm", w, vals, vals)
    stiff_loc = np.einsum("eq,eqlj,eqmj->elm", w, grads, grads)

    def expand(loc):
        nc = space.n_components
        if nc == 1:
            return _scatter(loc, space, space)
        nt, nl, _ = loc.shape
        big = np.zeros((nt, nl, nc, nl, nc))
        for c in range(nc):
            big[:, :, c, :, c] = loc
        return _scatter(big.reshape(nt, nl * nc, nl * nc), space, space)

    mass = expand(mass_loc)
    if which == "L2":
        gram = mass
    elif which == "H1":
        gram = (mass + expand(stiff_loc)).tocsr()
    else:
        f = space.free_dofs()
        a_m = mass[np.ix_(f, f)].toarray()
        b_m = (mass + expand(stiff_loc))[np.ix_(f, f)].toarray()
        return a_m @ scipy.linalg.solve(b_m, a_m, assume_a="pos")

    if free_only:
        f = space.free_dofs()
        gram = gram[np.ix_(f, f)].tocsr()
    return gram


# --------------------------------------------------------------------------
# bundled matrices for the diagnostics


@dataclass
class SaddleMatrices:
    """Jacobian, residual, constraint and Gram matrices at one state.

    ``K``/``R`` live on the free DOFs in block order (u, n, p, lam);
    ``T_u``/``T_n`` are full-H1 Grams of the free displacement/director
    DOFs, ``S_p`` the pressure L2 mass matrix, ``S_lambda`` the dense
    H^{-1} Gram of the free multiplier DOFs, and ``B1``/``B2`` the
    constraint blocks.
    """

    K: sp.csr_matrix
    R: np.ndarray
    T_u: sp.csr_matrix
    T_n: sp.csr_matrix
    S_p: sp.csr_matrix
    S_lambda: np.ndarray
    B1: sp.csr_matrix
    B2: sp.csr_matrix
    A_primal: sp.csr_matrix = field(default=None, repr=False)


def build_saddle_matrices(
    state: FieldState,
    params: MaterialParams,
    spaces: ProblemSpaces,
    multiplier_term: str = "omitted",
) -> SaddleMatrices:
    """Assemble everything the saddle-point diagnostics need at a state.

    ``K`` and ``R`` are always the solver's exact Newton system; the
    bundled primal form ``A_primal`` treats the director-block multiplier
    term per ``multiplier_term`` (see :func:`_director_block`).
    """
    blocks = _jacobian_blocks(state, params, spaces)
    indices, _, _ = free_layout(spaces)
    fu, fn, fp, fl = (indices[n] for n in FIELDS)

    a1 = blocks["A1"][np.ix_(fu, fu)]
    a2 = blocks["A2"][np.ix_(fu, fn)]
    a3 = blocks["A3"][np.ix_(fn, fn)]
    a3_diag = _director_block(state, params, spaces, multiplier_term)[np.ix_(fn, fn)]
    b1 = blocks["B1"][np.ix_(fp, fu)]
    b2 = blocks["B2"][np.ix_(fl, fn)]
    a_primal = sp.bmat([[a1, a2], [a2.T, a3_diag]], format="csr")
    k = sp.bmat(
        [
            [a1, a2, b1.T, None],
            [a2.T, a3, None, b2.T],
            [b1, None, None, None],
            [None, b2, None, None],
        ],
        format="csr",
    )
    return SaddleMatrices(
        K=k,
        R=assemble_residual(state, params, spaces),
        T_u=assemble_gram(spaces.u, "H1"),
        T_n=assemble_gram(spaces.n, "H1"),
        S_p=assemble_gram(spaces.p, "L2"),
        S_lambda=assemble_gram(spaces.lam, "Hminus1"),
        B1=b1,
        B2=b2,
        A_primal=a_primal,
    )


def btw_density_at_nodes(
    state: FieldState, params: MaterialParams, spaces: ProblemSpaces
) -> np.ndarray:
    """Per-vertex stored-energy density, averaged over adjacent elements.

    The deformation gradient is discontinuous across elements; the dump
    used for the energy color maps averages the corner values of every
    triangle meeting at a vertex.
    """
    mesh = spaces.mesh
    nt = mesh.n_triangles
    corners = np.eye(3)
    u_elem = state.u[spaces.u.elem_dofs].reshape(nt, 6, 2)
    n_arr = state.n.reshape(-1, 2)
    gradL, _ = _barycentric_gradients(mesh)
    d2 = _p2_bary_grads(corners)  # (3 corners, 6, 3)
    grad2 = np.einsum("qlb,ebj->eqlj", d2, gradL)
    F = np.einsum("elc,eqlj->eqcj", u_elem, grad2)
    F[:, :, 0, 0] += 1.0
    F[:, :, 1, 1] += 1.0

    n_corner = n_arr[mesh.triangles]  # (nt, 3, 2)
    Ftn = np.einsum("eqij,eqi->eqj", F, n_corner)
    dens = (
        np.einsum("eqcj->eq", F * F)
        - (1 - params.a) * np.einsum("eqj->eq", Ftn * Ftn)
        - 2.0 * np.sqrt(params.a)
    )
    total = np.zeros(mesh.n_vertices)
    count = np.zeros(mesh.n_vertices)
    np.add.at(total, mesh.triangles.ravel(), dens.ravel())
    np.add.at(count, mesh.triangles.ravel(), 1.0)
    return total / count


def write_matrix(mat, path) -> None:
    """Coordinate-format plain-text dump: one line ``row col value``."""
    coo = sp.coo_matrix(mat)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
