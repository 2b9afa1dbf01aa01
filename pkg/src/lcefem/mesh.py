"""Uniform nested triangulations of the computational quarter domain.

The physical reference domain of the pulling experiment is
``[0, AR] x [0, 1]``; by the two reflection symmetries the computation only
needs the upper-right quarter ``[0.5*AR, AR] x [0.5, 1]``.  This module
builds uniform right-triangle meshes on that quarter, with tags classifying
the four boundary sides:

* ``SymX``  -- the vertical symmetry line ``X = 0.5*AR``
* ``SymY``  -- the horizontal symmetry line ``Y = 0.5``
* ``Clamp`` -- the clamped edge ``X = AR``
* ``Free``  -- the traction-free edge ``Y = 1``

Corner vertices carry both adjacent tags.  Mesh sizes are restricted to
``h = 2**-k`` so that successive refinements nest exactly: every coarse
vertex coordinate reappears bit-identically on the refined mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMX = "SymX"
SYMY = "SymY"
CLAMP = "Clamp"
FREE = "Free"
BOUNDARY_TAGS = (SYMX, SYMY, CLAMP, FREE)


@dataclass(frozen=True)
class MeshParams:
    """Mesh size ``h`` (relative to the unit reference height) and the
    full-domain aspect ratio ``ar``."""

    h: float
    ar: float

    def validate(self) -> None:
        if not self.ar > 0:
            raise ValueError(f"aspect ratio must be positive, got {self.ar}")
        k = -np.log2(self.h)
        if not (np.isfinite(k) and k >= 1 and k == int(k)):
            raise ValueError(
                f"mesh size must be 2**-k with integer k >= 1, got h={self.h}"
            )

    @property
    def cells_per_side(self) -> int:
        return int(round(0.5 / self.h))


@dataclass(frozen=True)
class Mesh:
    """Uniform triangulation of the quarter domain.

    Attributes
    ----------
    params : MeshParams
    vertices : (nv, 2) float array of reference coordinates.
    triangles : (nt, 3) int array, counterclockwise vertex triples.
    vertex_tags : maps each boundary tag to a boolean mask over vertices.
        A corner vertex is True under both adjacent tags.
    boundary_edges : (nbe, 2) int array of vertex pairs lying on the boundary.
    boundary_edge_tags : list of the single tag carried by each boundary edge.
    """

    params: MeshParams
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_tags: dict = field(repr=False)
    boundary_edges: np.ndarray = field(repr=False)
    boundary_edge_tags: list = field(repr=False)

    @property
    def n(self) -> int:
        """Cells per side."""
        return self.params.cells_per_side

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def x0(self) -> float:
        return 0.5 * self.params.ar

    @property
    def cell_size(self) -> tuple[float, float]:
        """Cell extent (dx, dy); cells are stretched in X when ar != 1."""
        n = self.n
        return 0.5 * self.params.ar / n, 0.5 / n

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find containing triangles and barycentric coordinates.

        Points must lie inside the quarter domain (a small tolerance is
        allowed; coordinates are clipped onto it).  Returns ``(elems, bary)``
        with ``bary`` of shape (npts, 3) with respect to the local vertex
        order of each triangle.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        dx, dy = self.cell_size
        sx = (pts[:, 0] - self.x0) / dx
        sy = (pts[:, 1] - 0.5) / dy
        i = np.clip(np.floor(sx).astype(int), 0, n - 1)
        j = np.clip(np.floor(sy).astype(int), 0, n - 1)
        xi = sx - i
        eta = sy - j
        # cell (i, j) holds triangles 2*(j*n+i) (lower, xi >= eta) and +1 (upper)
        lower = xi >= eta
        elems = 2 * (j * n + i) + np.where(lower, 0, 1)
        # lower triangle (ll, lr, ur): bary = (1-xi, xi-eta, eta)
        # upper triangle (ll, ur, ul): bary = (1-eta, xi, eta-xi)
        bary = np.empty((pts.shape[0], 3))
        bary[lower, 0] = 1.0 - xi[lower]
        bary[lower, 1] = (xi - eta)[lower]
        bary[lower, 2] = eta[lower]
        up = ~lower
        bary[up, 0] = 1.0 - eta[up]
        bary[up, 1] = xi[up]
        bary[up, 2] = (eta - xi)[up]
        return elems, bary


def build_uniform_mesh(params: MeshParams) -> Mesh:
    """Build the uniform quarter-domain mesh for the given parameters.

    The grid is N x N with N = 0.5/h; each square cell is split along the
    diagonal from its lower-left to its upper-right corner.  Vertex
    coordinates are exact affine images of the integer grid indices
    (N is a power of two, so i/N is exact), which makes refinement nesting
    bit-identical.
    """
    params.validate()
    n = params.cells_per_side
    ar = params.ar

    idx = np.arange(n + 1, dtype=float) / n
    xs = 0.5 * ar + idx * (0.5 * ar)
    ys = 0.5 + idx * 0.5
    jj, ii = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    vertices = np.column_stack([xs[ii.ravel()], ys[jj.ravel()]])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            ll, lr = vid(i, j), vid(i + 1, j)
            ul, ur = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))
    triangles = np.asarray(tris, dtype=int)

    ii_flat, jj_flat = ii.ravel(), jj.ravel()
    vertex_tags = {
        SYMX: ii_flat == 0,
        SYMY: jj_flat == 0,
        CLAMP: ii_flat == n,
        FREE: jj_flat == n,
    }

    bedges = []
    btags = []
    for k in range(n):
        bedges.append((vid(0, k), vid(0, k + 1)))
        btags.append(SYMX)
        bedges.append((vid(k, 0), vid(k + 1, 0)))
        btags.append(SYMY)
        bedges.append((vid(n, k), vid(n, k + 1)))
        btags.append(CLAMP)
        bedges.append((vid(k, n), vid(k + 1, n)))
        btags.append(FREE)

    return Mesh(
        params=params,
        vertices=vertices,
        triangles=triangles,
        vertex_tags=vertex_tags,
        boundary_edges=np.asarray(bedges, dtype=int),
        boundary_edge_tags=btags,
    )


def refine(mesh: Mesh) -> Mesh:
    """Return the uniform mesh with h halved.

    Because coordinates are exact affine images of grid indices, every
    coarse vertex reappears bit-identically among the fine vertices, and
    every coarse triangle is the union of four fine ones.
    """
    return build_uniform_mesh(MeshParams(h=mesh.params.h / 2, ar=mesh.params.ar))


def write_mesh(mesh: Mesh, path) -> None:
    """Dump the mesh in the plain-text exchange format.

    One header line ``vertices <count> triangles <count>``, then one line
    per vertex ``x y tag`` (comma-joined tags, ``interior`` if none), then
    one line per triangle ``i j k``.
    """
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}\n")
        for v in range(mesh.n_vertices):
            tags = [t for t in BOUNDARY_TAGS if mesh.vertex_tags[t][v]]
            label = ",".join(tags) if tags else "interior"
            x, y = mesh.vertices[v]
            fh.write(f"{x:.17g} {y:.17g} {label}\n")
        for tri in mesh.triangles:
            fh.write(f"{tri[0]} {tri[1]} {tri[2]}\n")
