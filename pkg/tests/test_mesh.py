import numpy as np
import pytest

from lcefem.mesh import (
    BOUNDARY_TAGS,
    CLAMP,
    FREE,
    SYMX,
    SYMY,
    Mesh,
    MeshParams,
    build_uniform_mesh,
    refine,
    write_mesh,
)

AR_PAPER = 1.0 / np.sqrt(0.6)


def test_counting_small():
    mesh = build_uniform_mesh(MeshParams(h=2**-2, ar=1.0))
    assert mesh.n == 2
    assert mesh.n_vertices == 9
    assert mesh.n_triangles == 8


def test_counting_paper_mesh():
    # 16x16 cell grid on the quarter domain at the finest tabulated size
    mesh = build_uniform_mesh(MeshParams(h=2**-5, ar=AR_PAPER))
    assert mesh.n == 16
    assert mesh.n_vertices == 289
    assert mesh.n_triangles == 512


def test_uniform_areas():
    mesh = build_uniform_mesh(MeshParams(h=2**-2, ar=1.0))
    areas = mesh.signed_areas()
    assert np.allclose(areas, 1 / 32, atol=1e-15)


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("ar", [1.0, AR_PAPER])
def test_partition_of_area(k, ar):
    mesh = build_uniform_mesh(MeshParams(h=2.0**-k, ar=ar))
    areas = mesh.signed_areas()
    assert np.all(areas > 0)
    assert abs(areas.sum() - 0.25 * ar) <= 1e-12


@pytest.mark.parametrize("h", [0.3, 1.0, 0.75])
def test_rejects_bad_h(h):
    with pytest.raises(ValueError):
        build_uniform_mesh(MeshParams(h=h, ar=1.0))


def test_rejects_bad_ar():
    with pytest.raises(ValueError):
        build_uniform_mesh(MeshParams(h=0.25, ar=-1.0))


def test_refine_counts_and_nesting():
    coarse = build_uniform_mesh(MeshParams(h=2**-2, ar=AR_PAPER))
    fine = refine(coarse)
    assert fine.n_vertices == 25
    assert abs(fine.signed_areas().sum() - coarse.signed_areas().sum()) <= 1e-14

    # coarse vertices appear bit-identically among fine vertices
    fine_set = {tuple(v) for v in fine.vertices}
    for v in coarse.vertices:
        assert tuple(v) in fine_set


def test_refine_partitions_triangles():
    coarse = build_uniform_mesh(MeshParams(h=2**-2, ar=1.0))
    fine = refine(coarse)
    centroids = fine.vertices[fine.triangles].mean(axis=1)
    owner, _ = coarse.locate(centroids)
    fine_areas = fine.signed_areas()
    for e in range(coarse.n_triangles):
        children = np.flatnonzero(owner == e)
        assert len(children) == 4
        assert abs(fine_areas[children].sum() - coarse.signed_areas()[e]) <= 1e-14


def test_boundary_tags():
    mesh = build_uniform_mesh(MeshParams(h=2**-3, ar=AR_PAPER))
    n = mesh.n
    # every boundary edge carries exactly one tag, n edges per side
    assert len(mesh.boundary_edge_tags) == 4 * n
    for tag in BOUNDARY_TAGS:
        assert mesh.boundary_edge_tags.count(tag) == n

    # geometric consistency of the vertex tags
    x0, ar = mesh.x0, mesh.params.ar
    assert np.array_equal(mesh.vertex_tags[SYMX], mesh.vertices[:, 0] == x0)
    assert np.array_equal(mesh.vertex_tags[SYMY], mesh.vertices[:, 1] == 0.5)
    assert np.array_equal(mesh.vertex_tags[CLAMP], mesh.vertices[:, 0] == ar)
    assert np.array_equal(mesh.vertex_tags[FREE], mesh.vertices[:, 1] == 1.0)

    # corners carry both adjacent tags
    corner = np.flatnonzero(mesh.vertex_tags[SYMX] & mesh.vertex_tags[SYMY])
    assert len(corner) == 1


def test_locate_roundtrip():
    mesh = build_uniform_mesh(MeshParams(h=2**-3, ar=AR_PAPER))
    rng = np.random.default_rng(3)
    pts = np.column_stack(
        [
            rng.uniform(mesh.x0, mesh.params.ar, size=200),
            rng.uniform(0.5, 1.0, size=200),
        ]
    )
    elems, bary = mesh.locate(pts)
    assert np.all(bary >= -1e-12) and np.all(bary <= 1 + 1e-12)
    corners = mesh.vertices[mesh.triangles[elems]]
    rebuilt = np.einsum("pl,plj->pj", bary, corners)
    assert np.allclose(rebuilt, pts, atol=1e-13)


def test_mesh_dump(tmp_path):
    mesh = build_uniform_mesh(MeshParams(h=2**-2, ar=1.0))
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "vertices 9 triangles 8"
    assert len(lines) == 1 + 9 + 8
    # the symmetry-corner vertex carries both tags
    assert any("SymX,SymY" in line for line in lines[1:10])
    # triangle lines are vertex index triples
    assert all(len(line.split()) == 3 for line in lines[10:])
