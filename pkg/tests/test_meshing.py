import math

import numpy as np
import pytest

from dirfem.fem import nodal_interpolant
from dirfem.geometry import PolygonalDomain, builtin_domain
from dirfem.meshing import (
    TriMesh,
    bisect_refine,
    initial_mesh,
    load_mesh,
    mesh_size,
    min_triangle_angle,
    prolongate,
    save_mesh,
    triangulate_custom,
)

# nodes/triangles/boundary nodes after 2 and 10 uniform bisection passes
EXPECTED_COUNTS = {
    "omega90": ((9, 8, 8), (1089, 2048, 128)),
    "omega135": ((12, 12, 10), (1617, 3072, 160)),
    "omega270": ((21, 24, 16), (3201, 6144, 256)),
}


def test_initial_meshes_are_right_isosceles():
    for name in ("omega90", "omega135", "omega270"):
        mesh = initial_mesh(builtin_domain(name))
        assert mesh_size(mesh) == pytest.approx(math.sqrt(2.0))
        assert min_triangle_angle(mesh) == pytest.approx(math.pi / 4)


def test_initial_mesh_requires_builtin():
    tri = PolygonalDomain([(0, 0), (1, 0), (0, 1)])
    with pytest.raises(ValueError, match="builtin"):
        initial_mesh(tri)


@pytest.mark.parametrize("name", ["omega90", "omega135", "omega270"])
def test_refinement_counts_and_areas(name, mesh_at):
    dom = builtin_domain(name)
    for passes, expected in zip((2, 10), EXPECTED_COUNTS[name]):
        mesh = mesh_at(name, passes)
        assert (mesh.n_nodes, mesh.n_triangles, mesh.n_boundary) == expected
        assert mesh.triangle_areas().sum() == pytest.approx(dom.area, rel=1e-14)
    # each pass exactly doubles the triangles of these structured meshes
    assert mesh_at(name, 3).n_triangles == 2 * mesh_at(name, 2).n_triangles


@pytest.mark.parametrize("name", ["omega90", "omega135", "omega270"])
def test_uniform_bisection_halves_h_every_two_passes(name, mesh_at):
    h0 = mesh_size(mesh_at(name, 2))
    for p in (4, 6, 8):
        assert mesh_size(mesh_at(name, p)) == pytest.approx(
            h0 / 2 ** ((p - 2) // 2)
        )


@pytest.mark.parametrize("name", ["omega90", "omega135", "omega270"])
def test_bisection_preserves_shape_regularity(name, mesh_at):
    """Structured right-isosceles meshes stay exactly self-similar."""
    for p in range(0, 9):
        assert min_triangle_angle(mesh_at(name, p)) == pytest.approx(math.pi / 4)


def test_custom_triangle_shape_regularity():
    tri = PolygonalDomain([(0.0, 0.0), (1.0, 0.0), (-0.5, math.sqrt(3) / 2)])
    mesh = triangulate_custom(tri)
    for _ in range(8):
        mesh = bisect_refine(mesh)
        assert min_triangle_angle(mesh) >= math.pi / 6 - 1e-12


def test_boundary_chain_is_closed_and_ccw(mesh_at):
    for name in ("omega90", "omega135", "omega270"):
        mesh = mesh_at(name, 4)
        edges = mesh.boundary_edges
        assert np.array_equal(edges[:, 1], np.roll(edges[:, 0], -1))
        pts = mesh.node_coords[edges[:, 0]]
        nxt = mesh.node_coords[edges[:, 1]]
        # shoelace over the chain equals +2*area (counterclockwise)
        twice_area = float(np.sum(pts[:, 0] * nxt[:, 1] - nxt[:, 0] * pts[:, 1]))
        assert twice_area == pytest.approx(2 * mesh.domain.area)


def test_boundary_tags_follow_polygon_sides(mesh_at):
    mesh = mesh_at("omega90", 4)
    dom = mesh.domain
    normals = dom.edge_normals()
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_edge_tags):
        mid = 0.5 * (mesh.node_coords[a] + mesh.node_coords[b])
        v0 = dom.vertices[tag]
        # midpoint lies on the tagged polygon side
        assert abs(float(np.dot(mid - v0, normals[tag]))) < 1e-12


def test_interior_boundary_partition(mesh_at):
    mesh = mesh_at("omega135", 4)
    both = np.concatenate([mesh.interior_nodes, mesh.boundary_nodes])
    assert np.array_equal(np.sort(both), np.arange(mesh.n_nodes))
    assert mesh.n_interior + mesh.n_boundary == mesh.n_nodes
    assert not mesh.boundary_node_flags[mesh.interior_nodes].any()
    assert mesh.boundary_node_flags[mesh.boundary_nodes].all()


def test_prolongation_reproduces_linears(mesh_at):
    coarse = mesh_at("omega270", 4)
    fine = mesh_at("omega270", 6)
    f = lambda x, y: 2.0 * x - 3.0 * y + 0.5
    coarse_vals = nodal_interpolant(coarse, f).values
    lifted = prolongate(coarse_vals, coarse, fine)
    np.testing.assert_allclose(
        lifted, nodal_interpolant(fine, f).values, atol=1e-14
    )


def test_prolongation_composes_across_levels(mesh_at):
    m4, m6, m8 = (mesh_at("omega90", p) for p in (4, 6, 8))
    rng = np.random.default_rng(7)
    v = rng.standard_normal(m4.n_nodes)
    direct = prolongate(v, m4, m8)
    staged = prolongate(prolongate(v, m4, m6), m6, m8)
    np.testing.assert_array_equal(direct, staged)


def test_prolongation_rejects_unrelated_meshes(mesh_at):
    m = mesh_at("omega90", 4)
    other = mesh_at("omega270", 4)
    with pytest.raises(ValueError):
        prolongate(np.zeros(m.n_nodes), m, other)
    with pytest.raises(ValueError):
        prolongate(np.zeros(3), m, mesh_at("omega90", 6))


def test_save_load_round_trip(tmp_path, mesh_at):
    mesh = mesh_at("omega135", 4)
    path = tmp_path / "mesh.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.node_coords, mesh.node_coords)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_edges, mesh.boundary_edges)
    np.testing.assert_array_equal(back.boundary_edge_tags, mesh.boundary_edge_tags)


def test_constructor_rejects_bad_meshes():
    nodes = [(0, 0), (1, 0), (1, 1), (0, 1)]
    tris = [(0, 1, 2), (0, 2, 3)]
    bedges = [(0, 1), (1, 2), (2, 3), (3, 0)]
    tags = [0, 1, 2, 3]
    TriMesh(nodes, tris, bedges, tags)  # sanity: this one is fine

    with pytest.raises(ValueError, match="negatively oriented|degenerate"):
        TriMesh(nodes, [(0, 2, 1), (0, 2, 3)], bedges, tags)
    with pytest.raises(ValueError, match="boundary"):
        TriMesh(nodes, [(0, 1, 2)], bedges, tags)  # hole not on boundary list
    with pytest.raises(ValueError, match="chain"):
        TriMesh(nodes, tris, [(0, 1), (2, 3), (1, 2), (3, 0)], tags)
    with pytest.raises(ValueError):
        TriMesh(nodes, tris, bedges, [0, 1])  # tag count mismatch
    with pytest.raises(ValueError, match="out of range"):
        TriMesh(nodes, [(0, 1, 7), (0, 2, 3)], bedges, tags)


def test_triangulate_custom_hexagon():
    hexagon = PolygonalDomain(
        [(math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)) for k in range(6)]
    )
    mesh = triangulate_custom(hexagon)
    assert mesh.n_triangles == 4  # ear clipping gives n - 2 triangles
    assert mesh.triangle_areas().sum() == pytest.approx(hexagon.area)
    refined = bisect_refine(mesh)
    assert refined.triangle_areas().sum() == pytest.approx(hexagon.area)


def test_triangulate_custom_nonconvex():
    lshape = PolygonalDomain(
        [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    )
    mesh = triangulate_custom(lshape)
    assert mesh.triangle_areas().sum() == pytest.approx(3.0)
