import math

import numpy as np
import pytest
from conftest import polygon_area
from hypothesis import given
from hypothesis import strategies as st

from cavsolve.fem import BoundaryData, affine_field, is_admissible
from cavsolve.mesh import (
    MeshParams,
    build_annulus,
    dump_mesh,
    edge_geometry,
    fill_hole,
    interpolate,
    ring_radii,
)
from cavsolve.oracles import initializer_z_eps


@given(
    eps=st.floats(0.01, 0.9),
    n_r=st.integers(1, 12),
    n_theta=st.integers(3, 64),
    grading=st.floats(1.0, 1.3),
)
def test_areas_sum_to_polygonal_annulus(eps, n_r, n_theta, grading):
    mesh = build_annulus(eps, n_r, n_theta, grading)
    assert np.all(mesh.areas > 0)
    assert mesh.areas.sum() == pytest.approx(mesh.annulus_area, rel=1e-12)


def test_counts_and_boundaries():
    mesh = build_annulus(0.1, 4, 16)
    assert mesh.n_nodes == 5 * 16
    assert mesh.n_triangles == 2 * 4 * 16
    np.testing.assert_allclose(np.linalg.norm(mesh.nodes[mesh.inner_boundary], axis=1), 0.1)
    np.testing.assert_allclose(np.linalg.norm(mesh.nodes[mesh.outer_boundary], axis=1), 1.0)
    assert len(mesh.free_nodes) == mesh.n_nodes - 16
    assert not np.isin(mesh.outer_boundary, mesh.free_nodes).any()


def test_boundary_edges_belong_to_their_triangles():
    mesh = build_annulus(0.2, 3, 10)
    for edges, owners in (
        (mesh.inner_edges, mesh.inner_edge_triangles),
        (mesh.outer_edges, mesh.outer_edge_triangles),
    ):
        for edge, tri in zip(edges, owners):
            assert set(edge) <= set(mesh.triangles[tri])


def test_edge_normals_point_away_from_origin():
    mesh = build_annulus(0.3, 2, 12)
    for edges in (mesh.inner_edges, mesh.outer_edges):
        lengths, midpoints, normals = edge_geometry(mesh, edges)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
        assert np.all(np.sum(midpoints * normals, axis=1) > 0)
        assert lengths.sum() == pytest.approx(
            2 * np.linalg.norm(mesh.nodes[edges[0, 0]]) * 12 * math.sin(math.pi / 12)
        )


def test_polygon_areas():
    mesh = build_annulus(0.25, 2, 8)
    assert mesh.disk_area == pytest.approx(polygon_area(mesh.nodes[mesh.outer_boundary]))
    assert mesh.hole_area == pytest.approx(polygon_area(mesh.nodes[mesh.inner_boundary]))


def test_ring_radii_are_graded_from_the_hole():
    radii = ring_radii(0.1, 5, 1.2)
    assert radii[0] == 0.1
    assert radii[-1] == 1.0
    steps = np.diff(radii)
    np.testing.assert_allclose(steps[1:] / steps[:-1], 1.2)
    np.testing.assert_allclose(np.diff(ring_radii(0.2, 4, 1.0)), 0.2)


@pytest.mark.parametrize(
    "kwargs",
    [{"n_r": 0}, {"n_theta": 2}, {"grading": 0.9}, {"n_r": 2.5}],
)
def test_mesh_params_validation(kwargs):
    with pytest.raises(ValueError):
        MeshParams(**kwargs)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
def test_build_rejects_bad_eps(eps):
    with pytest.raises(ValueError, match="eps"):
        build_annulus(eps, 2, 8)


def test_refined_keeps_every_old_node():
    mesh = build_annulus(0.1, 4, 16, 1.1)
    fine = mesh.refined()
    assert (fine.n_r, fine.n_theta) == (8, 32)
    assert fine.grading == pytest.approx(math.sqrt(1.1))
    k, l = np.divmod(np.arange(mesh.n_nodes), 16)
    np.testing.assert_allclose(fine.nodes[2 * k * 32 + 2 * l], mesh.nodes, atol=1e-14)


def test_evaluate_reproduces_affine_fields(rng):
    mesh = build_annulus(0.1, 6, 24)
    M = np.array([[1.3, 0.2], [-0.1, 0.8]])
    angles = rng.uniform(0, 2 * math.pi, 200)
    radii = rng.uniform(0.1, 1.0, 200)
    points = radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    np.testing.assert_allclose(mesh.evaluate(mesh.nodes @ M.T, points), points @ M.T, atol=1e-12)


def test_locate_finds_containing_triangle(rng):
    mesh = build_annulus(0.1, 6, 24)
    angles = rng.uniform(0, 2 * math.pi, 200)
    radii = rng.uniform(0.15, 0.95, 200)
    points = radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    _, bary = mesh.locate(points)
    assert bary.min() > -1e-12
    np.testing.assert_allclose(bary.sum(axis=1), 1.0)


def test_interpolate_affine_field_clamps_the_old_hole():
    boundary = BoundaryData(1.1, 1.4)
    old = build_annulus(0.2, 6, 32, 1.0)
    new = build_annulus(0.05, 12, 32, 1.0)
    moved = interpolate(affine_field(old, boundary), new)
    radius = np.linalg.norm(new.nodes, axis=1)
    outside = radius >= 0.2
    np.testing.assert_allclose(moved.values[outside], new.nodes[outside] @ boundary.matrix.T, atol=1e-12)
    inside = ~outside
    clamped = new.nodes[inside] * (0.2 / radius[inside])[:, None]
    np.testing.assert_allclose(moved.values[inside], clamped @ boundary.matrix.T, atol=1e-12)
    np.testing.assert_array_equal(
        moved.values[new.outer_boundary], new.nodes[new.outer_boundary] @ boundary.matrix.T
    )


def test_interpolate_only_shrinks_the_hole():
    boundary = BoundaryData()
    field = affine_field(build_annulus(0.05, 2, 8), boundary)
    with pytest.raises(ValueError, match="shrinks"):
        interpolate(field, build_annulus(0.1, 2, 8))


def test_fill_hole_repairs_collapsed_warm_start(stretch, volume):
    old = build_annulus(0.1, 8, 48)
    new = build_annulus(0.02, 16, 48, 1.0)
    warm = interpolate(initializer_z_eps(old, stretch, volume), new)
    assert not is_admissible(new, warm)
    filled = fill_hole(warm, 0.1, 1.5)
    assert is_admissible(new, filled)
    untouched = np.linalg.norm(new.nodes, axis=1) >= 0.1
    np.testing.assert_array_equal(filled.values[untouched], warm.values[untouched])


def test_fill_hole_without_hole_nodes_is_identity(stretch):
    field = affine_field(build_annulus(0.1, 2, 8), stretch)
    assert fill_hole(field, 0.1, 1.0) is field


def test_dump_mesh_writes_nodes_and_triangles(tmp_path):
    import pandas as pd

    mesh = build_annulus(0.1, 2, 8)
    node_path, tri_path = dump_mesh(mesh, tmp_path, "_eps_0.1")
    nodes = pd.read_csv(node_path)
    triangles = pd.read_csv(tri_path)
    assert list(nodes.columns) == ["node_id", "x", "y", "boundary_tag"]
    assert list(triangles.columns) == ["tri_id", "n0", "n1", "n2"]
    assert (nodes["boundary_tag"] == "inner").sum() == 8
    assert (nodes["boundary_tag"] == "outer").sum() == 8
    assert len(triangles) == mesh.n_triangles
