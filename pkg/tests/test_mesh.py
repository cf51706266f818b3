"""Icosphere topology, quality, masses, stiffness, and prolongation."""

import numpy as np
import pytest

from hypembed.mesh import build_icosphere, prolong


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_counts_and_euler(level):
    m = build_icosphere(level)
    assert m.nv == 10 * 4**level + 2
    assert m.ne == 3 * m.nv - 6
    assert m.nf == 2 * m.nv - 4
    assert m.nv - m.ne + m.nf == 2


def test_vertices_on_unit_sphere(mesh3):
    np.testing.assert_allclose(np.linalg.norm(mesh3.vertices, axis=1), 1.0, rtol=0, atol=1e-14)


def test_edges_sorted_unique(mesh3):
    e = mesh3.edges
    assert np.all(e[:, 0] < e[:, 1])
    assert len(np.unique(e[:, 0] * mesh3.nv + e[:, 1])) == mesh3.ne


def test_orientation_consistent(mesh2):
    """Each directed edge appears exactly once across all faces."""
    f = mesh2.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    keys = directed[:, 0] * mesh2.nv + directed[:, 1]
    assert len(np.unique(keys)) == len(keys)
    # and its reverse also appears exactly once
    rev = directed[:, 1] * mesh2.nv + directed[:, 0]
    assert np.array_equal(np.sort(keys), np.sort(rev))


def test_positive_orientation(mesh2):
    tri = mesh2.vertices[mesh2.faces]
    vol = np.einsum("fi,fi->f", np.cross(tri[:, 0], tri[:, 1]), tri[:, 2])
    assert np.all(vol > 0)


def test_valences(mesh3):
    val = mesh3.vertex_valences()
    assert np.sum(val == 5) == 12
    assert np.sum(val == 6) == mesh3.nv - 12


def test_min_angle_bounded(mesh4):
    assert mesh4.min_angle > np.radians(30)


def test_edge_length_halves():
    h = [build_icosphere(l).max_edge for l in (1, 2, 3)]
    assert 0.45 < h[1] / h[0] < 0.55
    assert 0.45 < h[2] / h[1] < 0.55


def test_face_edge_indices(mesh2):
    fe = mesh2.face_edge_indices
    for k, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
        lo = np.minimum(mesh2.faces[:, a], mesh2.faces[:, b])
        hi = np.maximum(mesh2.faces[:, a], mesh2.faces[:, b])
        assert np.array_equal(mesh2.edges[fe[:, k], 0], lo)
        assert np.array_equal(mesh2.edges[fe[:, k], 1], hi)


def test_spherical_areas_sum(mesh3):
    assert abs(np.sum(mesh3.face_area_spherical) - 4 * np.pi) < 1e-10
    assert abs(np.sum(mesh3.mass) - 4 * np.pi) < 1e-10
    assert np.all(mesh3.face_area_pl < mesh3.face_area_spherical)


def test_stiffness_symmetric_psd_annihilates_constants(mesh3, rng):
    s = mesh3.stiffness
    x = rng.normal(size=mesh3.nv)
    y = rng.normal(size=mesh3.nv)
    assert abs(x @ (s @ y) - y @ (s @ x)) < 1e-10
    assert x @ (s @ x) >= -1e-12
    assert np.max(np.abs(s @ np.ones(mesh3.nv))) < 1e-12


def test_ring_neighborhoods(mesh2):
    """ring1 matches edge adjacency; ring2 contains ring1."""
    adj = [set() for _ in range(mesh2.nv)]
    for a, b in mesh2.edges:
        adj[a].add(b)
        adj[b].add(a)
    for v in range(0, mesh2.nv, 17):
        r1 = set(mesh2.ring1_indices[mesh2.ring1_indptr[v]:mesh2.ring1_indptr[v + 1]])
        r2 = set(mesh2.ring2_indices[mesh2.ring2_indptr[v]:mesh2.ring2_indptr[v + 1]])
        assert r1 - {v} == adj[v]
        assert r1 <= r2


def test_frames_orthonormal_tangent(mesh3):
    v, e1, e2 = mesh3.vertices, mesh3.frame1, mesh3.frame2
    assert np.max(np.abs(np.einsum("vi,vi->v", e1, v))) < 1e-12
    assert np.max(np.abs(np.einsum("vi,vi->v", e2, v))) < 1e-12
    assert np.max(np.abs(np.einsum("vi,vi->v", e1, e2))) < 1e-12
    np.testing.assert_allclose(np.linalg.norm(e1, axis=1), 1.0, rtol=0, atol=1e-12)


def test_prolong_coarse_values(mesh2, mesh3):
    vals = mesh2.vertices[:, 2] ** 2 - mesh2.vertices[:, 0]
    fine = prolong(vals, mesh3)
    assert len(fine) == mesh3.nv
    np.testing.assert_allclose(fine[: mesh2.nv], vals, rtol=0, atol=0)
    with pytest.raises(ValueError, match="coarse values"):
        prolong(vals[:-1], mesh3)


def test_prolong_requires_subdivision_record():
    with pytest.raises(ValueError, match="subdivision"):
        prolong(np.zeros(12), build_icosphere(0))
