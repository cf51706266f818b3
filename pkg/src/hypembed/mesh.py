"""Icosphere domain meshes and reference-sphere discrete operators.

The parameter domain for every metric and surface is a subdivided icosahedron
projected to the unit sphere: 10 * 4^level + 2 vertices, all faces oriented
outward.  The mesh carries per-vertex Euclidean-orthonormal tangent frames,
lumped masses from exact spherical triangle areas (so Gauss-Bonnet holds to
roundoff), the PL cotangent stiffness matrix, and batched least-squares fit
operators in geodesic normal coordinates for pointwise gradients and Hessians.

Vertex fields follow fixed shape conventions: scalar (V,), tangent vector
(V, 2) with components in the stored frame, symmetric 2-tensor (V, 2, 2).
"""

from __future__ import annotations

from functools import lru_cache, cached_property

import numpy as np
import scipy.sparse as sp

from . import fitting

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0

MAX_LEVEL = 8


class SphereMesh:
    """Immutable triangulated unit sphere with cached discrete operators."""

    def __init__(self, vertices, faces, level):
        self.level = level
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.nv = len(self.vertices)
        self.nf = len(self.faces)
        self._build_topology()
        self._build_frames()
        self._check_quality()
        for arr in (self.vertices, self.faces, self.edges, self.ring1_indices, self.ring1_indptr):
            arr.setflags(write=False)

    # ---- construction ------------------------------------------------

    def _build_topology(self):
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        self.edges = np.unique(pairs, axis=0)
        self.ne = len(self.edges)
        if self.ne != 3 * self.nv - 6:
            raise ValueError("mesh is not a closed sphere triangulation")

        adj = sp.coo_matrix(
            (np.ones(2 * self.ne), (np.concatenate([self.edges[:, 0], self.edges[:, 1]]),
                                    np.concatenate([self.edges[:, 1], self.edges[:, 0]]))),
            shape=(self.nv, self.nv),
        ).tocsr()
        adj.sum_duplicates()
        self.ring1_indptr = adj.indptr.copy()
        self.ring1_indices = adj.indices.copy()

        ring2 = (adj + adj @ adj).tocsr()
        ring2.setdiag(0.0)
        ring2.eliminate_zeros()
        self.ring2_indptr = ring2.indptr.copy()
        self.ring2_indices = ring2.indices.copy()

    def _build_frames(self):
        n = self.vertices
        axis = np.tile(np.array([0.0, 0.0, 1.0]), (self.nv, 1))
        proj = axis - (n * axis).sum(axis=1, keepdims=True) * n
        bad = np.linalg.norm(proj, axis=1) < 1e-3
        if np.any(bad):
            alt = np.tile(np.array([1.0, 0.0, 0.0]), (bad.sum(), 1))
            proj[bad] = alt - (n[bad] * alt).sum(axis=1, keepdims=True) * n[bad]
        e1 = proj / np.linalg.norm(proj, axis=1, keepdims=True)
        e2 = np.cross(n, e1)
        self.frame1, self.frame2 = e1, e2

    def _check_quality(self):
        v = self.vertices
        tri = v[self.faces]
        # outward orientation: signed volume of each corner tetrahedron positive
        vol = np.einsum("fi,fi->f", np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), tri[:, 0])
        if np.any(vol <= 0):
            raise ValueError("faces are not consistently outward oriented")
        a = tri[:, 1] - tri[:, 0]
        b = tri[:, 2] - tri[:, 0]
        c = tri[:, 2] - tri[:, 1]
        la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
        angles = []
        angles.append(np.arccos(np.clip(np.einsum("fi,fi->f", a, b) / (la * lb), -1, 1)))
        angles.append(np.arccos(np.clip(np.einsum("fi,fi->f", -a, c) / (la * lc), -1, 1)))
        angles.append(np.pi - angles[0] - angles[1])
        self.min_angle = float(np.min(angles))
        if self.min_angle < np.deg2rad(20.0):
            raise ValueError(f"minimum face angle {np.rad2deg(self.min_angle):.2f} deg below 20 deg")
        self.max_edge = float(np.max(np.linalg.norm(v[self.edges[:, 0]] - v[self.edges[:, 1]], axis=1)))

    @cached_property
    def face_edge_indices(self):
        """(nf, 3) edge ids per face for edges (v0,v1), (v0,v2), (v1,v2)."""
        keys = self.edges[:, 0] * self.nv + self.edges[:, 1]  # rows are sorted pairs
        f = self.faces
        out = np.empty((self.nf, 3), dtype=np.int64)
        for k, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
            lo = np.minimum(f[:, a], f[:, b])
            hi = np.maximum(f[:, a], f[:, b])
            out[:, k] = np.searchsorted(keys, lo * self.nv + hi)
        return out

    # ---- masses and stiffness ----------------------------------------

    @cached_property
    def face_area_spherical(self):
        """Exact geodesic triangle areas via l'Huilier; sums to 4 pi."""
        tri = self.vertices[self.faces]
        d = lambda p, q: np.arccos(np.clip(np.einsum("fi,fi->f", p, q), -1.0, 1.0))
        a, b, c = d(tri[:, 1], tri[:, 2]), d(tri[:, 0], tri[:, 2]), d(tri[:, 0], tri[:, 1])
        s = 0.5 * (a + b + c)
        t = np.sqrt(
            np.maximum(
                np.tan(0.5 * s) * np.tan(0.5 * (s - a)) * np.tan(0.5 * (s - b)) * np.tan(0.5 * (s - c)),
                0.0,
            )
        )
        return 4.0 * np.arctan(t)

    @cached_property
    def face_area_pl(self):
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @cached_property
    def mass(self):
        """Barycentric lumped vertex mass from spherical face areas."""
        m = np.zeros(self.nv)
        np.add.at(m, self.faces.ravel(), np.repeat(self.face_area_spherical / 3.0, 3))
        return m

    @cached_property
    def stiffness(self):
        """PL cotangent stiffness; phi^T S phi is the Dirichlet energy (conformally invariant)."""
        v = self.vertices
        f = self.faces
        ii, jj, vals = [], [], []
        for k in range(3):
            i, j, o = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
            e1 = v[i] - v[o]
            e2 = v[j] - v[o]
            cross = np.linalg.norm(np.cross(e1, e2), axis=1)
            cot = 0.5 * np.einsum("fi,fi->f", e1, e2) / cross
            ii.extend([i, j, i, j])
            jj.extend([j, i, i, j])
            vals.extend([-cot, -cot, cot, cot])
        ii = np.concatenate(ii)
        jj = np.concatenate(jj)
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (ii, jj)), shape=(self.nv, self.nv))

    # ---- fit operators in spherical normal coordinates ----------------

    def _log_coords(self, indices, indptr):
        n = self.vertices
        centers = np.repeat(np.arange(self.nv), np.diff(indptr))
        ni, nj = n[centers], n[indices]
        dot = np.clip(np.einsum("ki,ki->k", ni, nj), -1.0, 1.0)
        theta = np.arccos(dot)
        t = nj - dot[:, None] * ni
        tn = np.linalg.norm(t, axis=1)
        t = np.where(tn[:, None] > 1e-300, t / np.maximum(tn, 1e-300)[:, None], 0.0)
        xi1 = theta * np.einsum("ki,ki->k", t, self.frame1[centers])
        xi2 = theta * np.einsum("ki,ki->k", t, self.frame2[centers])
        return np.stack([xi1, xi2], axis=1)

    @cached_property
    def fit_operators(self):
        """Sparse (d1, d2, h11, h12, h22) acting on vertex scalars, unit-sphere chart."""
        coords = self._log_coords(self.ring2_indices, self.ring2_indptr)
        return fitting.derivative_operators(coords, self.ring2_indices, self.ring2_indptr, "cubic")

    # ---- conveniences -------------------------------------------------

    def vertex_valences(self):
        return np.diff(self.ring1_indptr)


def _icosahedron():
    p = GOLDEN
    verts = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return verts, faces


def _subdivide(verts, faces):
    cache = {}
    verts = list(map(np.array, verts))
    midpoint_edges = []

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            m /= np.linalg.norm(m)
            verts.append(m)
            midpoint_edges.append(key)
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]])
    return np.array(verts), np.array(out, dtype=np.int64), np.array(midpoint_edges, dtype=np.int64)


@lru_cache(maxsize=None)
def build_icosphere(level):
    """Subdivided icosahedron at the given level (cached; arrays are read-only)."""
    if not (0 <= level <= MAX_LEVEL):
        raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {level}")
    verts, faces = _icosahedron()
    midpoint_edges = None
    for _ in range(level):
        verts, faces, midpoint_edges = _subdivide(verts, faces)
    mesh = SphereMesh(verts, faces, level)
    mesh._midpoint_edges = midpoint_edges
    return mesh


def prolong(values, fine_mesh):
    """Prolong coarse vertex values one subdivision level up.

    Fine vertices are the coarse vertices followed by edge midpoints, so the
    prolongation averages the parent edge endpoints.
    """
    me = fine_mesh._midpoint_edges
    if me is None:
        raise ValueError("fine mesh has no subdivision record")
    ncoarse = fine_mesh.nv - len(me)
    values = np.asarray(values, dtype=float)
    if len(values) != ncoarse:
        raise ValueError(f"expected {ncoarse} coarse values, got {len(values)}")
    return np.concatenate([values, 0.5 * (values[me[:, 0]] + values[me[:, 1]])])
