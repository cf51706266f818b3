"""Extrinsic geometry of a triangulated sphere embedded in the curved chart.

An EmbeddedSurface couples a SphereMesh (combinatorics plus reference unit
positions) with per-vertex chart positions.  All extrinsic quantities follow
one set of conventions:

* faces are oriented outward, the vertex normal nu is outward and g-unit;
* tangent frames (t1, t2, nu) are g-orthonormal and right-handed;
* the second fundamental form is h_ab = g(D_a nu, t_b), so a convex surface
  containing the origin has h positive definite (round sphere: h = (f/r0) I).

Derivative estimation happens in ambient log-map coordinates projected to the
tangent plane.  Scalar fields use the shared cubic least-squares operators;
frame-component fields (h, prescribed bilinear forms) are compared across
vertices by closed-form ambient parallel transport of the frames, which makes
the fitted derivatives frame-covariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fitting

_TINY = 1e-300


def _mink(u, v):
    return -u[..., 0] * v[..., 0] + np.sum(u[..., 1:] * v[..., 1:], axis=-1)


def hyperboloid_points(chart, x):
    x = np.asarray(x, dtype=float)
    p0 = chart.f(x) / np.sqrt(chart.kappa)
    return np.concatenate([p0[..., None], x], axis=-1)


def _cosh_minus_one(chart, x, y):
    """cosh(sqrt(kappa) d(x, y)) - 1 without cancellation for close points."""
    k = chart.kappa
    fx, fy = chart.f(x), chart.f(y)
    df = k * (np.sum(x * x, axis=-1) - np.sum(y * y, axis=-1)) / (fx + fy)
    return 0.5 * (k * np.sum((x - y) ** 2, axis=-1) - df * df)


def log_map(chart, x, y):
    """Chart components of the ambient log map at x pointing to y (batched)."""
    c1 = np.maximum(_cosh_minus_one(chart, x, y), 0.0)
    sh = np.sqrt(c1 * (c1 + 2.0))
    theta = np.log1p(c1 + sh)
    scale = np.where(theta > 1e-12, theta / np.maximum(sh, _TINY), 1.0)
    return scale[..., None] * (y - (1.0 + c1)[..., None] * x)


def edge_lengths(chart, x, y):
    c1 = np.maximum(_cosh_minus_one(chart, x, y), 0.0)
    return np.log1p(c1 + np.sqrt(c1 * (c1 + 2.0))) / np.sqrt(chart.kappa)


def parallel_transport(chart, x_from, x_to, v):
    """Closed-form Levi-Civita transport along the geodesic (batched)."""
    rk = np.sqrt(chart.kappa)
    p = rk * hyperboloid_points(chart, x_from)
    q = rk * hyperboloid_points(chart, x_to)
    v4 = np.asarray(chart.lift_vector(x_from, v), dtype=float)
    c1 = np.maximum(_cosh_minus_one(chart, x_from, x_to), 0.0)
    coef = _mink(q, v4) / (2.0 + c1)
    out = v4 + coef[..., None] * (p + q)
    return out[..., 1:]


def _segment_dot(weights, data, indptr):
    """Per-vertex dot of CSR-aligned weights with data (trailing axes kept)."""
    prod = weights.reshape(weights.shape + (1,) * (data.ndim - 1)) * data
    return np.add.reduceat(prod, indptr[:-1], axis=0)


@dataclass(frozen=True)
class SupportCheck:
    min_support: float
    min_radius: float
    gap: float
    skipped: bool = False
    reason: str = ""


@dataclass(frozen=True)
class CurvatureMonitor:
    """Convexity test function log(lambda) + alpha |x|^2 / 2 and its inputs."""

    test_function: np.ndarray
    argmax_vertex: int
    max_mean_curvature: float
    max_f: float
    curv_c0: float
    curv_c1: float
    curv_c2: float
    small_anisotropy_branch: bool


class EmbeddedSurface:
    """Immutable snapshot of an embedded triangulated sphere."""

    def __init__(self, chart, mesh, positions):
        self.chart = chart
        self.mesh = mesh
        positions = np.array(positions, dtype=float)
        if positions.shape != (mesh.nv, 3):
            raise ValueError(f"positions must have shape ({mesh.nv}, 3)")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions contain non-finite entries")
        positions.setflags(write=False)
        self.positions = positions
        self.nv = mesh.nv
        # eager so degenerate geometry fails at construction
        self.face_grams, self.face_areas = self._build_face_metric()

    # ---- per-face geometry -------------------------------------------

    @cached_property
    def face_centroids(self):
        return self.positions[self.mesh.faces].mean(axis=1)

    @cached_property
    def face_edges(self):
        tri = self.positions[self.mesh.faces]
        return np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=1)

    def _build_face_metric(self):
        g = self.chart.metric(self.face_centroids)
        d = self.face_edges
        grams = np.einsum("fai,fij,fbj->fab", d, g, d)
        det = grams[:, 0, 0] * grams[:, 1, 1] - grams[:, 0, 1] ** 2
        areas = 0.5 * np.sqrt(np.maximum(det, 0.0))
        if np.any(areas < 1e-14):
            bad = int(np.argmin(areas))
            raise ValueError(f"degenerate face {bad}: area {areas[bad]:.3e}")
        return grams, areas

    @cached_property
    def face_normals(self):
        c = self.face_centroids
        d = self.face_edges
        n = self.chart.cross(c, d[:, 0], d[:, 1])
        return n / self.chart.norm(c, n)[:, None]

    @cached_property
    def vertex_masses(self):
        m = np.zeros(self.nv)
        np.add.at(m, self.mesh.faces.ravel(), np.repeat(self.face_areas / 3.0, 3))
        return m

    @cached_property
    def area(self):
        return float(self.face_areas.sum())

    # ---- ambient data at vertices ------------------------------------

    @cached_property
    def f(self):
        return self.chart.f(self.positions)

    @cached_property
    def conformal_position(self):
        return self.f[:, None] * self.positions

    @cached_property
    def ambient_metric(self):
        return self.chart.metric(self.positions)

    def _g(self, u, v):
        return np.einsum("vij,vi,vj->v", self.ambient_metric, u, v)

    def _gnormalize(self, u):
        return u / np.sqrt(np.maximum(self._g(u, u), _TINY))[:, None]

    # ---- normals and frames ------------------------------------------

    @cached_property
    def _vertex_face_csr(self):
        f = self.mesh.faces
        mat = sp.coo_matrix(
            (np.ones(3 * self.mesh.nf), (f.ravel(), np.repeat(np.arange(self.mesh.nf), 3))),
            shape=(self.nv, self.mesh.nf),
        ).tocsr()
        return mat.indices, mat.indptr

    @cached_property
    def _area_normal_estimate(self):
        idx, ptr = self._vertex_face_csr
        acc = _segment_dot(self.face_areas[idx], self.face_normals[idx], ptr)
        return self._gnormalize(acc)

    @cached_property
    def normals(self):
        """Outward g-unit normals: area average refined by one quadric fit."""
        nu0 = self._area_normal_estimate
        t1 = self.mesh.frame1 - self._g(self.mesh.frame1, nu0)[:, None] * nu0
        t1 = self._gnormalize(t1)
        t2 = self.chart.cross(self.positions, nu0, t1)
        t2 = self._gnormalize(t2)

        idx = self.mesh.ring2_indices
        ptr = self.mesh.ring2_indptr
        center = np.repeat(np.arange(self.nv), np.diff(ptr))
        w = log_map(self.chart, self.positions[center], self.positions[idx])
        gc = self.ambient_metric[center]
        xi = np.einsum("nij,ni,nj->n", gc, w, t1[center])
        zeta = np.einsum("nij,ni,nj->n", gc, w, t2[center])
        eta = np.einsum("nij,ni,nj->n", gc, w, nu0[center])
        coords = np.stack([xi, zeta], axis=1)
        rows = fitting.fit_weight_rows(coords, ptr, "quadratic")
        a1 = np.add.reduceat(rows[0] * eta, ptr[:-1])
        a2 = np.add.reduceat(rows[1] * eta, ptr[:-1])
        return self._gnormalize(nu0 - a1[:, None] * t1 - a2[:, None] * t2)

    @cached_property
    def _reference_differential(self):
        coords = self.mesh._log_coords(self.mesh.ring1_indices, self.mesh.ring1_indptr)
        return fitting.derivative_operators(
            coords, self.mesh.ring1_indices, self.mesh.ring1_indptr, "linear"
        )

    @cached_property
    def frames(self):
        """Right-handed g-orthonormal (t1, t2) spanning the tangent planes."""
        d1, d2 = self._reference_differential
        nu = self.normals
        t1 = d1 @ self.positions
        t1 -= self._g(t1, nu)[:, None] * nu
        norms = np.sqrt(np.maximum(self._g(t1, t1), 0.0))
        if np.any(norms < 1e-12):
            raise ValueError("degenerate tangent frame; surface is folded")
        t1 /= norms[:, None]
        t2 = d2 @ self.positions
        t2 -= self._g(t2, nu)[:, None] * nu
        t2 -= self._g(t2, t1)[:, None] * t1
        norms = np.sqrt(np.maximum(self._g(t2, t2), 0.0))
        if np.any(norms < 1e-12):
            raise ValueError("degenerate tangent frame; surface is folded")
        t2 /= norms[:, None]
        orient = self._g(self.chart.cross(self.positions, t1, t2), nu)
        t2[orient < 0.0] *= -1.0
        return t1, t2

    # ---- tangent-plane fit coordinates --------------------------------

    def _ring_logcoords(self, indices, indptr):
        center = np.repeat(np.arange(self.nv), np.diff(indptr))
        w = log_map(self.chart, self.positions[center], self.positions[indices])
        gc = self.ambient_metric[center]
        t1, t2 = self.frames
        xi = np.einsum("nij,ni,nj->n", gc, w, t1[center])
        zeta = np.einsum("nij,ni,nj->n", gc, w, t2[center])
        return np.stack([xi, zeta], axis=1)

    @cached_property
    def _ring1_logcoords(self):
        return self._ring_logcoords(self.mesh.ring1_indices, self.mesh.ring1_indptr)

    @cached_property
    def _ring2_logcoords(self):
        return self._ring_logcoords(self.mesh.ring2_indices, self.mesh.ring2_indptr)

    @cached_property
    def _ring2_cubic_rows(self):
        return fitting.fit_weight_rows(
            self._ring2_logcoords, self.mesh.ring2_indptr, "cubic")

    @cached_property
    def fit_operators(self):
        """Sparse [d1, d2, h11, h12, h22] for scalar fields on the surface."""
        return fitting.rows_to_operators(
            self._ring2_cubic_rows, self.mesh.ring2_indices,
            self.mesh.ring2_indptr, self.nv)

    def scalar_gradient(self, field):
        ops = self.fit_operators
        return np.stack([ops[0] @ field, ops[1] @ field], axis=1)

    def scalar_hessian(self, field):
        ops = self.fit_operators
        out = np.empty((self.nv, 2, 2))
        out[:, 0, 0] = ops[2] @ field
        out[:, 0, 1] = out[:, 1, 0] = ops[3] @ field
        out[:, 1, 1] = ops[4] @ field
        return out

    # ---- shape operator ----------------------------------------------

    @cached_property
    def _ring1_center(self):
        return np.repeat(np.arange(self.nv), np.diff(self.mesh.ring1_indptr))

    @cached_property
    def second_fundamental_form(self):
        """h_ab in the vertex frames from a 1-ring normal-transport fit."""
        idx = self.mesh.ring1_indices
        ptr = self.mesh.ring1_indptr
        center = self._ring1_center
        moved = parallel_transport(
            self.chart, self.positions[idx], self.positions[center], self.normals[idx]
        )
        delta = moved - self.normals[center]
        xi = self._ring1_logcoords
        a11 = np.add.reduceat(xi[:, 0] * xi[:, 0], ptr[:-1])
        a12 = np.add.reduceat(xi[:, 0] * xi[:, 1], ptr[:-1])
        a22 = np.add.reduceat(xi[:, 1] * xi[:, 1], ptr[:-1])
        mat = np.empty((self.nv, 2, 2))
        mat[:, 0, 0], mat[:, 0, 1] = a11, a12
        mat[:, 1, 0], mat[:, 1, 1] = a12, a22
        det = a11 * a22 - a12 * a12
        if np.any(det < 1e-18):
            bad = np.nonzero(det < 1e-18)[0]
            raise ValueError(f"rank-deficient shape fit at vertices {bad[:5]}")
        mat += fitting.TIKHONOV * (a11 + a22)[:, None, None] * np.eye(2)
        rhs = np.stack(
            [_segment_dot(xi[:, 0], delta, ptr), _segment_dot(xi[:, 1], delta, ptr)], axis=1
        )
        u = np.linalg.solve(mat, rhs)
        t1, t2 = self.frames
        h = np.empty((self.nv, 2, 2))
        for a in range(2):
            h[:, a, 0] = self._g(u[:, a], t1)
            h[:, a, 1] = self._g(u[:, a], t2)
        return 0.5 * (h + np.transpose(h, (0, 2, 1)))

    @cached_property
    def _shape_quadratic(self):
        """h_ab from a ring-2 quadratic normal-transport fit.

        Smoother error than the 1-ring estimate; used where the shape
        operator gets differentiated, so the derivative converges.
        """
        idx = self.mesh.ring2_indices
        ptr = self.mesh.ring2_indptr
        center = np.repeat(np.arange(self.nv), np.diff(ptr))
        moved = parallel_transport(
            self.chart, self.positions[idx], self.positions[center], self.normals[idx]
        )
        delta = moved - self.normals[center]
        t1, t2 = self.frames
        gc = self.ambient_metric[center]
        y1 = np.einsum("nij,ni,nj->n", gc, delta, t1[center])
        y2 = np.einsum("nij,ni,nj->n", gc, delta, t2[center])
        rows = fitting.fit_weight_rows(self._ring2_logcoords, ptr, "quadratic")
        h = np.empty((self.nv, 2, 2))
        h[:, 0, 0] = _segment_dot(rows[0], y1, ptr)
        h[:, 1, 0] = _segment_dot(rows[1], y1, ptr)
        h[:, 0, 1] = _segment_dot(rows[0], y2, ptr)
        h[:, 1, 1] = _segment_dot(rows[1], y2, ptr)
        return 0.5 * (h + np.transpose(h, (0, 2, 1)))

    @cached_property
    def principal_curvatures(self):
        """(lambda, mu) with lambda >= mu."""
        ev = np.linalg.eigvalsh(self.second_fundamental_form)
        return ev[:, 1], ev[:, 0]

    @cached_property
    def mean_curvature(self):
        h = self.second_fundamental_form
        return h[:, 0, 0] + h[:, 1, 1]

    @cached_property
    def is_convex(self):
        return bool(self.principal_curvatures[1].min() > 0.0)

    @cached_property
    def support_function(self):
        return self._g(self.conformal_position, self.normals)

    @cached_property
    def radius(self):
        return np.linalg.norm(self.positions, axis=1)

    # ---- intrinsic curvature -----------------------------------------

    @cached_property
    def intrinsic_edge_lengths(self):
        """Per-edge geodesic length estimated from ambient distance.

        Chord lengths carry a systematic cubic shortening that shifts every
        developed corner angle by the same order as the angle defect itself,
        which leaves an O(1) curvature error at the twelve valence-5
        vertices.  Stretching each chord by the circular-arc factor
        (theta/2)/sin(theta/2), with theta the turning of the surface normal
        resolved in the plane of the normal and the tangential edge
        direction, removes that bias; the factor is exact on coordinate
        spheres.
        """
        chart = self.chart
        edges = self.mesh.edges
        chord = edge_lengths(
            chart, self.positions[edges[:, 0]], self.positions[edges[:, 1]])

        def turning(a, b):
            xa = self.positions[a]
            nu = self.normals[a]
            u = log_map(chart, xa, self.positions[b])
            # chord direction dips below the tangent plane by half the
            # turning angle; project out the normal part first
            ut = u - chart.inner(xa, u, nu)[:, None] * nu
            ut = ut / chart.norm(xa, ut)[:, None]
            pn = parallel_transport(chart, self.positions[b], xa, self.normals[b])
            return np.abs(np.arctan2(chart.inner(xa, pn, ut),
                                     chart.inner(xa, pn, nu)))

        half = 0.25 * (turning(edges[:, 0], edges[:, 1])
                       + turning(edges[:, 1], edges[:, 0]))
        factor = np.where(half > 1e-12,
                          half / np.sin(np.maximum(half, 1e-300)), 1.0)
        return chord * factor

    @cached_property
    def _face_edge_ids(self):
        """Index of each face side in the sorted mesh edge list."""
        edges = self.mesh.edges
        faces = self.mesh.faces
        key = edges[:, 0].astype(np.int64) * self.nv + edges[:, 1]
        out = np.empty((self.mesh.nf, 3), dtype=np.int64)
        for col, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
            lo = np.minimum(faces[:, a], faces[:, b]).astype(np.int64)
            hi = np.maximum(faces[:, a], faces[:, b])
            out[:, col] = np.searchsorted(key, lo * self.nv + hi)
        return out

    @cached_property
    def gauss_curvature(self):
        """Angle defect of the corrected-length metric over barycentric areas."""
        lint = self.intrinsic_edge_lengths[self._face_edge_ids]
        l01, l02, l12 = lint[:, 0], lint[:, 1], lint[:, 2]

        def corner(a, b, c):
            return np.arccos(np.clip((a * a + b * b - c * c) / (2.0 * a * b),
                                     -1.0, 1.0))

        ang = np.stack([corner(l01, l02, l12), corner(l01, l12, l02),
                        corner(l02, l12, l01)], axis=1)
        total = np.zeros(self.nv)
        np.add.at(total, self.mesh.faces.ravel(), ang.ravel())
        s = 0.5 * (l01 + l02 + l12)
        area = np.sqrt(np.maximum(s * (s - l01) * (s - l02) * (s - l12), 0.0))
        mass = np.zeros(self.nv)
        np.add.at(mass, self.mesh.faces.ravel(), np.repeat(area / 3.0, 3))
        return (2.0 * np.pi - total) / mass

    # ---- induced metric in vertex frames -----------------------------

    @cached_property
    def _corner_frame_coefs(self):
        """Coordinates of (t1, t2) of each corner vertex in the face edge basis."""
        faces = self.mesh.faces
        g = self.chart.metric(self.face_centroids)
        d = self.face_edges
        t1, t2 = self.frames
        coefs = np.empty((self.mesh.nf, 3, 2, 2))
        ginv = np.linalg.inv(self.face_grams)
        for corner in range(3):
            tv = np.stack([t1[faces[:, corner]], t2[faces[:, corner]]], axis=1)
            proj = np.einsum("fij,fai,fbj->fab", g, d, tv)
            coefs[:, corner] = np.einsum("fab,fbc->fca", ginv, proj)
        return coefs

    @cached_property
    def _vertex_face_corner(self):
        idx, ptr = self._vertex_face_csr
        centers = np.repeat(np.arange(self.nv), np.diff(ptr))
        return np.argmax(self.mesh.faces[idx] == centers[:, None], axis=1)

    @cached_property
    def _face_value_rows(self):
        """Linear-fit rows reconstructing face-centroid samples at vertices."""
        idx, ptr = self._vertex_face_csr
        centers = np.repeat(np.arange(self.nv), np.diff(ptr))
        w = log_map(self.chart, self.positions[centers], self.face_centroids[idx])
        gc = self.ambient_metric[centers]
        t1, t2 = self.frames
        xi = np.einsum("nij,ni,nj->n", gc, w, t1[centers])
        zeta = np.einsum("nij,ni,nj->n", gc, w, t2[centers])
        return fitting.value_fit_rows(np.stack([xi, zeta], axis=1), ptr)

    def faces_to_vertex_form(self, face_forms):
        """Reconstruct a per-face bilinear form at vertices in frame components.

        Linear least-squares in centroid tangent coordinates; the plain area
        average carries an O(h) centroid-offset bias whose roughness wrecks
        any derivative taken afterwards.
        """
        idx, ptr = self._vertex_face_csr
        corner = self._vertex_face_corner
        coefs = self._corner_frame_coefs[idx, corner]
        contrib = np.einsum("nax,nxy,nby->nab", coefs, face_forms[idx], coefs)
        return _segment_dot(self._face_value_rows, contrib, ptr)

    @cached_property
    def induced_metric_vertex(self):
        return self.faces_to_vertex_form(self.face_grams)

    # ---- frame transport between neighbors ---------------------------

    def _frame_rotations(self, indices, indptr):
        """2x2 rotations aligning each stencil vertex frame with the center."""
        center = np.repeat(np.arange(self.nv), np.diff(indptr))
        t1, t2 = self.frames
        nu = self.normals
        gc = self.ambient_metric[center]
        m = np.empty((len(indices), 2, 2))
        for a, ta in enumerate((t1, t2)):
            moved = parallel_transport(
                self.chart, self.positions[indices], self.positions[center], ta[indices]
            )
            moved -= np.einsum("nij,ni,nj->n", gc, moved, nu[center])[:, None] * nu[center]
            m[:, a, 0] = np.einsum("nij,ni,nj->n", gc, moved, t1[center])
            m[:, a, 1] = np.einsum("nij,ni,nj->n", gc, moved, t2[center])
        u, _, vt = np.linalg.svd(m)
        return np.einsum("nab,nbc->nca", u, vt)

    @cached_property
    def edge_frame_rotations(self):
        """Rotations for ring-1 neighbors, in ring-1 CSR order."""
        return self._frame_rotations(self.mesh.ring1_indices, self.mesh.ring1_indptr)

    @cached_property
    def _ring2_frame_rotations(self):
        return self._frame_rotations(self.mesh.ring2_indices, self.mesh.ring2_indptr)

    def form_gradient(self, form):
        """Covariant derivative grad_a form_bc of a frame-component 2-tensor.

        Components are parallel-transported to the center frame before the
        ring-2 cubic fit, so coordinate derivatives at the center agree with
        covariant ones.
        """
        idx = self.mesh.ring2_indices
        ptr = self.mesh.ring2_indptr
        center = np.repeat(np.arange(self.nv), np.diff(ptr))
        rot = self._ring2_frame_rotations
        moved = np.einsum("nab,nbc,ndc->nad", rot, form[idx], rot)
        diff = moved - form[center]
        rows = self._ring2_cubic_rows
        out = np.empty((self.nv, 2, 2, 2))
        out[:, 0] = _segment_dot(rows[0], diff, ptr)
        out[:, 1] = _segment_dot(rows[1], diff, ptr)
        return out

    # ---- diagnostics --------------------------------------------------

    def gauss_residual(self):
        """det h / det sigma minus (K + kappa), per vertex."""
        h = self.second_fundamental_form
        det_h = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] ** 2
        sv = self.induced_metric_vertex
        det_s = sv[:, 0, 0] * sv[:, 1, 1] - sv[:, 0, 1] ** 2
        return det_h / det_s - (self.gauss_curvature + self.chart.kappa)

    def codazzi_residual(self):
        """Max component of grad_a h_bc - grad_b h_ac, per vertex.

        Differentiates the ring-2 shape estimate; the 1-ring one carries
        mesh-frequency error that a derivative cannot shed.
        """
        dh = self.form_gradient(self._shape_quadratic)
        anti = dh[:, 0, 1, :] - dh[:, 1, 0, :]
        return np.abs(anti).max(axis=1)

    def support_min_check(self):
        if not self.is_convex:
            return SupportCheck(
                float(self.support_function.min()),
                float(self.radius.min()),
                np.nan,
                skipped=True,
                reason="surface is not convex; support minimum identity not applicable",
            )
        ms = float(self.support_function.min())
        mr = float(self.radius.min())
        return SupportCheck(ms, mr, ms - mr)

    def monge_ampere_residual(self):
        """Residuals of the support quadric identity (derived and printed forms).

        rho = |x|^2 / 2 with covariant Hessian from the surface fits; both the
        derived normalization |grad rho|^2 / f^2 and the published f^2 variant
        are returned so their refinement behavior can be compared.
        """
        rho = 0.5 * np.sum(self.positions * self.positions, axis=1)
        grad = self.scalar_gradient(rho)
        hess = self.scalar_hessian(rho)
        gsq = np.sum(grad * grad, axis=1)
        m = hess - self.f[:, None, None] * np.eye(2)
        det_m = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] ** 2
        kk = self.gauss_curvature + self.chart.kappa
        derived = det_m - kk * (2.0 * rho - gsq / self.f**2)
        printed = det_m - kk * (2.0 * rho - gsq * self.f**2)
        return derived, printed

    def gradient_bound_monitor(self):
        """Max of sigma^{ab} d_a r^i d_b r^i over faces, against 2 max f^2."""
        ginv = np.linalg.inv(self.face_grams)
        d = self.face_edges
        eucl = np.einsum("fai,fbi->fab", d, d)
        val = np.einsum("fab,fab->f", ginv, eucl)
        return float(val.max()), 2.0 * float(self.f.max()) ** 2

    def curvature_monitor(self, alpha):
        """Test function log(lambda) + alpha |x|^2 / 2 with its bound inputs."""
        kappa = self.chart.kappa
        if alpha * float(self.f.min()) ** 2 <= kappa:
            raise ValueError(
                f"alpha {alpha} too small: need alpha * (min f)^2 > kappa = {kappa}"
            )
        lam, mu = self.principal_curvatures
        if mu.min() <= 0.0:
            raise ValueError("curvature monitor requires a convex surface")
        F = np.log(lam) + 0.5 * alpha * self.radius**2
        K = self.gauss_curvature
        kk = K + kappa
        branch = bool(np.max(lam * lam - 2.0 * kk) <= 0.0)
        grad_k = self.scalar_gradient(K)
        hess_k = self.scalar_hessian(K)
        return CurvatureMonitor(
            test_function=F,
            argmax_vertex=int(np.argmax(F)),
            max_mean_curvature=float(self.mean_curvature.max()),
            max_f=float(self.f.max()),
            curv_c0=float(np.abs(K).max()),
            curv_c1=float(np.linalg.norm(grad_k, axis=1).max()),
            curv_c2=float(np.abs(hess_k).max()),
            small_anisotropy_branch=branch,
        )

    # ---- transforms ---------------------------------------------------

    def isometry_image(self, iso):
        return EmbeddedSurface(self.chart, self.mesh, iso.apply(self.positions))

    @cached_property
    def max_edge(self):
        e = self.mesh.edges
        return float(
            edge_lengths(self.chart, self.positions[e[:, 0]], self.positions[e[:, 1]]).max()
        )


def coordinate_sphere(chart, mesh, radius):
    """The surface {|x| = radius} sampled on the reference mesh."""
    return EmbeddedSurface(chart, mesh, radius * mesh.vertices)


# ---- eigenvalue perturbation formulas --------------------------------


def _check_diagonal(m, gap_tol):
    m = np.asarray(m, dtype=float)
    off = m - np.diag(np.diag(m))
    scale = max(1.0, np.abs(np.diag(m)).max())
    if np.abs(off).max() > 1e-12 * scale:
        raise ValueError("matrix must be diagonal")
    lam = np.diag(m)
    n = len(lam)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(lam[i] - lam[j]) <= gap_tol:
                raise ValueError(
                    f"eigenvalues {i} and {j} closer than {gap_tol}; formula needs distinct eigenvalues"
                )
    return lam


def eigen_first_derivative(m, dm, gap_tol=1e-8):
    """Directional derivatives of the eigenvalues of a diagonal matrix."""
    _check_diagonal(m, gap_tol)
    return np.diag(np.asarray(dm, dtype=float)).copy()


def eigen_second_derivative(m, dm_a, dm_b, d2m, gap_tol=1e-8):
    """Second directional derivatives of eigenvalues at a diagonal matrix."""
    lam = _check_diagonal(m, gap_tol)
    dm_a = np.asarray(dm_a, dtype=float)
    dm_b = np.asarray(dm_b, dtype=float)
    d2m = np.asarray(d2m, dtype=float)
    n = len(lam)
    out = np.empty(n)
    for i in range(n):
        acc = d2m[i, i]
        for j in range(n):
            if j != i:
                acc -= 2.0 * dm_a[i, j] * dm_b[i, j] / (lam[j] - lam[i])
        out[i] = acc
    return out
