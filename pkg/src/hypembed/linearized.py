"""Linearized isometric-embedding solve on an embedded surface.

Given the frame components qbar of half the conformally weighted metric
defect, the deformation tau splits through Z = tau/f into an antisymmetric
normal-rotation scalar w, tangential coefficients v_a, and a twist-flat
integration for Z itself:

    Dt_a Z = sum_b P_ab e_b + v_a nu,      P_ab = qbar_ab + (w/f^2) eps_ab,

with eps_12 = +1 in right-handed frames.  w solves a second-order scalar
equation whose coefficients are the shape operator inverse, the mean
curvature, and the support function; its kernel is spanned by the three
rotation fields.  v_a follows from a pointwise 2x2 solve, and Z from a
least-squares integration of the flat twist connection over mesh edges
(constants are exact homogeneous solutions and are pinned by mean-zero
constraints).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .surface import EmbeddedSurface

_ROT_AXES = np.eye(3)


@dataclass(frozen=True)
class NormalSolveInfo:
    iterations: int
    relative_residual: float
    kernel_load: float  # magnitude of the rhs component along the kernel


@dataclass(frozen=True)
class LinearizedSolution:
    tau: np.ndarray  # (V, 3) chart components of the deformation field
    w: np.ndarray
    v: np.ndarray  # (V, 2)
    loop_residual: float  # rms edge misfit of the twist integration
    normal_info: NormalSolveInfo


def tangential_data(surface: EmbeddedSurface, qbar):
    """Source terms (T, c_a) of the scalar equation from vertex-frame qbar.

    c_a = grad_1 qbar_a2 - grad_2 qbar_a1;
    T = sum_a (qbar_2a h_a1 - qbar_1a h_a2).
    """
    dq = surface.form_gradient(qbar)
    c = dq[:, 0, :, 1] - dq[:, 1, :, 0]
    h = surface.second_fundamental_form
    T = np.einsum("na,na->n", qbar[:, 1, :], h[:, :, 0]) - np.einsum(
        "na,na->n", qbar[:, 0, :], h[:, :, 1]
    )
    return T, c


def kernel_basis(surface: EmbeddedSurface):
    """Mass-orthonormal basis of the scalar kernel (rotation fields).

    For a rotation with axis a the kernel function is
    g(a, nu) + kappa g(a, X) <X, nu> with X the conformal position field.
    """
    kappa = surface.chart.kappa
    nu = surface.normals
    X = surface.conformal_position
    cols = []
    for axis in _ROT_AXES:
        a = np.broadcast_to(axis, nu.shape)
        cols.append(
            surface._g(a, nu)
            + kappa * surface._g(a, X) * surface.support_function
        )
    basis = np.stack(cols, axis=1)
    # mass Gram-Schmidt
    m = surface.vertex_masses
    for k in range(3):
        for j in range(k):
            basis[:, k] -= np.dot(m * basis[:, j], basis[:, k]) * basis[:, j]
        nrm = np.sqrt(np.dot(m * basis[:, k], basis[:, k]))
        if nrm < 1e-14:
            raise NumericalError("degenerate rotation kernel basis")
        basis[:, k] /= nrm
    return basis


def _vertex_form_to_faces(surface, form):
    """Average a vertex-frame bilinear form into face edge-basis components."""
    faces = surface.mesh.faces
    g = surface.chart.metric(surface.face_centroids)
    d = surface.face_edges
    t1, t2 = surface.frames
    out = np.zeros((surface.mesh.nf, 2, 2))
    for corner in range(3):
        idx = faces[:, corner]
        tv = np.stack([t1[idx], t2[idx]], axis=1)
        proj = np.einsum("fij,fai,fbj->fab", g, d, tv)  # edge alpha onto t_a
        out += np.einsum("fxa,fab,fyb->fxy", proj, form[idx], proj)
    return out / 3.0


def normal_operator(surface: EmbeddedSurface):
    """Assemble the symmetric weak form (A, load builder pieces).

    Bilinear form: int (h^-1)^ab (grad_b w / f^2) grad_a phi
                 - int (H/f^2 - 2 kappa <X,nu>/f^3) w phi,
    P1 elements on the induced face Grams, lumped zeroth-order term.
    """
    mesh = surface.mesh
    nv = surface.nv
    h_face = _vertex_form_to_faces(surface, surface.second_fundamental_form)
    det = h_face[:, 0, 0] * h_face[:, 1, 1] - h_face[:, 0, 1] ** 2
    if np.any(det <= 0.0):
        bad = int(np.argmin(det))
        raise NumericalError(
            f"shape operator not positive on face {bad}; "
            "normal equation loses ellipticity"
        )
    hinv = np.linalg.inv(h_face)
    f_face = np.mean(surface.f[mesh.faces], axis=1)
    coef = surface.face_areas / (f_face**2)

    # P1 covariant gradients in the edge basis: rows of D per local vertex
    D = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    local = np.einsum("va,fab,wb->fvw", D, hinv, D) * coef[:, None, None]
    rows = np.repeat(mesh.faces, 3, axis=1).ravel()
    cols = np.tile(mesh.faces, (1, 3)).ravel()
    stiff = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(nv, nv))

    zero_coef = (
        surface.mean_curvature / surface.f**2
        - 2.0 * surface.chart.kappa * surface.support_function / surface.f**3
    )
    lumped = surface.vertex_masses * zero_coef
    A = stiff - sp.diags(lumped)
    return A, hinv


def normal_load(surface, T, c, hinv):
    """Load vector: -int T phi + int (h^-1)^ab c_b grad_a phi (lumped T)."""
    mesh = surface.mesh
    c_face = np.zeros((mesh.nf, 2))
    faces = mesh.faces
    g = surface.chart.metric(surface.face_centroids)
    d = surface.face_edges
    t1, t2 = surface.frames
    for corner in range(3):
        idx = faces[:, corner]
        tv = np.stack([t1[idx], t2[idx]], axis=1)
        proj = np.einsum("fij,fai,fbj->fab", g, d, tv)
        c_face += np.einsum("fxa,fa->fx", proj, c[idx])
    c_face /= 3.0
    D = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    # no 1/f^2 here: the conformal factor weights only the grad-w flux
    loads = np.einsum("va,fab,fb->fv", D, hinv, c_face) * surface.face_areas[:, None]
    b = np.zeros(surface.nv)
    np.add.at(b, faces.ravel(), loads.ravel())
    return b - surface.vertex_masses * T


def solve_normal_component(surface, T, c, rtol=1e-10):
    """Deflated MINRES for the indefinite symmetric scalar equation."""
    A, hinv = normal_operator(surface)
    b = normal_load(surface, T, c, hinv)
    kern = kernel_basis(surface)
    # orthonormalize in the plain dot product for the projector
    q, _ = np.linalg.qr(kern)

    def project(x):
        return x - q @ (q.T @ x)

    b_kernel = float(np.linalg.norm(q.T @ b) / max(np.linalg.norm(b), 1e-300))
    pb = project(b)

    nv = surface.nv
    count = {"n": 0}

    def matvec(x):
        count["n"] += 1
        return project(A @ project(x))

    op = spla.LinearOperator((nv, nv), matvec=matvec, dtype=float)
    w, info = spla.minres(op, pb, rtol=rtol, maxiter=10 * nv)
    if info != 0:
        raise NumericalError(f"normal-component MINRES did not converge ({info})")
    w = project(w)
    res = float(np.linalg.norm(project(A @ w) - pb) / max(np.linalg.norm(pb), 1e-300))
    return w, NormalSolveInfo(count["n"], res, b_kernel)


def recover_tangential(surface, w, c):
    """v_a from the pointwise 2x2 system h . (v2, -v1) = grad w / f^2 - c."""
    h = surface.second_fundamental_form
    rhs = surface.scalar_gradient(w) / surface.f[:, None] ** 2 - c
    sol = np.linalg.solve(h, rhs[..., None])[..., 0]
    v = np.empty_like(sol)
    v[:, 0] = -sol[:, 1]
    v[:, 1] = sol[:, 0]
    return v


class TwistIntegrator:
    """Least-squares integration of Dt Z = R over mesh edges.

    The factorization depends only on the surface, so one instance serves
    every linearized solve against the same base embedding.
    """

    def __init__(self, surface: EmbeddedSurface):
        self.surface = surface
        chart = surface.chart
        mesh = surface.mesh
        edges = mesh.edges
        ne = len(edges)
        nv = surface.nv
        xi = surface.positions[edges[:, 0]]
        xj = surface.positions[edges[:, 1]]
        mid = 0.5 * (xi + xj)
        delta = xj - xi
        gamma = chart.christoffel(mid)
        gmid = chart.metric(mid)
        cmat = np.einsum("eijk,ej->eik", gamma, delta)
        xfld = chart.position_field(mid)
        gdelta = np.einsum("eij,ej->ei", gmid, delta)
        cmat += (chart.kappa / chart.f(mid))[:, None, None] * np.einsum(
            "ei,ek->eik", xfld, gdelta
        )
        eye = np.broadcast_to(np.eye(3), (ne, 3, 3))
        block_i = -eye + 0.5 * cmat
        block_j = eye + 0.5 * cmat

        r = np.repeat(3 * np.arange(ne), 9).reshape(ne, 3, 3) + np.tile(
            np.arange(3)[:, None], (1, 3)
        )
        ci = (3 * edges[:, 0])[:, None, None] + np.tile(np.arange(3), (3, 1))
        cj = (3 * edges[:, 1])[:, None, None] + np.tile(np.arange(3), (3, 1))
        G = sp.csr_matrix(
            (
                np.concatenate([block_i.ravel(), block_j.ravel()]),
                (
                    np.concatenate([r.ravel(), r.ravel()]),
                    np.concatenate([ci.ravel(), cj.ravel()]),
                ),
            ),
            shape=(3 * ne, 3 * nv),
        )
        constraints = sp.csr_matrix(
            (
                np.ones(3 * nv) / nv,
                (np.tile(np.arange(3), nv), np.arange(3 * nv)),
            ),
            shape=(3, 3 * nv),
        )
        K = sp.bmat(
            [[(G.T @ G).tocsc(), constraints.T], [constraints, None]], format="csc"
        )
        self._G = G
        self._lu = spla.splu(K)
        self._edges = edges
        self._delta = delta

    def integrate(self, R_edge):
        """Solve for Z from per-edge increments R_edge (E, 3)."""
        nv = self.surface.nv
        rhs = np.concatenate([self._G.T @ R_edge.ravel(), np.zeros(3)])
        sol = self._lu.solve(rhs)
        Z = sol[: 3 * nv].reshape(nv, 3)
        misfit = self._G @ sol[: 3 * nv] - R_edge.ravel()
        loop = float(np.sqrt(np.mean(misfit.reshape(-1, 3) ** 2)))
        return Z, loop

    def edge_increments(self, qbar, w, v):
        """R over edges from the frame decomposition of Dt Z."""
        s = self.surface
        eps = np.array([[0.0, 1.0], [-1.0, 0.0]])
        P = qbar + (w / s.f**2)[:, None, None] * eps
        t1, t2 = s.frames
        frames = np.stack([t1, t2], axis=1)  # (V, a, 3)
        # Dt_a Z at each vertex: sum_b P_ab e_b + v_a nu   (chart components)
        dtz = np.einsum("nab,nbi->nai", P, frames) + v[..., None] * s.normals[:, None, :]
        edges = self._edges
        gm = s.ambient_metric
        out = np.empty((len(edges), 3))
        for side, idx in ((0, edges[:, 0]), (1, edges[:, 1])):
            # frame components of the edge vector at this endpoint
            da = np.einsum("nij,ni,naj->na", gm[idx], self._delta, frames[idx])
            r = np.einsum("na,nai->ni", da, dtz[idx])
            out = r if side == 0 else 0.5 * (out + r)
        return out


def solve_linearized(surface, qbar, integrator=None, rtol=1e-10):
    """Full pipeline: qbar -> (w, v) -> tau, with gauge left to the caller."""
    T, c = tangential_data(surface, qbar)
    w, info = solve_normal_component(surface, T, c, rtol=rtol)
    v = recover_tangential(surface, w, c)
    if integrator is None:
        integrator = TwistIntegrator(surface)
    R = integrator.edge_increments(qbar, w, v)
    Z, loop = integrator.integrate(R)
    tau = surface.f[:, None] * Z
    return LinearizedSolution(tau, w, v, loop, info)


# ---- rigidity of vertex sets ------------------------------------------


def rigidity_matrix(chart, positions, edges):
    """Exact first variation of pairwise geodesic distances.

    Row e, block i: d(dist(x_i, x_j))/d(x_i components).  Killing motions
    are exact null vectors at machine precision regardless of the mesh.
    """
    xi = positions[edges[:, 0]]
    xj = positions[edges[:, 1]]
    kappa = chart.kappa
    phat_i = np.sqrt(kappa) * chart.to_hyperboloid(xi)
    phat_j = np.sqrt(kappa) * chart.to_hyperboloid(xj)
    eta = np.diag(np.array([-1.0, 1.0, 1.0, 1.0]))
    c1 = -np.einsum("ei,ij,ej->e", phat_i, eta, phat_j) - 1.0
    denom = np.sqrt(np.maximum(c1 * (c1 + 2.0), 1e-300))
    blocks = []
    for xs, other in ((xi, phat_j), (xj, phat_i)):
        lifts = np.stack(
            [np.sqrt(kappa) * chart.lift_vector(xs, np.broadcast_to(e, xs.shape))
             for e in np.eye(3)],
            axis=1,
        )  # (E, 3 basis, 4)
        blocks.append(
            -np.einsum("eki,ij,ej->ek", lifts, eta, other) / denom[:, None]
        )
    ne = len(edges)
    nv = len(positions)
    rows = np.repeat(np.arange(ne), 3)
    data = np.concatenate([blocks[0].ravel(), blocks[1].ravel()])
    cols = np.concatenate(
        [
            (3 * edges[:, 0])[:, None] + np.arange(3),
            (3 * edges[:, 1])[:, None] + np.arange(3),
        ]
    ).ravel()
    return sp.csr_matrix(
        (data, (np.concatenate([rows, rows]), cols)), shape=(ne, 3 * nv)
    )


def rigidity_spectrum(chart, positions, edges, count=8):
    """Smallest singular values of the rigidity matrix and their vectors."""
    R = rigidity_matrix(chart, positions, edges)
    gram = (R.T @ R).tocsc()
    shift = 1e-12 * np.abs(gram.diagonal()).max()
    vals, vecs = spla.eigsh(gram, k=count, sigma=-shift, which="LM")
    order = np.argsort(vals)
    vals = np.maximum(vals[order], 0.0)
    return np.sqrt(vals), vecs[:, order]


def killing_displacements(chart, positions):
    """Six Killing deformation fields evaluated at the vertex set, (3V, 6)."""
    cols = []
    for axis in _ROT_AXES:
        cols.append(chart.killing_field(axis, np.zeros(3), positions).ravel())
    for axis in _ROT_AXES:
        cols.append(chart.killing_field(np.zeros(3), axis, positions).ravel())
    return np.stack(cols, axis=1)


def subspace_cosine(A, B):
    """Smallest cosine of principal angles between column spaces."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    svals = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return float(svals.min())
