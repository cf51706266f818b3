"""Conformal metrics over the round reference sphere and their calculus.

A metric is stored as sigma = e^{2u} sigma_hat where sigma_hat is the round
sphere of curvature khat (radius 1/sqrt(khat)).  Relative to the unit sphere
carried by the mesh this is sigma = Lambda g_unit with conformal factor
Lambda = e^{2u} / khat, so in the per-vertex frames the metric matrix is
Lambda * I.  Two-dimensional conformal covariance makes the Dirichlet
stiffness matrix metric-independent; only masses and pointwise factors move.

Conventions: gradients are returned as contravariant frame components (the
tangent vector is sum_a grad_a e_a), Hessians as covariant frame components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import SphereMesh


@dataclass(frozen=True)
class ConformalMetric:
    mesh: SphereMesh
    u: np.ndarray
    khat: float

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=float)
        if u.shape != (self.mesh.nv,):
            raise ValueError(f"u must have shape ({self.mesh.nv},), got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("u contains non-finite entries")
        if not (self.khat > 0):
            raise ValueError(f"khat must be positive, got {self.khat}")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    # conformal factor against the unit round metric
    @property
    def lam(self):
        return np.exp(2.0 * self.u) / self.khat

    def area(self):
        return float(np.sum(self.mesh.mass * self.lam))

    def integrate(self, phi):
        return float(np.sum(self.mesh.mass * self.lam * phi))

    def laplacian_unit(self, phi):
        """Pointwise Laplace-Beltrami of the unit round sphere.

        Trace of the normal-coordinate Hessian fit; the lumped FEM pair is
        kept for weak forms but is not pointwise consistent at the twelve
        valence-5 vertices, so pointwise fields use the fit operators.
        """
        ops = self.mesh.fit_operators
        return ops[2] @ phi + ops[4] @ phi

    def laplacian_fem_unit(self, phi):
        """Weak-form unit-sphere Laplacian (cot stiffness over lumped mass)."""
        return -(self.mesh.stiffness @ phi) / self.mesh.mass

    def laplacian(self, phi):
        return self.laplacian_unit(phi) / self.lam

    def gradient(self, phi):
        """Contravariant frame components of grad_sigma phi, shape (V, 2)."""
        d1, d2 = self.mesh.fit_operators[0] @ phi, self.mesh.fit_operators[1] @ phi
        return np.stack([d1, d2], axis=1) / self.lam[:, None]

    def grad_norm_sq(self, phi):
        d1, d2 = self.mesh.fit_operators[0] @ phi, self.mesh.fit_operators[1] @ phi
        return (d1 * d1 + d2 * d2) / self.lam

    def hessian(self, phi):
        """Covariant frame components of the sigma-Hessian, shape (V, 2, 2).

        Computed from the unit-sphere Hessian fit plus the conformal
        Christoffel correction for sigma = e^{2v} g_unit with v = u + const.
        """
        d1, d2, h11, h12, h22 = (op @ phi for op in self.mesh.fit_operators)
        u1, u2 = self.mesh.fit_operators[0] @ self.u, self.mesh.fit_operators[1] @ self.u
        cross = u1 * d1 + u2 * d2
        out = np.empty((self.mesh.nv, 2, 2))
        out[:, 0, 0] = h11 - 2.0 * u1 * d1 + cross
        out[:, 1, 1] = h22 - 2.0 * u2 * d2 + cross
        out[:, 0, 1] = out[:, 1, 0] = h12 - u1 * d2 - u2 * d1
        return out

    def hessian_unit(self, phi):
        _, _, h11, h12, h22 = (op @ phi for op in self.mesh.fit_operators)
        out = np.empty((self.mesh.nv, 2, 2))
        out[:, 0, 0] = h11
        out[:, 1, 1] = h22
        out[:, 0, 1] = out[:, 1, 0] = h12
        return out

    def gauss_curvature(self):
        """K = e^{-2u}(khat - Delta_hat u) through unit-sphere covariance."""
        return (1.0 - self.laplacian_unit(self.u)) / self.lam

    def with_u(self, u):
        return ConformalMetric(self.mesh, u, self.khat)

    def normalized_reference(self):
        """Rebase khat so the reference round sphere has the same total area."""
        a = self.area()
        khat_new = 4.0 * np.pi / a
        u_new = self.u + 0.5 * np.log(khat_new / self.khat)
        return ConformalMetric(self.mesh, u_new, khat_new)

    def face_grams(self):
        """Per-face 2x2 Gram matrices of the mesh edge basis (e1, e2) = (v1-v0, v2-v0).

        The PL target representation used by the embedding solver: unit-mesh
        chordal Grams scaled by the face-averaged conformal factor.
        """
        tri = self.mesh.vertices[self.mesh.faces]
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        g = np.empty((self.mesh.nf, 2, 2))
        g[:, 0, 0] = np.einsum("fi,fi->f", e1, e1)
        g[:, 0, 1] = g[:, 1, 0] = np.einsum("fi,fi->f", e1, e2)
        g[:, 1, 1] = np.einsum("fi,fi->f", e2, e2)
        lam_face = np.exp(2.0 * np.mean(self.u[self.mesh.faces], axis=1)) / self.khat
        return lam_face[:, None, None] * g
