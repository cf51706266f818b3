"""Ambient geometry of hyperbolic 3-space in a static polar chart.

The space of curvature -kappa (kappa > 0) is charted over R^3 with metric

    g_ij(x) = delta_ij - kappa x_i x_j / (1 + kappa |x|^2),

which is the Cartesian form of  dr^2 / (1 + kappa r^2) + r^2 g_{S^2}.
The chart carries a static potential  f(x) = sqrt(1 + kappa |x|^2)  and a
conformally Killing position field  X = f x  satisfying  Df = kappa X  and
D_xi X = f xi.  Killing fields decompose as  tau = Y0 x X + f Z0  with
coordinate-constant rotation and translation parts Y0, Z0.

A twisted connection  Dt_xi Z = D_xi Z + (kappa/f) <xi, Z> X  is flat and
annihilates coordinate-constant fields; its holonomy is the discrete
integrability monitor used by the deformation solver.

Global isometries act through the hyperboloid model: the chart point x lifts
to (f(x)/sqrt(kappa), x) on the Minkowski hyperboloid <P, P> = -1/kappa, and
O(1,3) matrices act linearly there.  The Beltrami map x -> x / f(x) sends
geodesics to straight chords in the open ball of radius 1/sqrt(kappa).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Minkowski form of signature (-,+,+,+) used by the hyperboloid model.
MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])

# Levi-Civita symbol on three indices.
_EPS3 = np.zeros((3, 3, 3))
_EPS3[0, 1, 2] = _EPS3[1, 2, 0] = _EPS3[2, 0, 1] = 1.0
_EPS3[0, 2, 1] = _EPS3[2, 1, 0] = _EPS3[1, 0, 2] = -1.0

LORENTZ_TOL = 1e-12


def _dot(u, v):
    return np.sum(u * v, axis=-1)


@dataclass(frozen=True)
class StaticChart:
    """Closed-form ambient geometry at curvature -kappa."""

    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be a positive finite number, got {self.kappa}")

    # ---- scalar data -------------------------------------------------

    def fsq(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.kappa * _dot(x, x)

    def f(self, x):
        return np.sqrt(self.fsq(x))

    def static_potential(self, x):
        """Potential f and its gradient Df = kappa * X, stacked as (f, Df)."""
        x = np.asarray(x, dtype=float)
        f = self.f(x)
        return f, self.kappa * f[..., None] * x

    def position_field(self, x):
        """Conformal Killing field X = f x in chart components."""
        x = np.asarray(x, dtype=float)
        return self.f(x)[..., None] * x

    # ---- metric and derivatives --------------------------------------

    def metric(self, x):
        """g_ij(x); shape (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        fsq = self.fsq(x)
        g = -(self.kappa / fsq)[..., None, None] * (x[..., :, None] * x[..., None, :])
        g[..., 0, 0] += 1.0
        g[..., 1, 1] += 1.0
        g[..., 2, 2] += 1.0
        return g

    def metric_inv(self, x):
        """g^ij(x) = delta_ij + kappa x_i x_j, exact inverse of metric."""
        x = np.asarray(x, dtype=float)
        gi = self.kappa * (x[..., :, None] * x[..., None, :])
        gi[..., 0, 0] += 1.0
        gi[..., 1, 1] += 1.0
        gi[..., 2, 2] += 1.0
        return gi

    def dmetric(self, x):
        """Coordinate derivative d_k g_ij, index order (..., k, i, j)."""
        x = np.asarray(x, dtype=float)
        fsq = self.fsq(x)
        a = -self.kappa / fsq
        b = 2.0 * self.kappa**2 / fsq**2
        eye = np.eye(3)
        xk = x[..., :, None, None]
        xi = x[..., None, :, None]
        xj = x[..., None, None, :]
        d = b[..., None, None, None] * xk * xi * xj
        d += a[..., None, None, None] * (eye[:, :, None] * xj + eye[:, None, :] * xi)
        return d

    def d2metric(self, x):
        """Second derivative d_l d_k g_ij, index order (..., l, k, i, j)."""
        x = np.asarray(x, dtype=float)
        fsq = self.fsq(x)
        a = -self.kappa / fsq
        b = 2.0 * self.kappa**2 / fsq**2
        db = -8.0 * self.kappa**3 / fsq**3  # d_l b = db * x_l
        eye = np.eye(3)
        xl = x[..., :, None, None, None]
        xk = x[..., None, :, None, None]
        xi = x[..., None, None, :, None]
        xj = x[..., None, None, None, :]
        out = db[..., None, None, None, None] * xl * xk * xi * xj
        out += b[..., None, None, None, None] * (
            eye[:, :, None, None] * xi * xj
            + eye[:, None, :, None] * xk * xj
            + eye[:, None, None, :] * xk * xi
        )
        # d_l a = b x_l
        out += b[..., None, None, None, None] * xl * (
            eye[None, :, :, None] * xj + eye[None, :, None, :] * xi
        )
        out += a[..., None, None, None, None] * (
            eye[:, None, :, None] * eye[None, :, None, :]
            + eye[:, None, None, :] * eye[None, :, :, None]
        )
        return out

    def christoffel(self, x):
        """Gamma^i_jk = kappa x_i (kappa x_j x_k / f^2 - delta_jk); (..., i, j, k)."""
        x = np.asarray(x, dtype=float)
        fsq = self.fsq(x)
        inner = (self.kappa / fsq)[..., None, None] * (x[..., :, None] * x[..., None, :])
        inner = inner - np.eye(3)
        return self.kappa * x[..., :, None, None] * inner[..., None, :, :]

    # ---- algebra on tangent vectors ----------------------------------

    def inner(self, x, u, v):
        g = self.metric(x)
        return np.einsum("...ij,...i,...j->...", g, u, v)

    def norm(self, x, u):
        return np.sqrt(np.maximum(self.inner(x, u, u), 0.0))

    def volume_density(self, x):
        """sqrt(det g) = 1/f."""
        return 1.0 / self.f(x)

    def cross(self, x, u, v):
        """Metric cross product: g(u x v, w) = vol(u, v, w) for all w."""
        x = np.asarray(x, dtype=float)
        cov = np.einsum("mjk,...j,...k->...m", _EPS3, u, v)
        cov = cov * self.volume_density(x)[..., None]
        return np.einsum("...im,...m->...i", self.metric_inv(x), cov)

    def killing_field(self, y0, z0, x):
        """tau = Y0 x X + f Z0 evaluated at chart points x."""
        x = np.asarray(x, dtype=float)
        y0 = np.asarray(y0, dtype=float)
        z0 = np.asarray(z0, dtype=float)
        tau = self.cross(x, np.broadcast_to(y0, x.shape), self.position_field(x))
        return tau + self.f(x)[..., None] * z0

    def covariant_derivative(self, x, xi, z, dz):
        """D_xi Z from value z and directional component derivative dz = xi(Z^i)."""
        gamma = self.christoffel(x)
        return dz + np.einsum("...ijk,...j,...k->...i", gamma, xi, z)

    def twist_derivative(self, x, xi, z, dz):
        """Dt_xi Z = D_xi Z + (kappa/f) <xi, Z> X; flat, kills constant fields."""
        dcov = self.covariant_derivative(x, xi, z, dz)
        corr = (self.kappa / self.f(x) * self.inner(x, xi, z))[..., None]
        return dcov + corr * self.position_field(x)

    # ---- hyperboloid and Beltrami models -----------------------------

    def to_hyperboloid(self, x):
        x = np.asarray(x, dtype=float)
        p0 = self.f(x) / np.sqrt(self.kappa)
        return np.concatenate([p0[..., None], x], axis=-1)

    def from_hyperboloid(self, p):
        return np.asarray(p, dtype=float)[..., 1:]

    def lift_vector(self, x, v):
        """Push a chart tangent vector to the hyperboloid; isometric for g."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        w0 = np.sqrt(self.kappa) * _dot(x, v) / self.f(x)
        return np.concatenate([w0[..., None], v], axis=-1)

    def beltrami(self, x):
        x = np.asarray(x, dtype=float)
        return x / self.f(x)[..., None]

    def inverse_beltrami(self, b):
        b = np.asarray(b, dtype=float)
        bb = _dot(b, b)
        if np.any(self.kappa * bb >= 1.0):
            raise ValueError("Beltrami coordinates must satisfy kappa |b|^2 < 1")
        return b / np.sqrt(1.0 - self.kappa * bb)[..., None]

    # ---- geodesics ---------------------------------------------------

    def distance(self, x, y):
        p, q = self.to_hyperboloid(x), self.to_hyperboloid(y)
        c = -self.kappa * np.einsum("...i,i,...i->...", p, np.diag(MINKOWSKI), q)
        # guard against roundoff dipping below cosh(0)
        return np.arccosh(np.maximum(c, 1.0)) / np.sqrt(self.kappa)

    def geodesic(self, x, y, s):
        """Points on the geodesic from x to y at parameters s in [0, 1]."""
        rk = np.sqrt(self.kappa)
        p, q = self.to_hyperboloid(x), self.to_hyperboloid(y)
        theta = rk * self.distance(x, y)
        s = np.asarray(s, dtype=float)
        if theta < 1e-12:
            pts = p[None, :] + s[:, None] * (q - p)[None, :]
        else:
            pts = (
                np.sinh((1.0 - s) * theta)[..., None] * p + np.sinh(s * theta)[..., None] * q
            ) / np.sinh(theta)
        return self.from_hyperboloid(pts)

    def geodesic_velocity(self, x, y, s):
        """Chart velocity d/ds of geodesic(x, y, s)."""
        rk = np.sqrt(self.kappa)
        p, q = self.to_hyperboloid(x), self.to_hyperboloid(y)
        theta = rk * self.distance(x, y)
        s = np.asarray(s, dtype=float)
        if theta < 1e-12:
            vel = np.broadcast_to(q - p, s.shape + (4,))
        else:
            vel = (
                -theta * np.cosh((1.0 - s) * theta)[..., None] * p
                + theta * np.cosh(s * theta)[..., None] * q
            ) / np.sinh(theta)
        return vel[..., 1:]

    def exp_map(self, x, v):
        """Chart exponential: follow the geodesic with initial velocity v for unit time."""
        rk = np.sqrt(self.kappa)
        p = self.to_hyperboloid(x)
        w = self.lift_vector(x, v)
        # Minkowski norm of w equals g-norm of v
        nv = self.norm(x, v)
        if np.isscalar(nv) or nv.ndim == 0:
            if nv < 1e-300:
                return np.asarray(x, dtype=float).copy()
        theta = rk * nv
        out = np.cosh(theta)[..., None] * p + (np.sinh(theta) / np.maximum(theta, 1e-300))[
            ..., None
        ] * w
        return self.from_hyperboloid(out)

    # ---- discrete twist transport ------------------------------------

    def twist_transport_step(self, a, b, z):
        """Transport Z from a to b along the chord with one midpoint step.

        Integrates dZ/dt = -Gamma(x)(dx, Z) - (kappa/f) g(dx, Z) X with a
        single second-order step; local error O(|b - a|^3).
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = b - a

        def rate(x, z):
            gamma = self.christoffel(x)
            out = -np.einsum("...ijk,...j,...k->...i", gamma, d, z)
            out -= (self.kappa / self.f(x) * self.inner(x, d, z))[..., None] * self.position_field(x)
            return out

        zmid = z + 0.5 * rate(a, z)
        return z + rate(0.5 * (a + b), zmid)

    def twist_transport(self, path, z, steps_per_leg=1):
        """Transport Z along a polyline of chart points, substepping each leg."""
        path = np.asarray(path, dtype=float)
        cur = np.asarray(z, dtype=float).copy()
        for a, b in zip(path[:-1], path[1:]):
            if steps_per_leg == 1:
                cur = self.twist_transport_step(a, b, cur)
            else:
                s = np.linspace(0.0, 1.0, steps_per_leg + 1)
                sub = a[None, :] + s[:, None] * (b - a)[None, :]
                for p, q in zip(sub[:-1], sub[1:]):
                    cur = self.twist_transport_step(p, q, cur)
        return cur

    def twist_transport_covariant(self, path, z, steps_per_leg=1):
        """Transport along a polyline integrating the lowered-index form.

        The contravariant components of twist-parallel fields are constant, so
        the chart-component integrator is exact; integrating the covariant
        components W_b = g_bc Z^c instead exercises a nontrivial ODE whose
        discrete holonomy defect measures flatness at second order.
        """
        path = np.asarray(path, dtype=float)
        w = np.einsum("ij,j->i", self.metric(path[0]), np.asarray(z, dtype=float))

        def rate(x, d, w):
            zup = np.einsum("ij,j->i", self.metric_inv(x), w)
            # Gamma index order is (upper, lower1, lower2); need Gamma^c_{db} d^d W_c
            out = np.einsum("cdb,d,c->b", self.christoffel(x), d, w)
            xcov = np.einsum("ij,j->i", self.metric(x), self.position_field(x))
            out -= self.kappa / self.f(x) * self.inner(x, d, zup) * xcov
            return out

        for a, b in zip(path[:-1], path[1:]):
            s = np.linspace(0.0, 1.0, steps_per_leg + 1)
            sub = a[None, :] + s[:, None] * (b - a)[None, :]
            for p, q in zip(sub[:-1], sub[1:]):
                d = q - p
                wmid = w + 0.5 * rate(p, d, w)
                w = w + rate(0.5 * (p + q), d, wmid)
        return np.einsum("ij,j->i", self.metric_inv(path[-1]), w)

    def twist_holonomy_defect(self, p, e1, e2, side, steps_per_leg=4):
        """Relative holonomy defect of the twist connection around a geodesic square.

        The square has corners exp_p(0), exp_p(side e1), exp_p(side (e1 + e2)),
        exp_p(side e2) joined by geodesics; a basis is transported around with
        the covariant-component integrator and compared with the identity.
        """
        corners = [
            np.asarray(p, dtype=float),
            self.exp_map(p, side * np.asarray(e1, dtype=float)),
            self.exp_map(p, side * (np.asarray(e1, dtype=float) + np.asarray(e2, dtype=float))),
            self.exp_map(p, side * np.asarray(e2, dtype=float)),
        ]
        s = np.linspace(0.0, 1.0, steps_per_leg + 1)
        defect = 0.0
        for k in range(3):
            z0 = np.zeros(3)
            z0[k] = 1.0
            z = z0
            for a, b in zip(corners, corners[1:] + corners[:1]):
                poly = self.geodesic(a, b, s)
                z = self.twist_transport_covariant(poly, z, steps_per_leg=1)
            defect = max(defect, np.linalg.norm(z - z0))
        return defect


# ---------------------------------------------------------------------
# Global isometries
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class Isometry:
    """O(1,3) matrix acting on chart points through the hyperboloid model."""

    chart: StaticChart
    matrix: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        err = np.max(np.abs(m.T @ MINKOWSKI @ m - MINKOWSKI))
        if err > 1e-9:
            raise ValueError(f"matrix is not Lorentz to tolerance: defect {err:.3e}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, chart):
        return cls(chart, np.eye(4))

    @classmethod
    def rotation(cls, chart, r):
        m = np.eye(4)
        m[1:, 1:] = np.asarray(r, dtype=float)
        return cls(chart, m)

    @classmethod
    def boost(cls, chart, direction, rapidity):
        n = np.asarray(direction, dtype=float)
        n = n / np.linalg.norm(n)
        ch, sh = np.cosh(rapidity), np.sinh(rapidity)
        m = np.eye(4)
        m[0, 0] = ch
        m[0, 1:] = sh * n
        m[1:, 0] = sh * n
        m[1:, 1:] = np.eye(3) + (ch - 1.0) * np.outer(n, n)
        return cls(chart, m)

    def compose(self, other):
        return Isometry(self.chart, self.matrix @ other.matrix)

    def inverse(self):
        return Isometry(self.chart, MINKOWSKI @ self.matrix.T @ MINKOWSKI)

    def apply(self, x):
        p = self.chart.to_hyperboloid(x)
        return self.chart.from_hyperboloid(p @ self.matrix.T)

    def push_vector(self, x, v):
        """Differential of the isometry on a tangent vector at x."""
        w = self.chart.lift_vector(x, v)
        return (w @ self.matrix.T)[..., 1:]


def recenter_isometry(chart, points, tol=1e-9, max_iter=200):
    """Isometry driving the Euclidean centroid of the chart points to the origin.

    Iterates boosts along the negative centroid direction; the rapidity that
    maps the centroid to the origin is damped by 0.5 whenever the centroid norm
    fails to decrease.
    """
    pts = np.asarray(points, dtype=float)
    iso = Isometry.identity(chart)
    rk = np.sqrt(chart.kappa)
    cnorm = np.linalg.norm(pts.mean(axis=0))
    for _ in range(max_iter):
        if cnorm < tol:
            return iso
        c = pts.mean(axis=0)
        phi = np.arcsinh(rk * np.linalg.norm(c))
        n = c / np.linalg.norm(c)
        while phi > 1e-18:
            step = Isometry.boost(chart, n, -phi)
            cand = step.apply(pts)
            cand_norm = np.linalg.norm(cand.mean(axis=0))
            if cand_norm < cnorm:
                pts, iso, cnorm = cand, step.compose(iso), cand_norm
                break
            phi *= 0.5
        else:
            break
    if cnorm >= tol:
        raise RuntimeError(f"recentering failed to converge: centroid norm {cnorm:.3e}")
    return iso
