"""Conformal metric calculus on the sphere: operators, curvature, Grams."""

import numpy as np
import pytest

from hypembed.conformal import ConformalMetric
from hypembed.mesh import build_icosphere


def unit_round(mesh, khat=1.0):
    return ConformalMetric(mesh, np.zeros(mesh.nv), khat)


def test_operators_annihilate_constants(mesh3):
    cm = unit_round(mesh3)
    c = np.full(mesh3.nv, 2.7)
    assert np.max(np.abs(cm.laplacian_unit(c))) < 1e-12
    assert np.max(np.abs(cm.gradient(c))) < 1e-12
    assert np.max(np.abs(cm.hessian(c))) < 1e-12
    assert np.max(np.abs(cm.laplacian_fem_unit(c))) < 1e-12


def test_validation():
    mesh = build_icosphere(1)
    with pytest.raises(ValueError, match="shape"):
        ConformalMetric(mesh, np.zeros(5), 1.0)
    with pytest.raises(ValueError, match="finite"):
        ConformalMetric(mesh, np.full(mesh.nv, np.nan), 1.0)
    with pytest.raises(ValueError, match="positive"):
        ConformalMetric(mesh, np.zeros(mesh.nv), 0.0)


def _sphere_errors(level):
    """Max errors of the unit-frame operators against closed forms on S^2."""
    m = build_icosphere(level)
    cm = unit_round(m)
    z = m.vertices[:, 2]
    quad = z * z - 1.0 / 3.0  # degree-2 harmonic; unit-sphere laplacian = -6 * quad
    e_lap = np.max(np.abs(cm.laplacian_unit(quad) + 6 * quad))
    e_grad = np.max(np.abs(cm.grad_norm_sq(z) - (1 - z * z)))
    h = cm.hessian(z)  # covariant hessian of z on S^2 is -z * metric
    e_hess = max(
        np.max(np.abs(h[:, 0, 0] + z)),
        np.max(np.abs(h[:, 1, 1] + z)),
        np.max(np.abs(h[:, 0, 1])),
    )
    return e_lap, e_grad, e_hess


def test_operator_convergence_second_order():
    coarse = _sphere_errors(2)
    mid = _sphere_errors(3)
    fine = _sphere_errors(4)
    for c, f in zip(coarse, mid):
        assert f < c / 3.0
    for c, f in zip(mid, fine):
        assert f < c / 3.0
    assert fine[0] < 3e-2 and fine[1] < 5e-5 and fine[2] < 3e-3


def test_round_curvature_exact(mesh3):
    for khat in (0.5, 1.0, 2.0):
        cm = unit_round(mesh3, khat)
        np.testing.assert_allclose(cm.gauss_curvature(), khat, rtol=0, atol=1e-12)
        assert abs(cm.area() - 4 * np.pi / khat) < 1e-10


def test_curvature_closed_form_converges():
    def err(level):
        m = build_icosphere(level)
        z = m.vertices[:, 2]
        u = 0.2 * (z * z - 1.0 / 3.0)
        cm = ConformalMetric(m, u, 1.0)
        k_exact = np.exp(-2 * u) * (1 + 6 * u)  # e^{-2u}(1 - lap_hat u)
        return np.max(np.abs(cm.gauss_curvature() - k_exact))

    e2, e3, e4 = err(2), err(3), err(4)
    assert e3 < e2 / 3.0 and e4 < e3 / 3.0


def test_gauss_bonnet_machine_exact(mesh3, rng):
    v = mesh3.vertices
    u = 0.3 * (v[:, 2] ** 2 - 1 / 3) + 0.2 * v[:, 0] * v[:, 2] - 0.15 * v[:, 1]
    for khat in (1.0, 1.7):
        cm = ConformalMetric(mesh3, u, khat)
        assert abs(cm.integrate(cm.gauss_curvature()) - 4 * np.pi) < 1e-10


def test_integrate_constant(mesh2):
    cm = ConformalMetric(mesh2, np.full(mesh2.nv, 0.25), 2.0)
    assert abs(cm.integrate(np.ones(mesh2.nv)) - cm.area()) < 1e-12


def test_normalized_reference_preserves_geometry(mesh3):
    v = mesh3.vertices
    cm = ConformalMetric(mesh3, 0.4 * v[:, 0], 1.0)
    cm2 = cm.normalized_reference()
    assert abs(cm2.area() - cm.area()) < 1e-10
    assert abs(cm2.area() - 4 * np.pi / cm2.khat) < 1e-10
    np.testing.assert_allclose(cm2.lam, cm.lam, rtol=1e-14, atol=0)
    np.testing.assert_allclose(cm2.gauss_curvature(), cm.gauss_curvature(), rtol=0, atol=1e-10)


def test_face_grams_round_chordal(mesh2):
    cm = unit_round(mesh2)
    g = cm.face_grams()
    tri = mesh2.vertices[mesh2.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    np.testing.assert_allclose(g[:, 0, 0], np.einsum("fi,fi->f", e1, e1), rtol=0, atol=1e-15)
    np.testing.assert_allclose(g[:, 0, 1], np.einsum("fi,fi->f", e1, e2), rtol=0, atol=1e-15)
    np.testing.assert_allclose(g[:, 1, 1], np.einsum("fi,fi->f", e2, e2), rtol=0, atol=1e-15)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    assert np.all(det > 0) and np.all(g[:, 0, 0] > 0)


def test_face_grams_scale_with_u(mesh2):
    c = 0.3
    base = unit_round(mesh2).face_grams()
    scaled = ConformalMetric(mesh2, np.full(mesh2.nv, c), 1.0).face_grams()
    np.testing.assert_allclose(scaled, np.exp(2 * c) * base, rtol=1e-13, atol=0)


def test_laplacian_variants_consistent(mesh4):
    """Fit-based and FEM laplacians agree on smooth data in the mass norm."""
    cm = unit_round(mesh4)
    z = mesh4.vertices[:, 2]
    phi = z * z - 1.0 / 3.0
    diff = cm.laplacian(phi) - cm.laplacian_fem_unit(phi)
    l2 = np.sqrt(np.sum(mesh4.mass * diff**2) / (4 * np.pi))
    assert l2 < 5e-2
