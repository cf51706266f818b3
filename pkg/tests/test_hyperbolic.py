"""Properties of the static chart: potential, connection, transport, isometries."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypembed.hyperbolic import Isometry, StaticChart, recenter_isometry

KAPPAS = [0.5, 1.0, 2.0]

coord = st.floats(-0.8, 0.8, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord).map(np.array)


def unit(v):
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_potential_gradient_matches_position_field(kappa, rng):
    chart = StaticChart(kappa)
    x = rng.uniform(-1, 1, size=(200, 3))
    f, df = chart.static_potential(x)
    np.testing.assert_allclose(df, kappa * chart.position_field(x), rtol=0, atol=1e-14)
    # df is the metric gradient: its pairing with a direction equals the
    # directional derivative of f along the geodesic in that direction.
    xi = rng.normal(size=(200, 3))
    eps = 1e-6
    fd = (chart.f(np.array([chart.exp_map(p, eps * v) for p, v in zip(x, xi)]))
          - chart.f(np.array([chart.exp_map(p, -eps * v) for p, v in zip(x, xi)]))) / (2 * eps)
    assert np.max(np.abs(fd - chart.inner(x, df, xi))) < 1e-8


@pytest.mark.parametrize("kappa", KAPPAS)
def test_position_field_is_conformal_killing(kappa, rng):
    chart = StaticChart(kappa)
    for _ in range(50):
        x = rng.uniform(-1, 1, size=3)
        xi = rng.normal(size=3)
        # exact component Jacobian of X = f x
        dX = chart.f(x) * np.eye(3) + kappa * np.outer(x, x) / chart.f(x)
        dz = dX @ xi
        got = chart.covariant_derivative(x, xi, chart.position_field(x), dz)
        np.testing.assert_allclose(got, chart.f(x) * xi, rtol=0, atol=1e-12)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_twist_derivative_kills_constant_fields(kappa, rng):
    chart = StaticChart(kappa)
    x = rng.uniform(-1, 1, size=(100, 3))
    xi = rng.normal(size=(100, 3))
    z = np.broadcast_to(rng.normal(size=3), (100, 3))
    got = chart.twist_derivative(x, xi, z, np.zeros((100, 3)))
    assert np.max(np.abs(got)) < 1e-12


@pytest.mark.parametrize("kappa", KAPPAS)
def test_twist_holonomy_second_order(kappa):
    chart = StaticChart(kappa)
    p = np.array([0.21, -0.13, 0.34])
    e1 = unit(np.array([1.0, 0.4, -0.2]))
    e2 = unit(np.cross(e1, [0.0, 0.0, 1.0]))
    d1 = chart.twist_holonomy_defect(p, e1, e2, 0.08)
    d2 = chart.twist_holonomy_defect(p, e1, e2, 0.04)
    assert d2 < d1 / 3.0  # at least quadratic decay under halving


def test_twist_transport_constant_field_exact():
    chart = StaticChart(1.0)
    path = np.array([[0.1, 0.0, 0.2], [0.3, -0.2, 0.1], [-0.1, 0.4, 0.0], [0.1, 0.0, 0.2]])
    z = np.array([0.3, -1.1, 0.7])
    out = chart.twist_transport(path, z, steps_per_leg=8)
    np.testing.assert_allclose(out, z, rtol=0, atol=1e-14)


def test_twist_transport_covariant_holonomy_shrinks():
    chart = StaticChart(1.0)
    z = np.array([1.0, 0.2, -0.5])

    def loop(h):
        p = np.array([0.2, 0.1, -0.1])
        sq = np.array([p, p + [h, 0, 0], p + [h, h, 0], p + [0, h, 0], p])
        out = chart.twist_transport_covariant(sq, z, steps_per_leg=16)
        return np.linalg.norm(out - z)

    assert loop(0.05) < loop(0.1) / 3.0


@given(x=point, y=point, z=point)
def test_distance_metric_axioms(x, y, z):
    chart = StaticChart(1.0)
    dxy = chart.distance(x, y)
    assert dxy >= 0
    assert abs(dxy - chart.distance(y, x)) < 1e-12
    # arccosh(1 + delta) ~ sqrt(2 delta): rounding noise in the argument
    # surfaces as ~sqrt(eps) in the self-distance
    assert chart.distance(x, x) < 1e-7
    assert dxy <= chart.distance(x, z) + chart.distance(z, y) + 1e-10


@pytest.mark.parametrize("kappa", KAPPAS)
def test_distance_isometry_invariant(kappa, rng):
    chart = StaticChart(kappa)
    iso = Isometry.rotation(chart, _rotation(rng)).compose(
        Isometry.boost(chart, unit(rng.normal(size=3)), 0.6)
    )
    x = rng.uniform(-1, 1, size=(40, 3))
    y = rng.uniform(-1, 1, size=(40, 3))
    d0 = np.array([chart.distance(a, b) for a, b in zip(x, y)])
    d1 = np.array([chart.distance(iso.apply(a), iso.apply(b)) for a, b in zip(x, y)])
    np.testing.assert_allclose(d1, d0, rtol=0, atol=1e-11)


def _rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.mark.parametrize("kappa", KAPPAS)
def test_exp_map_distance_consistency(kappa, rng):
    chart = StaticChart(kappa)
    for _ in range(30):
        x = rng.uniform(-0.8, 0.8, size=3)
        v = rng.normal(size=3) * 0.5
        y = chart.exp_map(x, v)
        assert abs(chart.distance(x, y) - chart.norm(x, v)) < 1e-10


def test_geodesic_arclength_proportional(rng):
    chart = StaticChart(1.0)
    x = np.array([0.3, -0.1, 0.2])
    y = np.array([-0.4, 0.5, 0.1])
    d = chart.distance(x, y)
    for s in [0.25, 0.5, 0.75]:
        m = chart.geodesic(x, y, s)
        assert abs(chart.distance(x, m) - s * d) < 1e-10
        assert abs(chart.distance(m, y) - (1 - s) * d) < 1e-10


def test_geodesic_velocity_is_tangent_fd():
    chart = StaticChart(1.0)
    x = np.array([0.3, -0.1, 0.2])
    y = np.array([-0.4, 0.5, 0.1])
    eps = 1e-6
    fd = (chart.geodesic(x, y, 0.5 + eps) - chart.geodesic(x, y, 0.5 - eps)) / (2 * eps)
    np.testing.assert_allclose(chart.geodesic_velocity(x, y, 0.5), fd, rtol=0, atol=1e-8)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_hyperboloid_lift(kappa, rng):
    chart = StaticChart(kappa)
    x = rng.uniform(-1, 1, size=(50, 3))
    p = chart.to_hyperboloid(x)
    mink = -p[:, 0] ** 2 + np.sum(p[:, 1:] ** 2, axis=1)
    np.testing.assert_allclose(mink, -1.0 / kappa, rtol=0, atol=1e-12)
    np.testing.assert_allclose(chart.from_hyperboloid(p), x, rtol=0, atol=1e-15)
    v = rng.normal(size=(50, 3))
    w = chart.lift_vector(x, v)
    mink_norm = -w[:, 0] ** 2 + np.sum(w[:, 1:] ** 2, axis=1)
    np.testing.assert_allclose(mink_norm, chart.inner(x, v, v), rtol=0, atol=1e-12)


def test_beltrami_round_trip(rng):
    chart = StaticChart(1.3)
    x = rng.uniform(-1, 1, size=(50, 3))
    np.testing.assert_allclose(chart.inverse_beltrami(chart.beltrami(x)), x, rtol=0, atol=1e-12)


def test_isometry_group_ops(rng):
    chart = StaticChart(1.0)
    a = Isometry.rotation(chart, _rotation(rng))
    b = Isometry.boost(chart, unit(rng.normal(size=3)), -0.8)
    x = rng.uniform(-1, 1, size=(20, 3))
    np.testing.assert_allclose(a.compose(a.inverse()).apply(x), x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(
        a.compose(b).apply(x), a.apply(b.apply(x)), rtol=0, atol=1e-12
    )


def test_push_vector_preserves_inner(rng):
    chart = StaticChart(1.0)
    iso = Isometry.boost(chart, unit(np.array([0.3, -1.0, 0.2])), 0.7)
    for _ in range(20):
        x = rng.uniform(-1, 1, size=3)
        u = rng.normal(size=3)
        v = rng.normal(size=3)
        y = iso.apply(x)
        got = chart.inner(y, iso.push_vector(x, u), iso.push_vector(x, v))
        assert abs(got - chart.inner(x, u, v)) < 1e-11


def test_recenter_isometry_centers_cloud(rng):
    chart = StaticChart(1.0)
    pts = rng.uniform(-0.5, 0.5, size=(60, 3)) + np.array([0.4, -0.2, 0.3])
    iso = recenter_isometry(chart, pts)
    moved = iso.apply(pts)
    assert np.linalg.norm(moved.mean(axis=0)) < 1e-8
    d0 = chart.distance(pts[0], pts[1])
    assert abs(chart.distance(moved[0], moved[1]) - d0) < 1e-11


def test_killing_field_combines_rotation_and_boost(rng):
    chart = StaticChart(1.0)
    y0 = rng.normal(size=3)
    z0 = rng.normal(size=3)
    x = rng.uniform(-1, 1, size=(30, 3))
    tau = chart.killing_field(y0, z0, x)
    np.testing.assert_allclose(
        tau,
        chart.killing_field(y0, np.zeros(3), x) + chart.killing_field(np.zeros(3), z0, x),
        rtol=0,
        atol=1e-13,
    )
    # rotational part at the origin vanishes, translational part equals z0
    np.testing.assert_allclose(chart.killing_field(y0, z0, np.zeros(3)), z0, rtol=0, atol=1e-14)
