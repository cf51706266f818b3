"""Nonlinear embedding driver: march a conformal metric path to its surface.

Starting from a coordinate-sphere seed whose induced metric matches the round
end of the path, walk the path's checkpoints backward.  At each target metric
the embedding is updated by a fixed-point iteration over linearized solves:
the right-hand side q(y) collects the metric defect, the quadratic first-order
term, and Taylor-remainder tensors of the ambient metric, so that a fixed
point of y -> solve(q(y)) makes the per-face induced Grams match the target
exactly up to quadrature.  Failed steps bisect the metric increment; accepted
surfaces are recentered by a hyperbolic isometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import scipy.sparse as sp
from scipy.sparse.linalg import lsmr

from .errors import HypothesisError, NumericalError
from .hyperbolic import StaticChart, recenter_isometry
from .linearized import TwistIntegrator, killing_displacements, solve_linearized
from .mesh import SphereMesh
from .surface import EmbeddedSurface, coordinate_sphere

# 4-point Gauss-Legendre on [0, 1]; the integrands are analytic in t.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class StepFailure(NumericalError):
    """A single continuation step could not be completed at this increment."""


@dataclass(frozen=True)
class ContinuationConfig:
    step_tol: float = 1e-3  # accepted per-face relative metric residual
    fp_tol: float = 1e-8  # fixed-point displacement tolerance (x geometry scale)
    max_fp_iters: int = 60
    damping: float = 0.5  # fallback step factor when the iteration stops contracting
    min_increment: float = 1e-6  # abort when bisected increments fall below this
    max_rebase: int = 3  # rescue rounds re-linearizing at the updated surface
    rebase_polish: bool = True
    lsq_polish: bool = True  # least-squares cleanup of the sub-grid face defect
    lsq_iters: int = 3
    solver_rtol: float = 1e-10
    recenter_tol: float = 1e-8


@dataclass(frozen=True)
class EmbedStats:
    iterations: int
    residual: float
    damped: bool
    rebase_rounds: int
    polish_iters: int = 0


@dataclass(frozen=True)
class StepStats:
    checkpoint_index: int
    time: float
    substeps: int
    iterations: int
    damped: bool
    metric_residual: float
    step_size: float  # relative Gram increment of the whole leg
    max_mean_curvature: float
    min_shape_det: float
    max_shape_inverse: float
    min_support: float
    centroid_norm: float


@dataclass(frozen=True)
class ContinuationState:
    surface: EmbeddedSurface
    checkpoint_index: int
    stats: StepStats


@dataclass(frozen=True)
class ContinuationRun:
    states: tuple
    completed: bool
    diagnostic: str

    @property
    def final_surface(self) -> EmbeddedSurface:
        return self.states[-1].surface

    @property
    def max_mean_curvature(self) -> float:
        return max(s.stats.max_mean_curvature for s in self.states)

    @property
    def min_shape_det(self) -> float:
        return min(s.stats.min_shape_det for s in self.states)

    @property
    def final_residual(self) -> float:
        return self.states[-1].stats.metric_residual


def seed_round_embedding(khat: float, kappa: float, mesh: SphereMesh) -> EmbeddedSurface:
    """Coordinate sphere of radius 1/sqrt(khat); induced curvature khat for any kappa."""
    if not khat > 0.0:
        raise HypothesisError(f"reference curvature must be positive, got {khat}")
    chart = StaticChart(kappa=kappa)
    return coordinate_sphere(chart, mesh, 1.0 / np.sqrt(khat))


def _rel_gram_diff(grams, target_grams) -> float:
    diff = np.abs(grams - target_grams).max(axis=(1, 2))
    scale = np.abs(target_grams).max(axis=(1, 2))
    return float(np.max(diff / scale))


def gram_residual(surface: EmbeddedSurface, target_grams) -> float:
    """Max over faces of the relative Gram mismatch."""
    return _rel_gram_diff(surface.face_grams, target_grams)


def edge_sq_lengths(surface: EmbeddedSurface):
    """Squared geodesic lengths of the mesh edges: the surface's PL metric.

    One number per edge (shared exactly by the two adjacent faces), so an
    edge-length field is the canonical intrinsic representation of a PL
    metric: it has 3 nv - 6 degrees of freedom, matching vertex positions
    modulo the 6-dimensional isometry group, and nearby convex targets are
    exactly realizable (PL rigidity).  Per-face representations (Gram fields)
    overdetermine positions twice over and generically miss the realizable
    set at O(h).
    """
    edges = surface.mesh.edges
    d = surface.chart.distance(surface.positions[edges[:, 0]], surface.positions[edges[:, 1]])
    return d * d


def conformal_edge_targets(base_edge_sq, edges, u):
    """Scale squared edge lengths by exp(2u) at edge midpoints (endpoint mean)."""
    return base_edge_sq * np.exp(u[edges[:, 0]] + u[edges[:, 1]])


def grams_from_edge_sq(mesh: SphereMesh, edge_sq):
    """Per-face 2x2 Grams of the edge basis from squared edge lengths.

    Law of cosines: G11 = l01^2, G22 = l02^2, G12 = (l01^2 + l02^2 - l12^2)/2.
    """
    fe = mesh.face_edge_indices
    g11 = edge_sq[fe[:, 0]]
    g22 = edge_sq[fe[:, 1]]
    g12 = 0.5 * (g11 + g22 - edge_sq[fe[:, 2]])
    g = np.empty((mesh.nf, 2, 2))
    g[:, 0, 0] = g11
    g[:, 1, 1] = g22
    g[:, 0, 1] = g[:, 1, 0] = g12
    return g


def edge_metric_residual(surface: EmbeddedSurface, target_edge_sq) -> float:
    """Per-face relative metric residual between edge-length Grams."""
    have = grams_from_edge_sq(surface.mesh, edge_sq_lengths(surface))
    want = grams_from_edge_sq(surface.mesh, target_edge_sq)
    return _rel_gram_diff(have, want)


def edge_sq_jacobian(surface: EmbeddedSurface):
    """Exact sparse Jacobian of squared geodesic edge lengths w.r.t. positions.

    With A = f_p f_q - kappa <p, q> = cosh(theta), theta = sqrt(kappa) dist:
    d(dist^2)/dq = (2 theta / sinh theta) (f_p q / f_q - p).
    """
    chart = surface.chart
    edges = surface.mesh.edges
    p = surface.positions[edges[:, 0]]
    q = surface.positions[edges[:, 1]]
    fp = chart.f(p)
    fq = chart.f(q)
    a = fp * fq - chart.kappa * np.einsum("ei,ei->e", p, q)
    theta = np.arccosh(np.maximum(a, 1.0))
    sinh = np.sqrt(np.maximum(a * a - 1.0, 0.0))
    ratio = np.where(theta > 1e-6, theta / np.where(sinh > 0, sinh, 1.0), 1.0 - theta**2 / 6.0)
    dq = 2.0 * ratio[:, None] * (fp / fq)[:, None] * q - 2.0 * ratio[:, None] * p
    dp = 2.0 * ratio[:, None] * (fq / fp)[:, None] * p - 2.0 * ratio[:, None] * q
    ne = len(edges)
    rows = np.repeat(np.arange(ne), 6)
    cols = np.concatenate(
        [3 * edges[:, :1] + np.arange(3), 3 * edges[:, 1:] + np.arange(3)], axis=1
    ).ravel()
    vals = np.concatenate([dp, dq], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, 3 * surface.nv))


def qab_assemble(surface: EmbeddedSurface, y, target_grams):
    """Per-face right-hand side q_ab(y) of the displacement equation.

    q(y) = (target - Gram) - g(c) dy_a dy_b - F(c, yc) d_a d_b yc yc
           - G(c, yc) yc (d_a dy_b + dy_a d_b + dy_a dy_b),
    with F, G the Taylor-remainder integrals of the ambient metric evaluated
    by Gauss-Legendre quadrature along the segment c -> c + yc.  A fixed
    point of the induced linear solve matches the target Grams exactly.
    """
    chart = surface.chart
    faces = surface.mesh.faces
    d = surface.face_edges  # (F, 2, 3) chart edge vectors
    y = np.asarray(y, dtype=float)
    dy = np.stack([y[faces[:, 1]] - y[faces[:, 0]], y[faces[:, 2]] - y[faces[:, 0]]], axis=1)
    c = surface.face_centroids
    yc = y[faces].mean(axis=1)

    q = target_grams - surface.face_grams
    g_c = chart.metric(c)
    q = q - np.einsum("fij,fai,fbj->fab", g_c, dy, dy)

    nf = len(faces)
    fsum = np.zeros((nf, 3, 3, 3, 3))
    gsum = np.zeros((nf, 3, 3, 3))
    for t, wq in zip(_GL_T, _GL_W):
        p = c + t * yc
        fsum += (wq * (1.0 - t)) * chart.d2metric(p)
        gsum += wq * chart.dmetric(p)
    # d2metric index order (l, k, i, j); both contractions with yc symmetrize it
    q = q - np.einsum("flkij,fl,fk,fai,fbj->fab", fsum, yc, yc, d, d)
    mixed = np.einsum("fkij,fk,fai,fbj->fab", gsum, yc, d, dy)
    q = q - mixed - np.transpose(mixed, (0, 2, 1))
    q = q - np.einsum("fkij,fk,fai,fbj->fab", gsum, yc, dy, dy)
    return 0.5 * (q + np.transpose(q, (0, 2, 1)))


def face_rhs_to_qbar(surface: EmbeddedSurface, q_face):
    """Vertex-frame data for the linearized solve: q_face -> qbar = q_vertex/(2f)."""
    return surface.faces_to_vertex_form(q_face) / (2.0 * surface.f[:, None, None])


_GRAM_ROWS = ((0, 0), (0, 1), (1, 1))
_GRAM_ROW_W = np.array([1.0, np.sqrt(2.0), 1.0])  # Frobenius weights for symmetry


def gram_jacobian(surface: EmbeddedSurface):
    """Exact sparse Jacobian of the face-Gram map w.r.t. vertex positions.

    Rows are per-face entries (G11, sqrt2 G12, G22); columns vertex chart
    coordinates.  Includes the dependence of the metric evaluation point
    (the face centroid) on the positions.
    """
    chart = surface.chart
    faces = surface.mesh.faces
    d = surface.face_edges
    c = surface.face_centroids
    g = chart.metric(c)
    dg = chart.dmetric(c)  # (F, k, i, j)
    p = np.einsum("fkj,faj->fak", g, d)  # g(c) d_a
    common = np.einsum("fkij,fai,fbj->fabk", dg, d, d) / 3.0

    nf = len(faces)
    block = np.zeros((nf, 3, 3, 3))  # [face, row, corner, coord]
    for r, (a, b) in enumerate(_GRAM_ROWS):
        block[:, r] += common[:, a, b][:, None, :]
        e0 = (p[:, b] if a == 0 else 0.0) + (p[:, a] if b == 0 else 0.0)
        e1 = (p[:, b] if a == 1 else 0.0) + (p[:, a] if b == 1 else 0.0)
        block[:, r, 1] += e0
        block[:, r, 2] += e1
        block[:, r, 0] -= e0 + e1
    block *= _GRAM_ROW_W[None, :, None, None]
    rows = 3 * np.arange(nf)[:, None, None, None] + np.arange(3)[None, :, None, None]
    cols = 3 * faces[:, None, :, None] + np.arange(3)[None, None, None, :]
    rows = np.broadcast_to(rows, block.shape).ravel()
    cols = np.broadcast_to(cols, block.shape).ravel()
    return sp.csr_matrix((block.ravel(), (rows, cols)), shape=(3 * nf, 3 * surface.nv))


def _edge_newton_polish(surface: EmbeddedSurface, target_edge_sq, config: ContinuationConfig):
    """Newton iteration driving the edge lengths onto the target PL metric.

    The linearized pipeline reconstructs its data at vertices, so defect
    components below that sampling resolution survive the contraction and
    would otherwise accumulate along the continuation path.  The edge-length
    system is square modulo isometries (PL rigidity), so the minimum-norm
    Newton step through the exact Jacobian converges quadratically to an
    exact realization of the target.
    """
    best = surface
    best_res = edge_metric_residual(surface, target_edge_sq)
    iters = 0
    for _ in range(config.lsq_iters):
        if best_res < 1e-12:
            break
        r = edge_sq_lengths(best) - target_edge_sq
        jac = sp.diags(1.0 / target_edge_sq) @ edge_sq_jacobian(best)
        sol = lsmr(jac, -r / target_edge_sq, atol=1e-13, btol=1e-13, maxiter=8000)
        y = sol[0].reshape(-1, 3)
        if not np.all(np.isfinite(y)):
            break
        cand = EmbeddedSurface(best.chart, best.mesh, best.positions + y)
        if not cand.is_convex:
            break
        res = edge_metric_residual(cand, target_edge_sq)
        if not res < best_res:
            break
        best, best_res = cand, res
        iters += 1
    return best, best_res, iters


class _KillingGauge:
    """Mass-weighted least-squares removal of the 6-dim Killing component."""

    def __init__(self, surface: EmbeddedSurface):
        self.basis = killing_displacements(surface.chart, surface.positions)
        sm = np.sqrt(np.repeat(surface.vertex_masses, 3))
        self._sm = sm
        self._q, self._r = np.linalg.qr(self.basis * sm[:, None])

    def project_out(self, tau):
        b = tau.ravel() * self._sm
        coef = np.linalg.solve(self._r, self._q.T @ b)
        return tau - (self.basis @ coef).reshape(tau.shape)


def _contract(base, target_grams, config, integrator, gauge):
    """Fixed-point iteration y -> linearized-solve(q(y)) at a frozen base."""
    y = np.zeros_like(base.positions)
    scale = float(np.max(np.abs(base.positions))) + 1.0
    diff_prev = np.inf
    damped = False
    for it in range(1, config.max_fp_iters + 1):
        qbar = face_rhs_to_qbar(base, qab_assemble(base, y, target_grams))
        sol = solve_linearized(base, qbar, integrator=integrator, rtol=config.solver_rtol)
        y_new = gauge.project_out(sol.tau)
        if not np.all(np.isfinite(y_new)):
            raise StepFailure("non-finite displacement update")
        diff = float(np.max(np.abs(y_new - y)))
        if diff > diff_prev * (1.0 + 1e-9):
            if not (config.damping < 1.0):
                raise StepFailure("fixed-point iteration stopped contracting")
            y_new = y + config.damping * (y_new - y)
            diff *= config.damping
            damped = True
        if diff > 4.0 * scale:
            raise StepFailure("fixed-point iteration diverging")
        y = y_new
        diff_prev = diff
        if diff < config.fp_tol * scale:
            return y, it, damped
    if diff_prev < 1e3 * config.fp_tol * scale:
        return y, config.max_fp_iters, damped
    raise StepFailure(
        f"no fixed-point convergence in {config.max_fp_iters} iterations "
        f"(last displacement change {diff_prev:.3e})"
    )


def embed_nearby(surface: EmbeddedSurface, target_edge_sq, config: ContinuationConfig | None = None):
    """Solve the embedding equation for a nearby target PL metric.

    The target is a squared-edge-length field.  A fixed-point contraction
    over linearized solves does the bulk of the motion, working against the
    law-of-cosines Grams of the target anchored to the base surface's own
    chord-measurement pattern, so that the zero-displacement right-hand side
    is exactly the intrinsic metric increment.  A Newton polish on the edge
    equations then removes the sub-vertex-resolution defect, and the
    accepted surface is recentered (an isometry, so the residual is
    unchanged).  Raises StepFailure when the iteration fails, the residual
    stays above the step tolerance, or convexity is lost.
    """
    config = config or ContinuationConfig()
    target_gram_view = grams_from_edge_sq(surface.mesh, target_edge_sq)
    base = surface
    iters = 0
    damped = False
    best_res = np.inf
    best = None
    rounds = 0
    for rounds in range(1, max(1, config.max_rebase) + 1):
        integrator = TwistIntegrator(base)
        gauge = _KillingGauge(base)
        # Anchor the Gram-form target to the base's chord pattern: FD Grams
        # and edge-length Grams of the same surface differ at O(h^2), and
        # subtracting the base's own difference makes q(0) purely intrinsic.
        pattern = np.array(base.face_grams) - grams_from_edge_sq(base.mesh, edge_sq_lengths(base))
        y, n, d = _contract(base, target_gram_view + pattern, config, integrator, gauge)
        iters += n
        damped = damped or d
        cand = EmbeddedSurface(base.chart, base.mesh, base.positions + y)
        if not cand.is_convex:
            raise StepFailure("convexity lost (min principal curvature <= 0)")
        res = edge_metric_residual(cand, target_edge_sq)
        improved = res < 0.67 * best_res
        if res < best_res:
            best_res, best = res, cand
        # Rebase rounds are a rescue for steps at risk of failing, not a
        # polish: the converged residual is set by the step increment (the
        # leftover defect is mesh-rough and below the vertex-data
        # resolution), so extra rounds stall once the increment is resolved.
        if not config.rebase_polish or res < 0.5 * config.step_tol or not improved:
            break
        base = cand
    cand = best
    polish_iters = 0
    if config.lsq_polish:
        cand, _, polish_iters = _edge_newton_polish(cand, target_edge_sq, config)
    iso = recenter_isometry(cand.chart, cand.positions, tol=config.recenter_tol)
    cand = cand.isometry_image(iso)
    res = edge_metric_residual(cand, target_edge_sq)
    if not res < config.step_tol:
        raise StepFailure(f"metric residual {res:.3e} above step tolerance {config.step_tol:.1e}")
    return cand, EmbedStats(
        iterations=iters,
        residual=res,
        damped=damped,
        rebase_rounds=rounds,
        polish_iters=polish_iters,
    )


def _shape_monitors(surface: EmbeddedSurface):
    lam, mu = surface.principal_curvatures
    det = lam * mu
    return (
        float(surface.mean_curvature.max()),
        float(det.min()),
        float((1.0 / mu).max()),
        float(surface.support_function.min()),
    )


def _state(surface, index, time, substeps, iterations, damped, residual, step_size):
    max_h, min_det, max_hinv, min_supp = _shape_monitors(surface)
    centroid = float(np.linalg.norm(surface.positions.mean(axis=0)))
    stats = StepStats(
        checkpoint_index=index,
        time=time,
        substeps=substeps,
        iterations=iterations,
        damped=damped,
        metric_residual=residual,
        step_size=step_size,
        max_mean_curvature=max_h,
        min_shape_det=min_det,
        max_shape_inverse=max_hinv,
        min_support=min_supp,
        centroid_norm=centroid,
    )
    return ContinuationState(surface=surface, checkpoint_index=index, stats=stats)


def continuation_run(flow_path, kappa: float, mesh: SphereMesh,
                     config: ContinuationConfig | None = None) -> ContinuationRun:
    """Walk the flow checkpoints backward from the round seed to time zero."""
    config = config or ContinuationConfig()
    checks = flow_path.checkpoints
    if not flow_path.completed:
        raise HypothesisError("flow path did not reach its roundness tolerance")
    if not checks:
        raise HypothesisError("flow path has no checkpoints")
    for ck in checks[1:]:
        if not ck.min_K + kappa > 0.0:
            raise HypothesisError(
                f"scalar curvature bound violated along the path: "
                f"min K + kappa = {ck.min_K + kappa:.3e} at t = {ck.t:.3f}"
            )
    if checks[0].min_K + kappa < -1e-10:
        raise HypothesisError(
            f"input metric violates K + kappa >= 0 (margin {checks[0].min_K + kappa:.3e})"
        )

    khat = flow_path.khat
    seed = seed_round_embedding(khat, kappa, mesh)
    seed_edge_sq = edge_sq_lengths(seed)
    edges = mesh.edges

    def target_for(u_vec):
        # Seed edge lengths conformally rescaled.  Using the measured seed
        # lengths (instead of abstract chordal ones) removes the O(h^2)
        # representation gap from every step target, so the solve converges
        # to machine precision on the trivial path.
        return conformal_edge_targets(seed_edge_sq, edges, u_vec)

    states = [
        _state(
            seed,
            index=len(checks),
            time=np.inf,
            substeps=0,
            iterations=0,
            damped=False,
            residual=edge_metric_residual(seed, seed_edge_sq),
            step_size=0.0,
        )
    ]

    surface = seed
    u_from = np.zeros(mesh.nv)
    for i in range(len(checks) - 1, -1, -1):
        u_to = checks[i].u
        leg_start_edge_sq = edge_sq_lengths(surface)
        frac_done = 0.0
        substeps = 0
        iters = 0
        damped = False
        residual = states[-1].stats.metric_residual
        while frac_done < 1.0:
            frac = 1.0 - frac_done
            base_target = target_for(u_from + frac_done * (u_to - u_from))
            last_exc = None
            while True:
                u_t = u_from + (frac_done + frac) * (u_to - u_from)
                target = target_for(u_t)
                increment = float(np.max(np.abs(target - base_target) / base_target))
                if last_exc is not None and increment < config.min_increment:
                    diag = (
                        f"aborted at checkpoint {i} (t={checks[i].t:.4f}): "
                        f"increment below {config.min_increment:.1e} still fails: {last_exc}"
                    )
                    return ContinuationRun(tuple(states), False, diag)
                try:
                    surface_new, st = embed_nearby(surface, target, config)
                    break
                except StepFailure as exc:
                    last_exc = exc
                    frac *= 0.5
            surface = surface_new
            frac_done += frac
            substeps += 1
            iters += st.iterations
            damped = damped or st.damped
            residual = st.residual
        leg_size = edge_metric_residual(surface, leg_start_edge_sq)
        states.append(
            _state(
                surface,
                index=i,
                time=checks[i].t,
                substeps=substeps,
                iterations=iters,
                damped=damped,
                residual=residual,
                step_size=leg_size,
            )
        )
        u_from = u_to
    return ContinuationRun(tuple(states), True, "")
