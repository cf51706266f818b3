"""Spacelike graphs in the cosmological product chart of anti-de Sitter space.

The Lorentzian ambient is g = -dt^2 + S(t)^2 g_H with warp S(t) = cos(sqrt(k) t)
and g_H hyperbolic of curvature -k; the chart covers |sqrt(k) t| < pi/2.  A
sphere metric sigma together with a time profile s describes the candidate
spacelike graph {t = s(x)}.  Writing w = 1 + |grad s|^2 (sigma-norms), the
graph metric sigma_bar = sigma + ds (x) ds and the projected metric
sigma_hat = S(s)^{-2} sigma_bar control everything:

* `condition_margin` evaluates the pointwise certificate
  margin = K + (S'/S) lap s + (S''/S - S'^2/S^2)|grad s|^2
         + (det Hess s / det sigma - (S'/S) s^a s^b Hess_ab s) / w + k,
  which equals w K_hat / S^2 + k; margin > 0 everywhere implies
  K_hat > -k S^2 / w >= -k, so the projected metric is embeddable into the
  hyperbolic slice.  (A commonly printed variant of this formula carries the
  opposite sign on the |grad s|^2 term; that variant breaks the identity with
  K_hat -- see `GraphCondition.margin_printed` -- and is reported only for
  comparison.)
* `projected_curvature` computes K_hat by the composition route: the graph
  metric's curvature K_bar = (K + det Hess s / det sigma / w) / w followed by
  the conformal change K_hat = S^2 (K_bar + lap_bar log S).  Agreement with
  the expanded route checks the algebra end to end.
* `ads_embed` realizes the graph: embed the projected metric into the
  hyperbolic slice by the continuation driver plus a per-edge homotopy onto
  the exact projected edge lengths, then verify a posteriori that the
  pullback of -dt^2 + S(t)^2 g_H under (s, r) reproduces sigma face by face
  and is positive definite (the graph really is spacelike).

`pl_gauss_curvature` (angle defect of an abstract edge-length metric) and
`arc_edge_sq` (quadrature edge lengths of an abstract metric density) exist
so the curvature formulas above can be cross-checked against the piecewise
geometry without going through any of the formulas themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import ConformalMetric
from .continuation import (
    ContinuationConfig,
    ContinuationRun,
    StepFailure,
    conformal_edge_targets,
    continuation_run,
    edge_sq_lengths,
    embed_nearby,
    grams_from_edge_sq,
    seed_round_embedding,
)
from .errors import HypothesisError, NumericalError
from .ricci import flow_until_round
from .surface import EmbeddedSurface

# margin below which the time profile is considered to leave the chart
CHART_GUARD = 1e-6


def warp_terms(kappa: float, s: np.ndarray):
    """S, S'/S and S''/S - (S'/S)^2 for the warp S(t) = cos(sqrt(kappa) t)."""
    rk = np.sqrt(kappa)
    S = np.cos(rk * s)
    ratio = -rk * np.tan(rk * s)
    curv = -kappa / (S * S)
    return S, ratio, curv


@dataclass(frozen=True)
class AdSInput:
    """A sphere metric with a time profile for the product-chart graph."""

    metric: ConformalMetric
    s: np.ndarray
    kappa: float

    def __post_init__(self):
        s = np.ascontiguousarray(self.s, dtype=float)
        nv = self.metric.mesh.nv
        if s.shape != (nv,):
            raise ValueError(f"s must have shape ({nv},), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("s contains non-finite entries")
        if not (self.kappa > 0):
            raise HypothesisError(f"ambient curvature scale must be positive, got {self.kappa}")
        reach = float(np.max(np.abs(np.sqrt(self.kappa) * s)))
        if not reach < np.pi / 2 - CHART_GUARD:
            raise HypothesisError(
                "time profile leaves the product chart: "
                f"max |sqrt(kappa) s| = {reach:.6f} >= pi/2 - {CHART_GUARD}"
            )
        s.setflags(write=False)
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class GraphCondition:
    """Pointwise embeddability certificate for a product-chart graph."""

    margin: np.ndarray  # corrected certificate; > 0 implies K_hat + kappa > 0
    margin_printed: np.ndarray  # opposite-sign |grad s|^2 variant, for comparison
    projected_curvature: np.ndarray  # K_hat via the expanded formula

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())


def _scalar_terms(metric: ConformalMetric, s: np.ndarray):
    """sigma-covariant ingredients of the graph formulas at the vertices."""
    grad = metric.gradient(s)  # contravariant frame components
    gn2 = metric.grad_norm_sq(s)
    hess = metric.hessian(s)  # covariant frame components
    lap = metric.laplacian(s)
    lam = metric.lam
    det_ratio = (hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] ** 2) / (lam * lam)
    third = np.einsum("va,vb,vab->v", grad, grad, hess)
    return gn2, lap, det_ratio, third


def condition_margin(inp: AdSInput) -> GraphCondition:
    """Pointwise margin of the graph-embeddability condition."""
    K = inp.metric.gauss_curvature()
    gn2, lap, det_ratio, third = _scalar_terms(inp.metric, inp.s)
    S, ratio, curv = warp_terms(inp.kappa, inp.s)
    w = 1.0 + gn2
    shared = K + ratio * lap + (det_ratio - ratio * third) / w
    margin = shared + curv * gn2 + inp.kappa
    margin_printed = shared - curv * gn2 + inp.kappa
    khat = S * S / w * (margin - inp.kappa)
    return GraphCondition(margin=margin, margin_printed=margin_printed, projected_curvature=khat)


def graph_curvature(inp: AdSInput) -> np.ndarray:
    """Curvature of the graph metric sigma + ds (x) ds."""
    K = inp.metric.gauss_curvature()
    gn2, _, det_ratio, _ = _scalar_terms(inp.metric, inp.s)
    w = 1.0 + gn2
    return (K + det_ratio / w) / w


def projected_curvature(inp: AdSInput) -> np.ndarray:
    """K_hat by composition: graph-metric curvature then conformal division by S^2.

    Independent algebraic route from the expanded formula inside
    `condition_margin`; the two must agree to solver precision.
    """
    K = inp.metric.gauss_curvature()
    gn2, lap, det_ratio, third = _scalar_terms(inp.metric, inp.s)
    S, ratio, curv = warp_terms(inp.kappa, inp.s)
    w = 1.0 + gn2
    kbar = (K + det_ratio / w) / w
    lap_bar_logS = ratio * (lap - third / w) / w + curv * gn2 / w
    return S * S * (kbar + lap_bar_logS)


# ---- piecewise-linear cross-check utilities --------------------------------


def pl_gauss_curvature(mesh, edge_sq: np.ndarray) -> np.ndarray:
    """Angle-defect curvature of an abstract per-edge squared-length metric.

    Corner angles by the Euclidean law of cosines per face (the piecewise
    metric is flat inside faces), defect over barycentric (one-third) areas.
    """
    ell = np.sqrt(edge_sq[mesh.face_edge_indices])
    l01, l02, l12 = ell[:, 0], ell[:, 1], ell[:, 2]

    def corner(a, b, c):
        return np.arccos(np.clip((a * a + b * b - c * c) / (2.0 * a * b), -1.0, 1.0))

    ang = np.stack(
        [corner(l01, l02, l12), corner(l01, l12, l02), corner(l02, l12, l01)], axis=1
    )
    total = np.zeros(mesh.nv)
    np.add.at(total, mesh.faces.ravel(), ang.ravel())
    p = 0.5 * (l01 + l02 + l12)
    area = np.sqrt(np.maximum(p * (p - l01) * (p - l02) * (p - l12), 0.0))
    mass = np.zeros(mesh.nv)
    np.add.at(mass, mesh.faces.ravel(), np.repeat(area / 3.0, 3))
    return (2.0 * np.pi - total) / mass


def arc_edge_sq(mesh, density, nodes: int = 8) -> np.ndarray:
    """Squared edge lengths of an abstract metric by great-circle quadrature.

    density(points, tangents) -> per-point value of the quadratic form
    g_x(v, v); the integral runs along the unit-sphere arc joining the edge
    endpoints, so analytically given metrics produce edge lengths accurate to
    quadrature precision (no vertex interpolation enters).
    """
    x, wts = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1.0)
    wts = 0.5 * wts
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    theta = np.arccos(np.clip(np.einsum("ei,ei->e", a, b), -1.0, 1.0))
    length = np.zeros(mesh.ne)
    st = np.sin(theta)
    for tk, wk in zip(t, wts):
        # slerp point and its tau-derivative (|d gamma/d tau| = theta on S^2)
        ca = np.sin((1.0 - tk) * theta) / st
        cb = np.sin(tk * theta) / st
        g = ca[:, None] * a + cb[:, None] * b
        da = -theta * np.cos((1.0 - tk) * theta) / st
        db = theta * np.cos(tk * theta) / st
        dg = da[:, None] * a + db[:, None] * b
        length += wk * np.sqrt(density(g, dg))
    return length * length


# ---- embedding of the projected metric -------------------------------------


def slice_targets(inp: AdSInput):
    """Per-edge squared lengths for the hyperbolic slice, and of sigma itself.

    The projected metric S(s)^{-2}(sigma + ds (x) ds) in the same piecewise
    family the continuation realizes: round-seed measured lengths carry the
    conformal factor of sigma; the time increment enters exactly per edge; the
    warp is evaluated at edge-midpoint time.
    """
    mesh = inp.metric.mesh
    seed = seed_round_embedding(inp.metric.khat, inp.kappa, mesh)
    sigma_sq = conformal_edge_targets(edge_sq_lengths(seed), mesh.edges, inp.metric.u)
    ds = inp.s[mesh.edges[:, 1]] - inp.s[mesh.edges[:, 0]]
    smid = 0.5 * (inp.s[mesh.edges[:, 0]] + inp.s[mesh.edges[:, 1]])
    S = np.cos(np.sqrt(inp.kappa) * smid)
    return (sigma_sq + ds * ds) / (S * S), sigma_sq


def pullback_report(inp: AdSInput, surface: EmbeddedSurface):
    """Compare the graph's pullback of -dt^2 + S^2 g_H against sigma.

    Returns (max per-face relative Gram error, spacelike flag).  Edge version
    of the pullback: squared length contributions S^2 l_H^2 - (Delta s)^2.
    """
    mesh = inp.metric.mesh
    _, sigma_sq = slice_targets(inp)
    meas = edge_sq_lengths(surface)
    ds = inp.s[mesh.edges[:, 1]] - inp.s[mesh.edges[:, 0]]
    smid = 0.5 * (inp.s[mesh.edges[:, 0]] + inp.s[mesh.edges[:, 1]])
    S = np.cos(np.sqrt(inp.kappa) * smid)
    pull = S * S * meas - ds * ds
    have = grams_from_edge_sq(mesh, pull)
    want = grams_from_edge_sq(mesh, sigma_sq)
    diff = np.abs(have - want).max(axis=(1, 2))
    scale = np.abs(want).max(axis=(1, 2))
    rel = float((diff / scale).max())
    tr = have[:, 0, 0] + have[:, 1, 1]
    det = have[:, 0, 0] * have[:, 1, 1] - have[:, 0, 1] ** 2
    spacelike = bool(np.all(tr > 0.0) and np.all(det > 0.0))
    return rel, spacelike


@dataclass(frozen=True)
class AdSEmbedResult:
    surface: EmbeddedSurface
    s: np.ndarray
    completed: bool
    diagnostic: str
    margin_min: float
    pullback_residual: float
    spacelike: bool
    homotopy_steps: int
    continuation: ContinuationRun


def _edge_homotopy(surface, target_edge_sq, config):
    """Walk the surface onto exact per-edge targets, bisecting on failure."""
    base = edge_sq_lengths(surface)
    log_ratio = np.log(target_edge_sq / base)
    lam, step, steps = 0.0, 1.0, 0
    while lam < 1.0:
        step = min(step, 1.0 - lam)
        target = base * np.exp(log_ratio * (lam + step))
        try:
            surface, _ = embed_nearby(surface, target, config)
        except StepFailure:
            step *= 0.5
            rel = float(np.max(np.abs(np.expm1(log_ratio * step))))
            if rel < config.min_increment:
                raise
            continue
        lam += step
        steps += 1
        step *= 1.4
    return surface, steps


def ads_embed(inp: AdSInput, config: ContinuationConfig | None = None) -> AdSEmbedResult:
    """Embed the graph: hyperbolic-slice surface plus the time profile.

    Requires a positive condition margin (the graph hypothesis); realizes the
    projected metric in the hyperbolic slice by continuation from the round
    seed followed by a per-edge homotopy onto the exact projected lengths,
    and verifies the product-chart pullback against sigma.
    """
    config = config or ContinuationConfig()
    cond = condition_margin(inp)
    if not cond.min_margin > 0.0:
        bad = int(np.sum(cond.margin <= 0.0))
        raise HypothesisError(
            f"graph condition violated at {bad} vertices (min margin {cond.min_margin:.3e})"
        )
    path = flow_until_round(inp.metric, kappa=inp.kappa)
    run = continuation_run(path, inp.kappa, inp.metric.mesh, config)
    if not run.completed:
        return AdSEmbedResult(
            surface=run.final_surface,
            s=inp.s,
            completed=False,
            diagnostic=f"slice continuation: {run.diagnostic}",
            margin_min=cond.min_margin,
            pullback_residual=float("inf"),
            spacelike=False,
            homotopy_steps=0,
            continuation=run,
        )
    target, _ = slice_targets(inp)
    try:
        surface, steps = _edge_homotopy(run.final_surface, target, config)
    except (StepFailure, NumericalError) as exc:
        return AdSEmbedResult(
            surface=run.final_surface,
            s=inp.s,
            completed=False,
            diagnostic=f"projection homotopy: {exc}",
            margin_min=cond.min_margin,
            pullback_residual=float("inf"),
            spacelike=False,
            homotopy_steps=0,
            continuation=run,
        )
    rel, spacelike = pullback_report(inp, surface)
    return AdSEmbedResult(
        surface=surface,
        s=inp.s,
        completed=True,
        diagnostic="",
        margin_min=cond.min_margin,
        pullback_residual=rel,
        spacelike=spacelike,
        homotopy_steps=steps,
        continuation=run,
    )
