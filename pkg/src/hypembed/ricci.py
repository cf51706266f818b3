"""Normalized Ricci flow of conformal sphere metrics.

The flow evolves u in sigma = e^{2u} sigma_hat by du/dt = Khat - K(u),
area-renormalized to the round reference area 4 pi / Khat after every step.
Steps are semi-implicit: the Laplacian acts on the increment, the curvature
nonlinearity is explicit, so stiffness does not cap dt at mesh scale.

The returned path is the continuation driver's input: checkpoints are spaced
geometrically in the roundness measure ||K - Khat||_inf so backward embedding
steps see comparable metric increments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conformal import ConformalMetric
from .errors import HypothesisError, NumericalError

R_MONOTONE_TOL = 1e-8


@dataclass(frozen=True)
class FlowConfig:
    roundness_tol: float = 1e-3
    dt_initial: float = 2e-3
    # cap keeps the semi-implicit damping factor close to the continuum
    # decay rate; larger steps stay stable but bias the fitted rate low
    dt_max: float = 0.1
    max_steps: int = 20000
    max_time: float = 200.0
    checkpoint_ratio: float = 0.8
    max_step_norm: float = 0.1
    grow_factor: float = 1.4


@dataclass(frozen=True)
class FlowCheckpoint:
    t: float
    u: np.ndarray
    min_K: float
    roundness: float
    area: float
    dist_to_limit: float = np.nan  # ||u - u_final||_inf, filled at path build


@dataclass(frozen=True)
class FlowPath:
    khat: float
    checkpoints: tuple[FlowCheckpoint, ...]
    decay_rate: float
    steps_taken: int
    rejected_steps: int
    completed: bool
    diagnostic: str = ""

    def __post_init__(self):
        times = [c.t for c in self.checkpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("checkpoint times must be strictly increasing")

    @property
    def times(self):
        return np.array([c.t for c in self.checkpoints])

    @property
    def final_time(self):
        return self.checkpoints[-1].t

    def metric_at(self, mesh, index):
        return ConformalMetric(mesh, self.checkpoints[index].u, self.khat)

    def min_scalar_curvatures(self):
        """min R = 2 min K per checkpoint."""
        return np.array([2.0 * c.min_K for c in self.checkpoints])


def flow_step(cm: ConformalMetric, dt: float) -> ConformalMetric:
    """One semi-implicit step; raises NumericalError if the solve fails."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    mesh = cm.mesh
    K = cm.gauss_curvature()
    rhs = dt * (cm.khat - K)
    lap_unit = mesh.fit_operators[2] + mesh.fit_operators[4]
    inv_lam = sp.diags(1.0 / cm.lam)
    system = sp.identity(mesh.nv, format="csc") - dt * (inv_lam @ lap_unit).tocsc()
    try:
        delta = spla.splu(system).solve(rhs)
    except RuntimeError as exc:  # singular factorization
        raise NumericalError(f"flow step factorization failed: {exc}") from None
    if not np.all(np.isfinite(delta)):
        raise NumericalError("flow step produced non-finite increment")
    u_new = cm.u + delta
    stepped = cm.with_u(u_new)
    # multiplicative area renormalization to the round reference area
    target = 4.0 * np.pi / cm.khat
    u_new = u_new + 0.5 * np.log(target / stepped.area())
    return cm.with_u(u_new)


def _fit_decay_rate(times, dists):
    """Slope fit of log dist vs t over the tail; returns positive rate."""
    good = dists > 1e-13
    t, d = times[good], dists[good]
    if len(t) < 4:
        return np.nan
    tail = slice(len(t) // 2, None)
    slope = np.polyfit(t[tail], np.log(d[tail]), 1)[0]
    return -float(slope)


def flow_until_round(
    cm: ConformalMetric,
    roundness_tol: float | None = None,
    kappa: float | None = None,
    config: FlowConfig = FlowConfig(),
) -> FlowPath:
    """Flow to within roundness_tol of constant curvature, checkpointing.

    kappa, when given, gates the run on the embedding hypothesis
    K >= -kappa (pointwise, slack 1e-10) for the initial metric.
    While min K < 0 the checkpoint minima must not decrease (maximum
    principle); a violation beyond tolerance raises NumericalError.
    """
    if roundness_tol is None:
        roundness_tol = config.roundness_tol
    mesh = cm.mesh

    K0 = cm.gauss_curvature()
    if kappa is not None and K0.min() < -kappa - 1e-10:
        raise HypothesisError(
            f"initial Gauss curvature min {K0.min():.6g} violates K >= -kappa "
            f"with kappa = {kappa:.6g}"
        )

    # normalize the input to the reference area so the path is area-constant
    target_area = 4.0 * np.pi / cm.khat
    cm = cm.with_u(cm.u + 0.5 * np.log(target_area / cm.area()))

    def snapshot(t, metric):
        K = metric.gauss_curvature()
        return FlowCheckpoint(
            t=t,
            u=np.array(metric.u),
            min_K=float(K.min()),
            roundness=float(np.abs(K - metric.khat).max()),
            area=metric.area(),
        )

    checks = [snapshot(0.0, cm)]
    if checks[0].roundness < roundness_tol:
        path_checks = _with_limit_dists(checks)
        return FlowPath(cm.khat, tuple(path_checks), np.nan, 0, 0, True)

    t = 0.0
    dt = config.dt_initial
    steps = rejected = 0
    next_mark = config.checkpoint_ratio * checks[0].roundness
    diagnostic = ""
    completed = False

    while steps < config.max_steps and t < config.max_time:
        try:
            stepped = flow_step(cm, dt)
        except NumericalError:
            dt *= 0.5
            rejected += 1
            if dt < 1e-12:
                diagnostic = "step size underflow"
                break
            continue
        delta_norm = np.abs(stepped.u - cm.u).max()
        if delta_norm > config.max_step_norm:
            dt *= 0.5
            rejected += 1
            if dt < 1e-12:
                diagnostic = "step size underflow"
                break
            continue
        cm = stepped
        t += dt
        steps += 1
        if delta_norm < 0.25 * config.max_step_norm:
            dt = min(dt * config.grow_factor, config.dt_max)

        rough = float(np.abs(cm.gauss_curvature() - cm.khat).max())
        if rough <= next_mark or rough < roundness_tol:
            checks.append(snapshot(t, cm))
            next_mark = config.checkpoint_ratio * rough
            if rough < roundness_tol:
                completed = True
                break

    if not completed and not diagnostic:
        diagnostic = "time budget exhausted before roundness tolerance"

    _assert_min_r_monotone(checks)
    path_checks = _with_limit_dists(checks)
    rate = _fit_decay_rate(
        np.array([c.t for c in path_checks]),
        np.array([c.dist_to_limit for c in path_checks]),
    )
    return FlowPath(
        cm.khat, tuple(path_checks), rate, steps, rejected, completed, diagnostic
    )


def _with_limit_dists(checks):
    u_limit = checks[-1].u
    return [
        replace(c, dist_to_limit=float(np.abs(c.u - u_limit).max())) for c in checks
    ]


def _assert_min_r_monotone(checks):
    """Maximum principle: min R nondecreasing while negative."""
    r = [2.0 * c.min_K for c in checks]
    for a, b in zip(r, r[1:]):
        if a < 0.0 and b < a - R_MONOTONE_TOL:
            raise NumericalError(
                f"min R decreased from {a:.3e} to {b:.3e} while negative"
            )
