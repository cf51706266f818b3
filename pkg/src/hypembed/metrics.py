"""Analytic scalar-field families on the sphere and metric construction.

A family evaluates a smooth field at unit-sphere points; conformal metrics are
e^{2u} times the round reference with u drawn from a family.  Conventions:

* ``harmonic_bump`` sums real-harmonic terms (l, m, amplitude).  Zonal terms
  (m = 0) use the Legendre polynomial P_l(z), which is peak-normalized
  (P_l(1) = 1), so ``amplitude`` is the height at the pole.  Tesseral terms
  use Schmidt semi-normalized associated Legendre functions times
  cos(m phi) for m > 0 and sin(|m| phi) for m < 0.
* ``two_bump`` sums geodesic Gaussians a * exp(-theta_c^2 / (2 w^2)) with
  theta_c the angle to the bump center.
* ``constant`` and ``zero``/``round`` are what they say; ``csv`` loads a
  per-vertex column written by the field CSV writer.
"""

from __future__ import annotations

from math import factorial

import numpy as np
from scipy.special import eval_legendre, lpmv

from .conformal import ConformalMetric
from .errors import HypothesisError
from .fileio import read_field_csv

FAMILY_NAMES = ("round", "zero", "constant", "harmonic_bump", "two_bump", "csv")


def real_harmonic(l: int, m: int, vertices: np.ndarray) -> np.ndarray:
    """Real harmonic basis field; see the module docstring for normalization."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid harmonic degree/order (l={l}, m={m})")
    r = np.linalg.norm(vertices, axis=1)
    z = np.clip(vertices[:, 2] / r, -1.0, 1.0)
    if m == 0:
        return eval_legendre(l, z)
    mm = abs(m)
    norm = np.sqrt(2.0 * factorial(l - mm) / factorial(l + mm))
    phi = np.arctan2(vertices[:, 1], vertices[:, 0])
    azimuth = np.cos(mm * phi) if m > 0 else np.sin(mm * phi)
    return norm * lpmv(mm, l, z) * azimuth


def gaussian_bump(center: np.ndarray, amplitude: float, width: float,
                  vertices: np.ndarray) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    nc = np.linalg.norm(c)
    if not nc > 0:
        raise ValueError("bump center must be a nonzero direction")
    if not width > 0:
        raise ValueError(f"bump width must be positive, got {width}")
    c = c / nc
    r = np.linalg.norm(vertices, axis=1)
    cosang = np.clip(vertices @ c / r, -1.0, 1.0)
    theta = np.arccos(cosang)
    return amplitude * np.exp(-0.5 * (theta / width) ** 2)


def evaluate_family(name: str, vertices: np.ndarray, *, value: float = 0.0,
                    terms=(), bumps=(), csv_path: str | None = None) -> np.ndarray:
    """Evaluate a named field family at unit-sphere points."""
    nv = len(vertices)
    if name in ("round", "zero"):
        return np.zeros(nv)
    if name == "constant":
        return np.full(nv, float(value))
    if name == "harmonic_bump":
        out = np.zeros(nv)
        for l, m, a in terms:
            out += a * real_harmonic(int(l), int(m), vertices)
        return out
    if name == "two_bump":
        out = np.zeros(nv)
        for cx, cy, cz, a, w in bumps:
            out += gaussian_bump((cx, cy, cz), a, w, vertices)
        return out
    if name == "csv":
        if not csv_path:
            raise ValueError("csv family needs a file path")
        values, _ = read_field_csv(csv_path)
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.ndim != 1 or len(values) != nv:
            raise ValueError(
                f"field file {csv_path} has {values.size} values, "
                f"mesh needs {nv}"
            )
        return values
    raise ValueError(f"unknown field family '{name}' (choose from {FAMILY_NAMES})")


def conformal_from_field(mesh, u: np.ndarray, khat: float = 1.0) -> ConformalMetric:
    return ConformalMetric(mesh, u, khat)


def curvature_margin(metric: ConformalMetric, kappa: float) -> float:
    """min(K + kappa) over vertices: the embeddability hypothesis margin."""
    return float((metric.gauss_curvature() + kappa).min())


def require_admissible(metric: ConformalMetric, kappa: float, tol: float = 1e-6) -> float:
    """Raise if the curvature hypothesis K >= -kappa fails beyond tolerance."""
    margin = curvature_margin(metric, kappa)
    if margin < -tol:
        raise HypothesisError(
            "curvature hypothesis K >= -kappa violated: "
            f"min(K + kappa) = {margin:.6e} < -{tol}"
        )
    return margin
