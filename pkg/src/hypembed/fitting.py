"""Batched local least-squares fits used by the discrete differential operators.

Every vertex carries a small stencil (its 1-ring or 2-ring) together with 2D
chart coordinates of the stencil points.  Derivatives of a sampled function are
estimated by fitting a polynomial without constant term to the differences
phi(neighbor) - phi(center); the fit weights depend only on the coordinates, so
they are precomputed once per mesh or per surface and reused as sparse
operators.  Stencils are grouped by size so the normal equations solve as one
batched call per group.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

TIKHONOV = 1e-12


def _design_cubic(xi):
    """Polynomial basis [d1, d2, h11, h12, h22, c1..c4] evaluated at points xi.

    Scaled so the coefficients are exactly the first and second derivatives:
    columns x, y, x^2/2, xy, y^2/2, x^3/6, x^2 y/2, x y^2/2, y^3/6.
    """
    x, y = xi[..., 0], xi[..., 1]
    return np.stack(
        [
            x,
            y,
            0.5 * x * x,
            x * y,
            0.5 * y * y,
            x * x * x / 6.0,
            0.5 * x * x * y,
            0.5 * x * y * y,
            y * y * y / 6.0,
        ],
        axis=-1,
    )


def _design_quadratic(xi):
    x, y = xi[..., 0], xi[..., 1]
    return np.stack([x, y, 0.5 * x * x, x * y, 0.5 * y * y], axis=-1)


def _design_linear(xi):
    return xi.copy()


_DESIGNS = {"linear": (_design_linear, 2), "quadratic": (_design_quadratic, 5), "cubic": (_design_cubic, 9)}


def fit_weight_rows(coords, indptr, order="cubic"):
    """Per-stencil pseudo-inverse rows for derivative extraction.

    coords is the CSR-laid-out (nnz, 2) array of neighbor chart coordinates.
    Returns (nout, nnz) where nout is 2 (linear) or 5 (quadratic/cubic); row k
    gives the weights of derivative k as a functional of the difference data.
    Falls back to the quadratic basis on stencils too small for a cubic fit.
    """
    nv = len(indptr) - 1
    sizes = np.diff(indptr)
    design_fn, ncoef = _DESIGNS[order]
    nout = 2 if order == "linear" else 5
    rows = np.zeros((nout, coords.shape[0]))

    for n in np.unique(sizes):
        idx = np.nonzero(sizes == n)[0]
        cols = (indptr[idx][:, None] + np.arange(n)[None, :]).ravel()
        xi = coords[cols].reshape(len(idx), n, 2)
        scale = np.sqrt(np.mean(np.sum(xi**2, axis=2), axis=1))
        scale = np.maximum(scale, 1e-300)
        xis = xi / scale[:, None, None]

        use = order
        if order == "cubic" and n < ncoef + 1:
            use = "quadratic"
        fn, m = _DESIGNS[use]
        X = fn(xis)  # (G, n, m)
        ata = np.einsum("gnm,gnk->gmk", X, X)
        ata[:, np.arange(m), np.arange(m)] += TIKHONOV
        pinv = np.linalg.solve(ata, X.transpose(0, 2, 1))  # (G, m, n)

        # unscale: first derivatives by 1/s, second by 1/s^2
        pinv[:, 0:2] /= scale[:, None, None]
        if m > 2:
            pinv[:, 2:5] /= (scale**2)[:, None, None]
        for k in range(min(nout, m)):
            rows[k, cols] = pinv[:, k, :].ravel()
    return rows


def value_fit_rows(coords, indptr):
    """Per-stencil rows estimating the value at the origin by a linear fit.

    Unlike fit_weight_rows the data carries no center sample (e.g. face
    centroid values reconstructed at a vertex), so the model includes a
    constant term and row weights act on the raw data.
    """
    sizes = np.diff(indptr)
    rows = np.zeros(coords.shape[0])
    for n in np.unique(sizes):
        idx = np.nonzero(sizes == n)[0]
        cols = (indptr[idx][:, None] + np.arange(n)[None, :]).ravel()
        xi = coords[cols].reshape(len(idx), n, 2)
        scale = np.sqrt(np.mean(np.sum(xi**2, axis=2), axis=1))
        scale = np.maximum(scale, 1e-300)
        xis = xi / scale[:, None, None]
        X = np.concatenate([np.ones(xis.shape[:2] + (1,)), xis], axis=2)
        m = 3 if n >= 3 else 1  # constant-only on degenerate stencils
        X = X[:, :, :m]
        ata = np.einsum("gnm,gnk->gmk", X, X)
        ata[:, np.arange(m), np.arange(m)] += TIKHONOV
        pinv = np.linalg.solve(ata, X.transpose(0, 2, 1))
        rows[cols] = pinv[:, 0, :].ravel()
    return rows


def rows_to_operators(rows, indices, indptr, nv):
    """Turn fit rows acting on differences into sparse operators on vertex data.

    Each output operator D satisfies (D phi)_i = sum_j rows[j] (phi_{n_j} - phi_i).
    """
    ops = []
    sizes = np.diff(indptr)
    centers = np.repeat(np.arange(nv), sizes)
    for k in range(rows.shape[0]):
        data = np.concatenate([rows[k], -np.bincount(centers, weights=rows[k], minlength=nv)])
        ii = np.concatenate([centers, np.arange(nv)])
        jj = np.concatenate([indices, np.arange(nv)])
        ops.append(sp.csr_matrix((data, (ii, jj)), shape=(nv, nv)))
    return ops


def derivative_operators(coords, indices, indptr, order="cubic"):
    """Sparse operators for (d1, d2[, h11, h12, h22]) from stencil coordinates."""
    rows = fit_weight_rows(coords, indptr, order=order)
    nv = len(indptr) - 1
    return rows_to_operators(rows, indices, indptr, nv)
