"""Column standardization, thin pivoted QR, and projection primitives.

Everything downstream (block statistics, the coordinate-descent solver,
the simulation harness) funnels matrix work through this module so the
numerically touchy parts live in one place.  Projections are computed
through thin QR factors; an n x n projection matrix is never formed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Pivots below RANK_TOL times the largest pivot magnitude are treated as zero.
RANK_TOL = 1e-10


def standardize(m, center=True, scale=True):
    """Column-wise centering and scaling.

    Parameters
    ----------
    m : array_like, shape (n, p)
        Data matrix with at least two rows.
    center, scale : bool
        Toggles for the two steps.  Disabled steps report centers of 0
        and scales of 1 so the return shape is stable.

    Returns
    -------
    out : ndarray
        Transformed copy of ``m``.
    centers, scales : ndarray, shape (p,)
        Statistics used, suitable for applying to held-out rows.

    Constant columns get scale 1 instead of 0 so the transform is
    always invertible.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, p = m.shape
    if n < 2:
        raise ValueError("standardize needs at least 2 rows")
    centers = m.mean(axis=0) if center else np.zeros(p)
    out = m - centers
    if scale:
        # spread is always measured about the column mean, centered or not
        scales = m.std(axis=0, ddof=1)
        scales = np.where(scales > 0.0, scales, 1.0)
        out = out / scales
    else:
        scales = np.ones(p)
    return out, centers, scales


def apply_standardization(m, centers, scales):
    """Apply previously computed centers/scales to new rows."""
    return (np.asarray(m, dtype=float) - centers) / scales


@dataclass(frozen=True)
class QRFactor:
    """Thin pivoted QR of a column subset.

    Attributes
    ----------
    q : ndarray, shape (n, rank)
        Orthonormal basis of the span of the kept columns.
    r_upper : ndarray, shape (rank, rank)
        Upper-triangular factor for the kept columns, in pivot order.
    rank : int
        Number of independent columns retained.
    kept_columns : ndarray
        Indices into the original matrix, in pivot order.
    n_columns : int
        Column count of the original matrix (sizes coefficient vectors).
    """

    q: np.ndarray
    r_upper: np.ndarray
    rank: int
    kept_columns: np.ndarray
    n_columns: int


def thin_qr(m, tol=RANK_TOL):
    """Column-pivoted economic QR with small pivots dropped.

    Columns whose pivot magnitude falls below ``tol`` times the largest
    pivot are excluded from the factor entirely, so ``q`` always has
    exactly ``rank`` orthonormal columns.  A rank-0 input (all-zero
    matrix) yields empty factors rather than an error.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, p = m.shape
    if n < 1:
        raise ValueError("thin_qr needs at least 1 row")
    if p == 0:
        return QRFactor(np.zeros((n, 0)), np.zeros((0, 0)), 0,
                        np.zeros(0, dtype=int), 0)
    q, r, piv = scipy.linalg.qr(m, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] <= 0.0:
        rank = 0
    else:
        rank = int(np.sum(d > tol * d[0]))
    return QRFactor(
        q=np.ascontiguousarray(q[:, :rank]),
        r_upper=np.ascontiguousarray(r[:rank, :rank]),
        rank=rank,
        kept_columns=piv[:rank].astype(int),
        n_columns=p,
    )


def project(f, y):
    """Split ``y`` into its projection onto span(q) and the residual.

    Returns ``(fitted, residual)`` with ``fitted + residual == y``.
    Works for vectors and matrices alike; a rank-0 factor maps
    everything to the residual.
    """
    y = np.asarray(y, dtype=float)
    if f.rank == 0:
        return np.zeros_like(y), y.copy()
    fitted = f.q @ (f.q.T @ y)
    return fitted, y - fitted


def projected_sumsq(f, y):
    """Squared norm of the projection of ``y`` onto span(q).

    Cheaper than :func:`project` when only the energy split is needed:
    computes ||q^T y||^2 without forming the fitted values.
    """
    if f.rank == 0:
        return 0.0
    qty = f.q.T @ np.asarray(y, dtype=float)
    return float(np.sum(qty * qty))


def ols_solve(f, y):
    """Least-squares coefficients from a thin QR factor.

    Coefficients for columns dropped during pivoting are exactly zero,
    so ``m @ ols_solve(thin_qr(m), y)`` reproduces the fitted values
    from :func:`project`.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[:, None]
    out = np.zeros((f.n_columns, y.shape[1]))
    if f.rank > 0:
        qty = f.q.T @ y
        coef = scipy.linalg.solve_triangular(f.r_upper, qty, lower=False)
        out[f.kept_columns] = coef
    return out[:, 0] if single else out
