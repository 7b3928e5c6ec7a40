import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def ar_design(n, p, rho=0.5, seed=0):
    """Rows i.i.d. N(0, S) with S_ab = rho^|a-b|."""
    rng = np.random.default_rng(seed)
    idx = np.arange(p)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    return rng.standard_normal((n, p)) @ np.linalg.cholesky(cov).T


def objective(X, y, b, lam, mix):
    n = X.shape[0]
    r = y - X @ b
    return (r @ r) / (2 * n) + lam * (mix * np.abs(b).sum()
                                      + (1 - mix) / 2 * (b @ b))


def kkt_violation(X, y, b, lam, mix):
    """Largest stationarity violation of the elastic-net optimality system."""
    n = X.shape[0]
    grad = X.T @ (y - X @ b) / n
    viol = 0.0
    for i in range(b.size):
        if b[i] != 0.0:
            v = abs(grad[i] - lam * mix * np.sign(b[i]) - lam * (1 - mix) * b[i])
        else:
            v = max(abs(grad[i]) - lam * mix, 0.0)
        viol = max(viol, v)
    return viol


def grid_min_objective(X, y, lam, mix, lo=-5.0, hi=5.0, step=0.01):
    """Exhaustive objective minimum over a regular grid, for p <= 3."""
    n, p = X.shape
    vals = np.round(np.arange(lo, hi + step / 2, step), 10)
    G = X.T @ X / n
    xty = X.T @ y / n
    const = (y @ y) / (2 * n)

    def pen(v):
        return lam * (mix * np.abs(v) + (1 - mix) / 2 * v * v)

    if p == 1:
        obj = 0.5 * G[0, 0] * vals ** 2 - xty[0] * vals + pen(vals)
        return const + obj.min()
    if p == 2:
        b1, b2 = np.meshgrid(vals, vals, indexing="ij")
        obj = (0.5 * (G[0, 0] * b1 ** 2 + G[1, 1] * b2 ** 2)
               + G[0, 1] * b1 * b2 - xty[0] * b1 - xty[1] * b2
               + pen(b1) + pen(b2))
        return const + obj.min()
    if p == 3:
        b2, b3 = np.meshgrid(vals, vals, indexing="ij")
        base = (0.5 * (G[1, 1] * b2 ** 2 + G[2, 2] * b3 ** 2)
                + G[1, 2] * b2 * b3 - xty[1] * b2 - xty[2] * b3
                + pen(b2) + pen(b3))
        cross = G[0, 1] * b2 + G[0, 2] * b3
        best = np.inf
        for v in vals:
            head = 0.5 * G[0, 0] * v * v - xty[0] * v + pen(np.array(v))
            cand = float((base + v * cross).min()) + head
            if cand < best:
                best = cand
        return const + best
    raise ValueError("grid oracle only supports p <= 3")
