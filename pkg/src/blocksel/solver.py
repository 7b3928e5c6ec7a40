"""Elastic-net coordinate descent on gram matrices, with paths and CV.

The objective minimized everywhere in this module is

    (1 / (2n)) * ||y - X b||^2 + lam * (mix * ||b||_1 + (1 - mix) / 2 * ||b||^2)

so ``mix = 1`` is the lasso and ``mix = 0`` is ridge.  Solvers run on
precomputed gram systems (G = X^T X / n, xty = X^T y / n), which makes
warm-started paths and cross-validation cheap: the gram is built once
per design (or per CV fold) and shared across every response column and
every penalty level.

Iteration counts are full coordinate sweeps.  A fit is declared
converged only when the largest coordinate move in a sweep drops below
``tol`` *and* the stationarity conditions hold to within a small
multiple of ``tol``; sweeping stops at ``max_iter`` regardless.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _parallel

# extra slack allowed in the stationarity check, as a multiple of tol
_KKT_MULT = 5.0


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty and stopping configuration for one solve."""

    lam: float = 0.0
    mix: float = 1.0
    max_iter: int = 100_000
    tol: float = 1e-10

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lam must be >= 0")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must be in [0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be > 0")


@dataclass
class LassoFit:
    """Result of a single penalized solve."""

    coefficients: np.ndarray
    support: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass
class MultiResponseFit:
    """Column-wise penalized solves against a shared design."""

    coefficients: np.ndarray        # (p, q)
    lambdas: np.ndarray             # per-column penalty actually used
    converged: bool
    iterations: int                 # summed sweeps across columns


def soft_threshold(z, t):
    """Soft-thresholding operator, elementwise: sign(z) * max(|z| - t, 0)."""
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@njit(cache=True, nogil=True)
def _sweep(G, grad, b, idx, m, lam1, lam2):
    """One coordinate pass over ``idx[:m]``; returns the largest move.

    ``grad`` tracks X^T (y - X b) / n and is updated through rows of the
    symmetric gram matrix (contiguous access).
    """
    maxd = 0.0
    for s in range(m):
        i = idx[s]
        d = G[i, i]
        if d <= 0.0:
            continue
        z = grad[i] + d * b[i]
        az = abs(z) - lam1
        if az > 0.0:
            bi = math.copysign(az, z) / (d + lam2)
        else:
            bi = 0.0
        delta = bi - b[i]
        if delta != 0.0:
            row = G[i]
            for t in range(row.shape[0]):
                grad[t] -= row[t] * delta
            b[i] = bi
            ad = abs(delta)
            if ad > maxd:
                maxd = ad
    return maxd


@njit(cache=True, nogil=True)
def _cd_solve(G, xty, b, lam1, lam2, max_iter, tol, kkt_tol):
    """Coordinate descent on a gram system; ``b`` updated in place.

    Alternates full passes with passes restricted to the current
    support (the usual active-set strategy), counting every pass as one
    sweep.  Declares convergence only when a full pass moves nothing
    beyond ``tol`` and the stationarity violations are within
    ``kkt_tol``.  Returns (sweeps, converged flag).
    """
    p = b.shape[0]
    grad = xty - G @ b
    all_idx = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        maxd = _sweep(G, grad, b, all_idx, p, lam1, lam2)
        sweeps += 1
        if maxd < tol:
            viol = 0.0
            for i in range(p):
                if b[i] != 0.0:
                    s = 1.0 if b[i] > 0.0 else -1.0
                    v = abs(grad[i] - lam1 * s - lam2 * b[i])
                else:
                    v = abs(grad[i]) - lam1
                    if v < 0.0:
                        v = 0.0
                if v > viol:
                    viol = v
            if viol <= kkt_tol:
                converged = True
                break
        # settle the current support before paying for another full pass
        m = 0
        for i in range(p):
            if b[i] != 0.0:
                active[m] = i
                m += 1
        while sweeps < max_iter and m > 0:
            maxd = _sweep(G, grad, b, active, m, lam1, lam2)
            sweeps += 1
            if maxd < tol:
                break
    return sweeps, converged


@njit(cache=True, nogil=True)
def _cd_path(G, xty, lambdas, mix, max_iter, tol, kkt_tol):
    """Warm-started solves along a descending penalty sequence."""
    p = G.shape[0]
    nlam = lambdas.shape[0]
    coefs = np.zeros((nlam, p))
    sweeps = np.zeros(nlam, dtype=np.int64)
    ok = np.ones(nlam, dtype=np.uint8)
    b = np.zeros(p)
    for m in range(nlam):
        lam1 = lambdas[m] * mix
        lam2 = lambdas[m] * (1.0 - mix)
        it, conv = _cd_solve(G, xty, b, lam1, lam2, max_iter, tol, kkt_tol)
        coefs[m] = b
        sweeps[m] = it
        if not conv:
            ok[m] = 0
    return coefs, sweeps, ok


def _gram(X):
    n = X.shape[0]
    return np.ascontiguousarray(X.T @ X) / n


def _objective(X, y, b, pen, lam=None):
    lam = pen.lam if lam is None else lam
    r = y - X @ b
    n = X.shape[0]
    l1 = np.abs(b).sum()
    l2sq = float(b @ b)
    return float(r @ r) / (2 * n) + lam * (pen.mix * l1 + (1 - pen.mix) / 2 * l2sq)


def lasso_cd(X, y, pen, warm_start=None):
    """Solve one penalized regression.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    pen : PenaltySpec
    warm_start : ndarray, optional
        Initial coefficients (copied, not modified).
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("X and y row counts differ")
    G = _gram(X)
    xty = X.T @ y / n
    b = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    it, conv = _cd_solve(G, xty, b, pen.lam * pen.mix, pen.lam * (1.0 - pen.mix),
                         pen.max_iter, pen.tol, _KKT_MULT * pen.tol)
    return LassoFit(
        coefficients=b,
        support=np.flatnonzero(b),
        objective=_objective(X, y, b, pen),
        iterations=int(it),
        converged=bool(conv),
    )


def lambda_max(X, y):
    """Smallest lasso penalty at which the all-zero solution is optimal:
    max_j |x_j^T y| / n."""
    n = X.shape[0]
    return float(np.max(np.abs(X.T @ y))) / n


def lambda_path(X, y, n_lambdas=100, ratio=None, mix=1.0):
    """Log-spaced descending penalty sequence from ``lambda_max`` down.

    ``ratio`` (smallest / largest) defaults to 1e-3 when n > p and 1e-2
    otherwise.  For mixes below 1 the head is inflated by 1 / mix (with
    a floor) so the first solution on the path is still the null model.
    """
    n, p = X.shape
    if ratio is None:
        ratio = 1e-3 if n > p else 1e-2
    head = lambda_max(X, y) / max(mix, 1e-3)
    if head <= 0.0:
        head = 1.0
    return np.geomspace(head, head * ratio, n_lambdas)


def make_folds(n, k, seed):
    """Deterministic balanced fold labels: permute rows, assign i % k."""
    if not 2 <= k <= n:
        raise ValueError("folds must be between 2 and n")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=int)
    fold[perm] = np.arange(n) % k
    return fold


def _cv_curve(X, y, lambdas, mix, fold_ids, pen, cv_tol):
    """Mean held-out squared error per penalty level, plus its SE over folds."""
    k = int(fold_ids.max()) + 1
    errs = np.empty((k, lambdas.size))
    tol = max(pen.tol, cv_tol)
    for f in range(k):
        tr = fold_ids != f
        te = ~tr
        Xtr = np.ascontiguousarray(X[tr])
        ytr = y[tr]
        ntr = Xtr.shape[0]
        G = _gram(Xtr)
        xty = Xtr.T @ ytr / ntr
        coefs, _, _ = _cd_path(G, xty, lambdas, mix, pen.max_iter, tol,
                               _KKT_MULT * tol)
        resid = y[te][:, None] - X[te] @ coefs.T
        errs[f] = np.mean(resid * resid, axis=0)
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / np.sqrt(k)
    return mean, se


def _pick_lambda(mean, se, rule):
    # lambdas descend, so on ties argmin lands on the heavier penalty
    best = int(np.argmin(mean))
    if rule == "min":
        return best
    if rule == "1se":
        cut = mean[best] + se[best]
        for i in range(best + 1):
            if mean[i] <= cut:
                return i
        return best
    raise ValueError(f"unknown CV rule: {rule!r}")


def cv_lasso(X, y, folds, pen, seed=0, rule="min", n_lambdas=100, ratio=None,
             lambdas=None, fold_ids=None, cv_tol=1e-6):
    """Cross-validated penalty selection plus a full-data refit.

    Returns ``(best_lambda, LassoFit)``.  Folds are balanced and fully
    determined by ``seed``; on CV ties the larger penalty wins.  The
    ``rule`` is "min" (lowest mean error) or "1se" (sparsest model
    within one standard error of the minimum).  Held-out scoring solves
    run at the looser of ``pen.tol`` and ``cv_tol``; the returned refit
    always honors ``pen.tol`` exactly.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if lambdas is None:
        lambdas = lambda_path(X, y, n_lambdas=n_lambdas, ratio=ratio, mix=pen.mix)
    if fold_ids is None:
        fold_ids = make_folds(n, folds, seed)
    mean, se = _cv_curve(X, y, lambdas, pen.mix, fold_ids, pen, cv_tol)
    idx = _pick_lambda(mean, se, rule)
    best = float(lambdas[idx])
    # warm-started full-data path down to the chosen level
    G = _gram(X)
    xty = X.T @ y / n
    coefs, sweeps, ok = _cd_path(G, xty, lambdas[:idx + 1], pen.mix,
                                 pen.max_iter, pen.tol, _KKT_MULT * pen.tol)
    b = coefs[idx]
    fit = LassoFit(
        coefficients=b,
        support=np.flatnonzero(b),
        objective=_objective(X, y, b, pen, lam=best),
        iterations=int(sweeps.sum()),
        converged=bool(ok[idx]),
    )
    return best, fit


def multi_response_lasso(X, Y, pen, column_masks=None, cv_folds=None, seed=0,
                         rule="min", n_lambdas=100, ratio=None, threads=None,
                         cv_tol=1e-6):
    """Independent penalized solves for every column of ``Y``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    Y : ndarray, shape (n, q)
    pen : PenaltySpec
        Template penalty.  With ``cv_folds`` set, ``pen.lam`` is ignored
        and each column picks its own penalty by cross-validation on its
        own path; otherwise ``pen.lam`` applies to every column.
    column_masks : sequence of index arrays, optional
        ``column_masks[c]`` lists the columns of X that column c of Y may
        load on.  Entries outside the mask are exactly zero.  An empty
        mask produces an all-zero column.  Default: all columns allowed.
    cv_folds : int, optional
        Fold count for per-column CV.  One fold assignment (from
        ``seed``) is shared by all columns, which keeps results
        independent of thread count and lets fold grams be reused
        across columns with the same mask.
    threads : int, optional
        Worker threads for the column loop (the kernels release the GIL).
    cv_tol : float
        Tolerance for the held-out scoring solves (see :func:`cv_lasso`);
        final refits honor ``pen.tol``.

    Returns
    -------
    MultiResponseFit
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ValueError("Y must be 2-d with the same row count as X")
    n, p = X.shape
    q = Y.shape[1]
    if column_masks is None:
        column_masks = [np.arange(p)] * q
    if len(column_masks) != q:
        raise ValueError("need one column mask per response column")
    masks = [np.asarray(m, dtype=int) for m in column_masks]

    out = np.zeros((p, q))
    lams = np.zeros(q)
    conv = np.ones(q, dtype=bool)
    iters = np.zeros(q, dtype=np.int64)
    fold_ids = make_folds(n, cv_folds, seed) if cv_folds else None

    # group identical masks so the (possibly per-fold) grams are built once
    groups = {}
    for c, m in enumerate(masks):
        groups.setdefault(m.tobytes(), []).append(c)

    kkt = _KKT_MULT * pen.tol
    fold_tol = max(pen.tol, cv_tol)

    def run_group(cols):
        m = masks[cols[0]]
        if m.size == 0:
            return
        Xm = np.ascontiguousarray(X[:, m])
        G = _gram(Xm)
        if cv_folds:
            fold_data = []
            for f in range(cv_folds):
                tr = fold_ids != f
                Xtr = np.ascontiguousarray(Xm[tr])
                fold_data.append((tr, ~tr, _gram(Xtr), Xtr.shape[0]))

        def run_col(c):
            y = Y[:, c]
            if cv_folds:
                lambdas = lambda_path(Xm, y, n_lambdas=n_lambdas, ratio=ratio,
                                      mix=pen.mix)
                errs = np.empty((cv_folds, lambdas.size))
                for f, (tr, te, Gf, ntr) in enumerate(fold_data):
                    xty_f = Xm[tr].T @ y[tr] / ntr
                    coefs, _, _ = _cd_path(Gf, xty_f, lambdas, pen.mix,
                                           pen.max_iter, fold_tol,
                                           _KKT_MULT * fold_tol)
                    r = y[te][:, None] - Xm[te] @ coefs.T
                    errs[f] = np.mean(r * r, axis=0)
                mean = errs.mean(axis=0)
                se = errs.std(axis=0, ddof=1) / np.sqrt(cv_folds)
                idx = _pick_lambda(mean, se, rule)
                xty = Xm.T @ y / n
                coefs, sweeps, ok = _cd_path(G, xty, lambdas[:idx + 1], pen.mix,
                                             pen.max_iter, pen.tol, kkt)
                out[m, c] = coefs[idx]
                lams[c] = lambdas[idx]
                conv[c] = bool(ok[idx])
                iters[c] = int(sweeps.sum())
            else:
                xty = Xm.T @ y / n
                b = np.zeros(m.size)
                it, okc = _cd_solve(G, xty, b, pen.lam * pen.mix,
                                    pen.lam * (1.0 - pen.mix),
                                    pen.max_iter, pen.tol, kkt)
                out[m, c] = b
                lams[c] = pen.lam
                conv[c] = bool(okc)
                iters[c] = int(it)

        _parallel.parallel_map(run_col, cols, threads=threads)

    for cols in groups.values():
        run_group(cols)

    return MultiResponseFit(
        coefficients=out,
        lambdas=lams,
        converged=bool(conv.all()),
        iterations=int(iters.sum()),
    )
