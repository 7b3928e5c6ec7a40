"""Model-level estimators: single-block tests and the two-step fit.

The two-step estimator ``nbslasso_fit`` first decides which covariate
group / response group blocks carry signal (via the block statistics
and a threshold selector) and then runs a penalized regression per
response column restricted to the selected blocks.  Baselines that skip
the selection step are provided for comparison.

Estimators operate on the data as given; pass ``standardize=True``
(the default for the matrix methods) to have columns centered and
scaled internally, in which case coefficients live on the standardized
scale and the returned ``standardization`` carries what is needed to
map back.
"""

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .blocks import (ScreenPolicy, all_block_stats, block_stats,
                     indicator_from_gamma, select_threshold,
                     select_threshold_centered, IndicatorMatrix)
from .linalg import standardize as _standardize_cols
from .linalg import thin_qr, ols_solve
from .solver import PenaltySpec, multi_response_lasso


@dataclass(frozen=True)
class Standardization:
    """Column centers and scales applied to X and Y before fitting."""

    x_centers: np.ndarray
    x_scales: np.ndarray
    y_centers: np.ndarray
    y_scales: np.ndarray


@dataclass
class FitResult:
    """Common return type for every estimator in this module.

    ``coefficients`` is (P, Q) on the fitting scale.  ``indicator`` is
    the block activity pattern of the coefficients: entries of blocks
    with ``delta == 0`` are exactly zero (never just small).
    ``lambda_used`` lists the per-column penalty for penalized methods
    (NaN for columns that had nothing to fit) and is None for plain
    least-squares methods.
    """

    coefficients: np.ndarray
    indicator: IndicatorMatrix
    method: str
    lambda_used: object
    elapsed_seconds: float
    standardization: object = None


def unstandardize(coefficients, std):
    """Map standardized-scale coefficients back to the raw data scale.

    Returns ``(raw_coefficients, intercepts)`` such that predictions on
    raw inputs are ``X_raw @ raw_coefficients + intercepts``.
    """
    b = coefficients * (std.y_scales[None, :] / std.x_scales[:, None])
    intercepts = std.y_centers - std.x_centers @ b
    return b, intercepts


def _as_matrix(Y):
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def _ols_block(X, Y):
    """Least squares with a minimum-norm fallback on rank deficiency."""
    f = thin_qr(X)
    if f.rank < X.shape[1]:
        warnings.warn("rank-deficient design; using minimum-norm solution",
                      stacklevel=3)
        return np.linalg.lstsq(X, Y, rcond=None)[0]
    return ols_solve(f, Y)


def single_block_ols(X1, Y1, gamma):
    """Test-then-fit for a single block that is narrower than the sample.

    Requires ``p <= n - 3``.  When the block's r2bar exceeds ``1 - gamma``
    the coefficients are the plain least-squares fit; otherwise the
    zero matrix.
    """
    t0 = time.perf_counter()
    X1 = np.asarray(X1, dtype=float)
    Y1 = _as_matrix(Y1)
    n, p = X1.shape
    if p > n - 3:
        raise ValueError(f"single_block_ols needs p <= n - 3 (p={p}, n={n})")
    stats = block_stats(X1, Y1)
    ind = indicator_from_gamma([[stats]], gamma)
    if ind.n_active:
        coef = _ols_block(X1, Y1)
    else:
        coef = np.zeros((p, Y1.shape[1]))
    return FitResult(coef, ind, "single_block_ols", None,
                     time.perf_counter() - t0)


def single_block_screened(X1, Y1, gamma, screen=None):
    """Single-block test-then-fit for wide blocks (p possibly >> n).

    Columns are screened per :class:`ScreenPolicy` (screening is forced
    even for narrow blocks so behavior does not jump at p = n - 3).
    On acceptance, least squares runs on the surviving columns only and
    all other coefficients are exactly zero.
    """
    t0 = time.perf_counter()
    X1 = np.asarray(X1, dtype=float)
    Y1 = _as_matrix(Y1)
    policy = replace(screen if screen is not None else ScreenPolicy(), force=True)
    stats = block_stats(X1, Y1, screen=policy)
    ind = indicator_from_gamma([[stats]], gamma)
    coef = np.zeros((X1.shape[1], Y1.shape[1]))
    support = stats.screened_support
    if ind.n_active and support is not None and support.size:
        coef[support] = _ols_block(X1[:, support], Y1)
    return FitResult(coef, ind, "single_block_screened", None,
                     time.perf_counter() - t0)


def _fixed_lambda(n, P, m3):
    # on the (1/2n)-scaled objective this equals m3 * sqrt(n log P) on the
    # unscaled one
    return m3 * np.sqrt(np.log(P) / n) / 2.0


def _block_pattern(coefficients, groups):
    """0/1 grid marking blocks of the coefficient matrix with any nonzero."""
    K, J = groups.n_covariate_groups, groups.n_response_groups
    delta = np.zeros((K, J), dtype=np.int8)
    for k in range(K):
        rows = groups.covariate_slice(k)
        for j in range(J):
            if np.any(coefficients[rows, groups.response_slice(j)]):
                delta[k, j] = 1
    return delta


def _pattern_indicator(ind, coefficients, groups):
    """Restrict an indicator to blocks the fitted coefficients actually use."""
    delta = _block_pattern(coefficients, groups)
    if ind is not None:
        delta &= ind.delta
        c_hat, gamma_hat, alpha = ind.c_hat, ind.gamma_hat, ind.alpha
    else:
        c_hat, gamma_hat, alpha = np.nan, np.nan, None
    active = tuple((int(k), int(j)) for k, j in zip(*np.nonzero(delta)))
    return IndicatorMatrix(delta=delta, c_hat=c_hat, gamma_hat=gamma_hat,
                           active=active, alpha=alpha)


def nbslasso_fit(X, Y, groups, alpha=0.05, *, gamma=None, selector="centered",
                 screen=None, lambda_mode="cv", m3=4.0, mix=1.0, folds=5,
                 n_lambdas=100, lambda_ratio=None, seed=0, threads=None,
                 standardize=True, max_iter=100_000, tol=1e-8):
    """Two-step estimator: block selection, then per-column penalized fits.

    Step 1 computes the full grid of block statistics and picks the
    active set.  By default the cutoff comes from
    :func:`select_threshold_centered` at level ``alpha``; pass
    ``selector="plain"`` for the uncentered scan, or ``gamma`` for a
    fixed cutoff at ``1 - gamma`` (which bypasses the scan entirely and
    is the right tool when the grid has only a handful of blocks).

    Step 2 fits each response column against the union of its selected
    covariate groups with an elastic-net penalty (``mix=1`` by default,
    i.e. the lasso).  ``lambda_mode="cv"`` cross-validates the penalty
    per column; ``"fixed"`` uses ``m3 * sqrt(log P / n) / 2`` for every
    column.  Entries outside selected blocks are exactly zero, and the
    returned indicator reflects the blocks the final coefficients
    actually occupy.
    """
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    Y = _as_matrix(Y)
    groups.check_dims(X.shape[1], Y.shape[1])
    n, P = X.shape
    Q = Y.shape[1]

    std = None
    if standardize:
        X, xc, xs = _standardize_cols(X)
        Y, yc, ys = _standardize_cols(Y)
        std = Standardization(xc, xs, yc, ys)

    grid = all_block_stats(X, Y, groups, screen=screen, threads=threads)
    if gamma is not None:
        ind = indicator_from_gamma(grid, gamma)
    elif selector == "centered":
        ind = select_threshold_centered(grid, alpha)
    elif selector == "plain":
        ind = select_threshold(grid, alpha)
    else:
        raise ValueError(f"unknown selector: {selector!r}")

    coef = np.zeros((P, Q))
    lams = np.full(Q, np.nan)
    if ind.n_active == 0:
        warnings.warn("no blocks selected; returning the zero fit",
                      stacklevel=2)
        final = _pattern_indicator(ind, coef, groups)
        return FitResult(coef, final, "nbslasso", lams.tolist(),
                         time.perf_counter() - t0, std)

    masks = []
    for j in range(groups.n_response_groups):
        ks = [k for k in range(groups.n_covariate_groups) if ind.delta[k, j]]
        if ks:
            cols = np.concatenate([np.arange(groups.covariate_slice(k).start,
                                             groups.covariate_slice(k).stop)
                                   for k in ks])
        else:
            cols = np.zeros(0, dtype=int)
        masks.extend([cols] * groups.response_sizes[j])

    if lambda_mode == "cv":
        pen = PenaltySpec(mix=mix, max_iter=max_iter, tol=tol)
        mrf = multi_response_lasso(X, Y, pen, masks, cv_folds=folds, seed=seed,
                                   n_lambdas=n_lambdas, ratio=lambda_ratio,
                                   threads=threads)
    elif lambda_mode == "fixed":
        pen = PenaltySpec(lam=_fixed_lambda(n, P, m3), mix=mix,
                          max_iter=max_iter, tol=tol)
        mrf = multi_response_lasso(X, Y, pen, masks, threads=threads)
    else:
        raise ValueError(f"unknown lambda_mode: {lambda_mode!r}")

    coef = mrf.coefficients
    for c, mask in enumerate(masks):
        lams[c] = mrf.lambdas[c] if mask.size else np.nan
    final = _pattern_indicator(ind, coef, groups)
    return FitResult(coef, final, "nbslasso", lams.tolist(),
                     time.perf_counter() - t0, std)


def baseline_fit(X, Y, groups, method="lasso", *, lambda_mode="cv", m3=4.0,
                 mix=None, folds=5, n_lambdas=100, lambda_ratio=None, seed=0,
                 threads=None, standardize=True, max_iter=100_000, tol=1e-8):
    """One-step penalized fit of every response column on all covariates.

    ``method`` is "lasso" (mix 1) or "enet" (mix 0.5 unless ``mix`` is
    given).  The indicator is derived afterward from the block pattern
    of the fitted coefficients, so it reports which blocks the penalty
    happened to use; there is no selection step.
    """
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    Y = _as_matrix(Y)
    groups.check_dims(X.shape[1], Y.shape[1])
    n, P = X.shape

    if method == "lasso":
        use_mix = 1.0 if mix is None else mix
    elif method == "enet":
        use_mix = 0.5 if mix is None else mix
    else:
        raise ValueError(f"unknown baseline method: {method!r}")

    std = None
    if standardize:
        X, xc, xs = _standardize_cols(X)
        Y, yc, ys = _standardize_cols(Y)
        std = Standardization(xc, xs, yc, ys)

    if lambda_mode == "cv":
        pen = PenaltySpec(mix=use_mix, max_iter=max_iter, tol=tol)
        mrf = multi_response_lasso(X, Y, pen, cv_folds=folds, seed=seed,
                                   n_lambdas=n_lambdas, ratio=lambda_ratio,
                                   threads=threads)
    elif lambda_mode == "fixed":
        pen = PenaltySpec(lam=_fixed_lambda(n, P, m3), mix=use_mix,
                          max_iter=max_iter, tol=tol)
        mrf = multi_response_lasso(X, Y, pen, threads=threads)
    else:
        raise ValueError(f"unknown lambda_mode: {lambda_mode!r}")

    ind = _pattern_indicator(None, mrf.coefficients, groups)
    return FitResult(mrf.coefficients, ind, method, mrf.lambdas.tolist(),
                     time.perf_counter() - t0, std)
