"""Synthetic data generation, metric evaluation, and the benchmark loop.

Data law: rows of X are i.i.d. N(0, S) with S_ab = 0.5^|a-b| over all
covariate positions; each response group gets K_j active blocks chosen
uniformly without replacement; inside an active block exactly
round(p_k * q_j * (1 - sparsity/100)) entries are nonzero at uniform
positions with magnitudes uniform on [1, 5] and random signs; errors
are i.i.d. Gaussian per response column; Y = X B + E.  Both X and Y
are standardized after generation using training-row statistics, which
are then applied to the held-out test rows.

All randomness flows from one generator seeded by the configuration,
with a fixed draw order (X rows, then per response group the block
choices and entries, then E), so equal configurations replay
bitwise-identical data.
"""

import csv
import json
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from . import _parallel
from .blocks import GroupSpec
from .estimators import baseline_fit, nbslasso_fit
from .linalg import apply_standardization, standardize

METRIC_FIELDS = ("test_mse", "precision", "recall", "l1", "l2", "pdr", "fdr",
                 "nne", "time_seconds")

# aggregate table layout: fixed column order, mean(sd) cells
TABLE_COLUMNS = ("Sparsity", "Method", "TestMSE", "Precision", "Recall",
                 "L1", "L2", "PDR", "FDR", "Time(s)")


@dataclass(frozen=True)
class SimulationSpec:
    """Parameters of one synthetic-data configuration.

    ``kj_law`` is either an int (every response group gets exactly that
    many active blocks) or a sequence of ints (each group draws its
    count uniformly from the set).  ``group_setting`` is "equal20"
    (groups of 20), "unequal_pattern" (alternating sizes 20, 30), or
    "explicit" (sizes supplied directly).  ``sparsity_level`` is the
    percentage of entries inside an active block that are zero.
    """

    n: int
    n_covariates: int
    n_responses: int
    group_setting: str = "equal20"
    covariate_sizes: tuple = None
    response_sizes: tuple = None
    kj_law: object = (2, 3, 4)
    sparsity_level: float = 30.0
    noise_sd: float = 1.0
    test_rows: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.n_covariates < 1 or self.n_responses < 1:
            raise ValueError("n, n_covariates and n_responses must be positive")
        if not 0.0 <= self.sparsity_level < 100.0:
            raise ValueError("sparsity_level must lie in [0, 100)")
        if self.noise_sd <= 0.0:
            raise ValueError("noise_sd must be positive")
        if self.test_rows < 1:
            raise ValueError("test_rows must be >= 1")
        # fail at construction, not first use
        g = self.groups()
        if int(self.kj_choices().max()) > g.n_covariate_groups:
            raise ValueError(
                "kj_law asks for more active blocks than there are "
                "covariate groups")

    def _pattern_sizes(self, total, label):
        if self.group_setting == "equal20":
            if total % 20:
                raise ValueError(f"{label} count {total} is not a multiple of 20")
            return (20,) * (total // 20)
        if self.group_setting == "unequal_pattern":
            sizes = []
            left = total
            while left > 0:
                want = 30 if len(sizes) % 2 else 20
                if left < want:
                    raise ValueError(
                        f"{label} count {total} does not fit the alternating "
                        "20/30 pattern")
                sizes.append(want)
                left -= want
            return tuple(sizes)
        raise ValueError(f"unknown group_setting: {self.group_setting!r}")

    def groups(self):
        """Resolve the block partition this spec describes."""
        if self.group_setting == "explicit":
            if self.covariate_sizes is None or self.response_sizes is None:
                raise ValueError("explicit group_setting needs explicit sizes")
            g = GroupSpec(tuple(self.covariate_sizes), tuple(self.response_sizes))
            g.check_dims(self.n_covariates, self.n_responses)
            return g
        return GroupSpec(self._pattern_sizes(self.n_covariates, "covariate"),
                         self._pattern_sizes(self.n_responses, "response"))

    def kj_choices(self):
        """Active-block-count law as a validated integer array."""
        law = self.kj_law
        choices = np.atleast_1d(np.asarray(law, dtype=int))
        if choices.size == 0 or np.any(choices < 0):
            raise ValueError("kj_law must give non-negative counts")
        return choices

    def to_dict(self):
        d = {
            "n": self.n, "n_covariates": self.n_covariates,
            "n_responses": self.n_responses, "group_setting": self.group_setting,
            "kj_law": (int(self.kj_law) if np.isscalar(self.kj_law)
                       else [int(v) for v in self.kj_law]),
            "sparsity_level": self.sparsity_level, "noise_sd": self.noise_sd,
            "test_rows": self.test_rows, "seed": self.seed,
        }
        if self.covariate_sizes is not None:
            d["covariate_sizes"] = list(self.covariate_sizes)
        if self.response_sizes is not None:
            d["response_sizes"] = list(self.response_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "kj_law" in d and isinstance(d["kj_law"], list):
            d["kj_law"] = tuple(d["kj_law"])
        for key in ("covariate_sizes", "response_sizes"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as e:
            raise ValueError(f"bad simulation config: {e}") from e


@dataclass(frozen=True)
class GroundTruth:
    """What the generator planted, on the standardized-data scale."""

    B_true: np.ndarray
    delta_true: np.ndarray          # (K, J) bool block-relevance pattern
    nonzero_entries: np.ndarray     # (m, 2) array of (row, col) indices


@dataclass
class MetricsReport:
    """Nine evaluation metrics for one (replication, method) cell."""

    method: str
    replication: int
    test_mse: float = np.nan
    precision: float = np.nan
    recall: float = np.nan
    l1: float = np.nan
    l2: float = np.nan
    pdr: float = np.nan
    fdr: float = np.nan
    nne: float = np.nan
    time_seconds: float = np.nan
    spec_echo: dict = None
    error: str = None


def _ar_cholesky(P):
    idx = np.arange(P)
    cov = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def _block_pattern(B, g):
    delta = np.zeros((g.n_covariate_groups, g.n_response_groups), dtype=bool)
    for k in range(g.n_covariate_groups):
        rows = g.covariate_slice(k)
        for j in range(g.n_response_groups):
            delta[k, j] = bool(np.any(B[rows, g.response_slice(j)]))
    return delta


def generate(spec):
    """Draw one dataset: (X_train, Y_train, X_test, Y_test, truth).

    Train and test rows come from the same law; the standardization is
    estimated on the training rows only and applied to both.  The
    returned ``truth.B_true`` is expressed on the standardized scale so
    it is directly comparable to fitted coefficients.
    """
    g = spec.groups()
    choices = spec.kj_choices()
    K = g.n_covariate_groups
    if int(choices.max()) > K:
        raise ValueError(
            f"kj_law allows {int(choices.max())} active blocks but there are "
            f"only {K} covariate groups")

    rng = np.random.default_rng(spec.seed)
    P, Q, n = spec.n_covariates, spec.n_responses, spec.n
    rows = n + spec.test_rows
    X_all = rng.standard_normal((rows, P)) @ _ar_cholesky(P).T

    B = np.zeros((P, Q))
    frac = 1.0 - spec.sparsity_level / 100.0
    for j in range(g.n_response_groups):
        kj = int(choices[0]) if choices.size == 1 else int(rng.choice(choices))
        chosen = rng.choice(K, size=kj, replace=False)
        qj = g.response_sizes[j]
        cols = g.response_slice(j)
        for k in chosen:
            pk = g.covariate_sizes[k]
            m = int(round(pk * qj * frac))
            if m == 0:
                continue
            pos = rng.choice(pk * qj, size=m, replace=False)
            vals = rng.uniform(1.0, 5.0, size=m) * rng.choice([-1.0, 1.0], size=m)
            block = np.zeros(pk * qj)
            block[pos] = vals
            B[g.covariate_slice(k), cols] = block.reshape(pk, qj)

    Y_all = X_all @ B + spec.noise_sd * rng.standard_normal((rows, Q))

    X_train, X_test = X_all[:n], X_all[n:]
    Y_train, Y_test = Y_all[:n], Y_all[n:]
    X_train, xc, xs = standardize(X_train)
    Y_train, yc, ys = standardize(Y_train)
    X_test = apply_standardization(X_test, xc, xs)
    Y_test = apply_standardization(Y_test, yc, ys)

    B_std = B * (xs[:, None] / ys[None, :])
    truth = GroundTruth(
        B_true=B_std,
        delta_true=_block_pattern(B_std, g),
        nonzero_entries=np.argwhere(B != 0.0),
    )
    return X_train, Y_train, X_test, Y_test, truth


def evaluate(fit, truth, X_test, Y_test, replication=0, spec_echo=None):
    """Score one fit against the planted truth on held-out rows."""
    B_hat = fit.coefficients
    B = truth.B_true
    if B_hat.shape != B.shape:
        raise ValueError("coefficient shapes differ between fit and truth")
    rows, Q = Y_test.shape
    resid = Y_test - X_test @ B_hat
    test_mse = float(np.sum(resid * resid)) / (rows * Q)

    sel = fit.indicator.delta.astype(bool)
    true_blocks = np.asarray(truth.delta_true, dtype=bool)
    n_sel = int(sel.sum())
    n_true = int(true_blocks.sum())
    hit = int((sel & true_blocks).sum())
    precision = hit / n_sel if n_sel else 1.0
    recall = hit / n_true if n_true else 1.0

    hat_nz = B_hat != 0.0
    true_nz = B != 0.0
    nne = int(hat_nz.sum())
    n_true_nz = int(true_nz.sum())
    pdr = int((hat_nz & true_nz).sum()) / n_true_nz if n_true_nz else 1.0
    fdr = int((hat_nz & ~true_nz).sum()) / nne if nne else 0.0

    diff = B_hat - B
    l2 = float(np.linalg.norm(diff))
    return MetricsReport(
        method=fit.method, replication=replication, test_mse=test_mse,
        precision=precision, recall=recall, l1=float(np.abs(diff).sum()),
        l2=l2, pdr=pdr, fdr=fdr, nne=nne, time_seconds=fit.elapsed_seconds,
        spec_echo=spec_echo,
    )


def _run_method(name, X, Y, g, seed, threads, kwargs):
    kw = dict(kwargs or {})
    kw.setdefault("seed", seed)
    kw.setdefault("threads", threads)
    # generated data is already standardized
    kw.setdefault("standardize", False)
    if name == "nbslasso":
        return nbslasso_fit(X, Y, g, **kw)
    if name in ("lasso", "enet"):
        return baseline_fit(X, Y, g, method=name, **kw)
    raise ValueError(f"unknown benchmark method: {name!r}")


def run_benchmark(spec, methods, replications, base_seed=None, threads=None,
                  method_kwargs=None, progress=None):
    """Repeated generate/fit/evaluate cycles.

    Replication r regenerates data with ``seed = base_seed + r`` (base
    defaults to the configuration's own seed) and runs every method on it.  A
    method failure inside one replication is recorded in that report's
    ``error`` field instead of aborting the run.  Replications execute
    as a parallel map; each is fully determined by its own seed, so
    results do not depend on the thread count.

    Returns ``(reports, aggregate)`` where aggregate maps method name
    to ``{metric: (mean, sd)}`` over the clean replications.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    base = spec.seed if base_seed is None else base_seed
    echo = spec.to_dict()

    def one(r):
        spec_r = replace(spec, seed=base + r)
        X, Y, X_test, Y_test, truth = generate(spec_r)
        g = spec_r.groups()
        out = []
        for name in methods:
            kw = (method_kwargs or {}).get(name)
            try:
                fit = _run_method(name, X, Y, g, base + r, 1, kw)
                rep = evaluate(fit, truth, X_test, Y_test, replication=r,
                               spec_echo=echo)
            except Exception as e:  # noqa: BLE001 - a failed rep must not kill the run
                rep = MetricsReport(method=name, replication=r, spec_echo=echo,
                                    error=f"{type(e).__name__}: {e}")
            out.append(rep)
        if progress is not None:
            progress(r)
        return out

    nested = _parallel.parallel_map(one, range(replications), threads=threads)
    reports = [rep for group in nested for rep in group]
    return reports, aggregate(reports)


def aggregate(reports):
    """Mean and sample standard deviation per method per metric."""
    out = {}
    for name in dict.fromkeys(r.method for r in reports):
        rows = [r for r in reports if r.method == name and r.error is None]
        cell = {}
        for m in METRIC_FIELDS:
            vals = np.array([getattr(r, m) for r in rows], dtype=float)
            if vals.size == 0:
                cell[m] = (np.nan, np.nan)
            else:
                sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
                cell[m] = (float(vals.mean()), sd)
        out[name] = cell
    return out


_METHOD_LABELS = {"nbslasso": "NBSlasso", "lasso": "lasso", "enet": "elastic net"}

_TABLE_METRICS = (("TestMSE", "test_mse"), ("Precision", "precision"),
                  ("Recall", "recall"), ("L1", "l1"), ("L2", "l2"),
                  ("PDR", "pdr"), ("FDR", "fdr"), ("Time(s)", "time_seconds"))


def aggregate_table(agg, sparsity_label=""):
    """Human-readable mean(sd) table, one row per method."""
    rows = [list(TABLE_COLUMNS)]
    for name, cell in agg.items():
        row = [str(sparsity_label), _METHOD_LABELS.get(name, name)]
        for _, metric in _TABLE_METRICS:
            mean, sd = cell[metric]
            row.append(f"{mean:.2f}({sd:.2f})" if np.isfinite(mean) else "NA")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
             for r in rows]
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text):
    """Write a file via a temp name + rename so readers never see partials."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


CSV_COLUMNS = ("replication", "method") + METRIC_FIELDS + ("error",)


def reports_to_csv(reports):
    import io
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([r.replication, r.method] +
                   [getattr(r, m) for m in METRIC_FIELDS] +
                   [r.error or ""])
    return buf.getvalue()


def save_reports_csv(path, reports):
    atomic_write_text(path, reports_to_csv(reports))


def load_spec_json(path):
    with open(path) as f:
        return SimulationSpec.from_dict(json.load(f))
