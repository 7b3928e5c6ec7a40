import json

import numpy as np
import pytest

from blocksel.blocks import GroupSpec, IndicatorMatrix
from blocksel.estimators import FitResult
from blocksel.simbench import (SimulationSpec, aggregate_table, evaluate,
                               generate, load_spec_json, reports_to_csv,
                               run_benchmark, TABLE_COLUMNS, CSV_COLUMNS)


def small_spec(**overrides):
    base = dict(n=80, n_covariates=60, n_responses=40, group_setting="equal20",
                kj_law=2, sparsity_level=30.0, noise_sd=1.0, test_rows=50,
                seed=11)
    base.update(overrides)
    return SimulationSpec(**base)


class TestSimulationSpec:
    def test_equal_groups(self):
        spec = small_spec()
        g = spec.groups()
        assert g.covariate_sizes == (20, 20, 20)
        assert g.response_sizes == (20, 20)

    def test_equal20_requires_multiples(self):
        with pytest.raises(ValueError):
            small_spec(n_covariates=50)

    def test_unequal_pattern(self):
        spec = small_spec(group_setting="unequal_pattern", n_covariates=100,
                          n_responses=50)
        g = spec.groups()
        assert g.covariate_sizes == (20, 30, 20, 30)
        assert g.response_sizes == (20, 30)

    def test_unequal_pattern_must_tile(self):
        with pytest.raises(ValueError):
            small_spec(group_setting="unequal_pattern", n_covariates=60)

    def test_explicit_sizes(self):
        spec = small_spec(group_setting="explicit", covariate_sizes=(50, 10),
                          response_sizes=(15, 25))
        g = spec.groups()
        assert g.covariate_sizes == (50, 10)

    def test_explicit_sizes_must_sum(self):
        with pytest.raises(ValueError):
            small_spec(group_setting="explicit", covariate_sizes=(50, 20),
                       response_sizes=(15, 25))

    def test_sparsity_bounds(self):
        with pytest.raises(ValueError):
            small_spec(sparsity_level=-1.0)
        with pytest.raises(ValueError):
            small_spec(sparsity_level=100.0)
        small_spec(sparsity_level=0.0)   # fully dense blocks are legal

    def test_kj_cannot_exceed_group_count(self):
        with pytest.raises(ValueError):
            generate(small_spec(kj_law=7))

    def test_dict_round_trip(self, tmp_path):
        spec = small_spec(kj_law=(2, 3))
        clone = SimulationSpec.from_dict(spec.to_dict())
        assert clone == spec
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec.to_dict()))
        assert load_spec_json(path) == spec


class TestGenerate:
    def test_deterministic(self):
        spec = small_spec()
        a = generate(spec)
        b = generate(spec)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])
        assert np.array_equal(a[4].B_true, b[4].B_true)

    def test_shapes(self):
        spec = small_spec()
        X, Y, Xt, Yt, truth = generate(spec)
        assert X.shape == (80, 60)
        assert Y.shape == (80, 40)
        assert Xt.shape == (50, 60)
        assert Yt.shape == (50, 40)
        assert truth.B_true.shape == (60, 40)
        assert truth.delta_true.shape == (3, 2)

    def test_exact_block_entry_counts(self):
        # sparsity is the zero share: 30% leaves 280 of 400 entries, 90% leaves 40
        for level, expect in ((30.0, 280), (90.0, 40)):
            spec = small_spec(sparsity_level=level, seed=5)
            truth = generate(spec)[4]
            g = spec.groups()
            for k in range(g.n_covariate_groups):
                for j in range(g.n_response_groups):
                    blk = truth.B_true[g.covariate_slice(k),
                                       g.response_slice(j)]
                    cnt = int(np.count_nonzero(blk))
                    if truth.delta_true[k, j]:
                        assert cnt == expect
                    else:
                        assert cnt == 0

    def test_fixed_kj_count(self):
        spec = small_spec(kj_law=2, seed=3)
        truth = generate(spec)[4]
        assert np.all(truth.delta_true.sum(axis=0) == 2)

    def test_kj_choices_land_in_law(self):
        spec = small_spec(kj_law=(1, 3), n_responses=200, seed=9)
        truth = generate(spec)[4]
        counts = truth.delta_true.sum(axis=0)
        assert set(counts.tolist()) <= {1, 3}
        assert len(set(counts.tolist())) == 2   # both values show up

    def test_delta_matches_pattern(self):
        spec = small_spec(seed=6)
        truth = generate(spec)[4]
        g = spec.groups()
        for k in range(g.n_covariate_groups):
            for j in range(g.n_response_groups):
                blk = truth.B_true[g.covariate_slice(k), g.response_slice(j)]
                assert bool(truth.delta_true[k, j]) == bool(np.any(blk))

    def test_adjacent_column_correlation(self):
        spec = small_spec(n=5000, seed=1)
        X = generate(spec)[0]
        r = np.array([np.corrcoef(X[:, i], X[:, i + 1])[0, 1]
                      for i in range(X.shape[1] - 1)])
        assert abs(r.mean() - 0.5) < 0.05

    def test_training_columns_standardized(self):
        spec = small_spec(seed=2)
        X, Y, Xt, Yt, truth = generate(spec)
        assert np.max(np.abs(X.mean(axis=0))) < 1e-12
        assert np.max(np.abs(X.std(axis=0, ddof=1) - 1.0)) < 1e-12
        assert np.max(np.abs(Y.mean(axis=0))) < 1e-12
        # test rows use the training statistics, so they are near but
        # not exactly standardized
        assert np.max(np.abs(Xt.mean(axis=0))) < 0.5


class TestEvaluate:
    def make_fit(self, B, g, delta=None):
        if delta is None:
            delta = np.zeros((g.n_covariate_groups, g.n_response_groups), bool)
            for k in range(g.n_covariate_groups):
                for j in range(g.n_response_groups):
                    blk = B[g.covariate_slice(k), g.response_slice(j)]
                    delta[k, j] = bool(np.any(blk))
        active = tuple((int(k), int(j)) for k, j in np.argwhere(delta))
        ind = IndicatorMatrix(delta=delta, c_hat=0.5, gamma_hat=0.5,
                              active=active)
        return FitResult(coefficients=B, indicator=ind, method="manual",
                         lambda_used=None, elapsed_seconds=0.0)

    def test_perfect_fit(self):
        spec = small_spec(seed=14)
        X, Y, Xt, Yt, truth = generate(spec)
        g = spec.groups()
        rep = evaluate(self.make_fit(truth.B_true, g), truth, Xt, Yt)
        assert rep.precision == 1.0
        assert rep.recall == 1.0
        assert rep.fdr == 0.0
        assert rep.pdr == 1.0
        assert rep.l1 == 0.0
        assert rep.l2 == 0.0
        # residual carries only the noise, which has unit variance on the
        # standardized response scale times the noise fraction
        assert 0.0 < rep.test_mse < 1.0

    def test_zero_fit(self):
        spec = small_spec(seed=15)
        X, Y, Xt, Yt, truth = generate(spec)
        g = spec.groups()
        rep = evaluate(self.make_fit(np.zeros_like(truth.B_true), g),
                       truth, Xt, Yt)
        assert rep.precision == 1.0      # nothing claimed, nothing wrong
        assert rep.recall == 0.0
        assert rep.fdr == 0.0
        assert rep.pdr == 0.0
        assert rep.l1 == np.sum(np.abs(truth.B_true))

    def test_hand_worked_confusion(self):
        g = GroupSpec((2, 2), (2, 2))
        B_true = np.zeros((4, 4))
        B_true[0:2, 0:2] = 1.0           # true block (0, 0) only
        truth_delta = np.array([[True, False], [False, False]])
        Bhat = np.zeros((4, 4))
        Bhat[2:4, 0:2] = 1.0             # claims (1, 0) instead
        Bhat[0:2, 0:2] = 1.0             # and the right one
        from blocksel.simbench import GroundTruth
        truth = GroundTruth(B_true=B_true, delta_true=truth_delta,
                            nonzero_entries=np.argwhere(B_true != 0.0))
        Xt = np.eye(4)
        Yt = Xt @ B_true
        rep = evaluate(self.make_fit(Bhat, g), truth, Xt, Yt)
        assert rep.precision == 0.5      # one of two claims is right
        assert rep.recall == 1.0
        assert rep.fdr == 0.5
        assert rep.l1 == 4.0             # four spurious unit entries
        assert rep.l2 == 2.0

    def test_l1_dominates_l2(self):
        spec = small_spec(seed=16)
        X, Y, Xt, Yt, truth = generate(spec)
        g = spec.groups()
        rng = np.random.default_rng(0)
        Bhat = truth.B_true + 0.1 * rng.standard_normal(truth.B_true.shape)
        rep = evaluate(self.make_fit(Bhat, g), truth, Xt, Yt)
        assert rep.l1 >= rep.l2 > 0.0


class TestRunBenchmark:
    def test_single_replication(self):
        spec = small_spec(n=60, n_covariates=40, n_responses=20, test_rows=40)
        reports, agg = run_benchmark(spec, methods=("nbslasso",),
                                     replications=1,
                                     method_kwargs={"nbslasso": {"gamma": 0.5}})
        assert len(reports) == 1
        row = agg["nbslasso"]
        assert row["test_mse"][1] == 0.0      # single rep has zero spread
        assert np.isfinite(row["test_mse"][0])

    def test_deterministic_given_seed(self):
        spec = small_spec(n=60, n_covariates=40, n_responses=20, test_rows=40)
        kw = {"nbslasso": {"gamma": 0.5}}
        r1, _ = run_benchmark(spec, ("nbslasso",), 2, base_seed=7,
                              method_kwargs=kw)
        r2, _ = run_benchmark(spec, ("nbslasso",), 2, base_seed=7,
                              method_kwargs=kw)
        for a, b in zip(r1, r2):
            assert a.test_mse == b.test_mse
            assert a.precision == b.precision

    def test_method_failure_is_recorded(self):
        spec = small_spec(n=60, n_covariates=40, n_responses=20, test_rows=40)
        kw = {"nbslasso": {"selector": "bogus"}}
        reports, agg = run_benchmark(spec, ("nbslasso",), 1, method_kwargs=kw)
        assert reports[0].error is not None
        assert "nbslasso" not in agg or np.isnan(agg["nbslasso"]["test_mse"][0])

    def test_thread_count_does_not_change_results(self):
        spec = small_spec(n=60, n_covariates=40, n_responses=20, test_rows=40)
        kw = {"nbslasso": {"gamma": 0.5}}
        r1, _ = run_benchmark(spec, ("nbslasso",), 2, base_seed=3, threads=1,
                              method_kwargs=kw)
        r2, _ = run_benchmark(spec, ("nbslasso",), 2, base_seed=3, threads=2,
                              method_kwargs=kw)
        for a, b in zip(r1, r2):
            assert a.test_mse == b.test_mse
            assert a.l1 == b.l1


class TestReporting:
    def sample_reports(self):
        spec = small_spec(n=60, n_covariates=40, n_responses=20, test_rows=40)
        return run_benchmark(spec, ("nbslasso", "lasso"), 2,
                             method_kwargs={"nbslasso": {"gamma": 0.5}})

    def test_aggregate_mean_and_sd(self):
        reports, agg = self.sample_reports()
        vals = [r.test_mse for r in reports if r.method == "nbslasso"]
        mean, sd = agg["nbslasso"]["test_mse"]
        assert mean == pytest.approx(np.mean(vals))
        assert sd == pytest.approx(np.std(vals, ddof=1))

    def test_table_header_and_shape(self):
        reports, agg = self.sample_reports()
        table = aggregate_table(agg, sparsity_label="30%")
        lines = table.strip().splitlines()
        header = lines[0].split()
        assert tuple(header) == TABLE_COLUMNS
        assert len(lines) == 1 + len(agg)
        assert "30%" in lines[1]
        # every cell carries mean(sd) formatting
        assert "(" in lines[1] and ")" in lines[1]

    def test_csv_round_trip(self, tmp_path):
        reports, _ = self.sample_reports()
        text = reports_to_csv(reports)
        lines = text.strip().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(reports)
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[1] in ("nbslasso", "lasso")
