"""Tests for rrdag.montecarlo — configs, the trial engine and its estimators."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest


def _config(**overrides):
    from rrdag.montecarlo import ExperimentConfig
    base = {"kind": "degree", "m": 2, "n": 60, "trials": 40, "master_seed": 11}
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_defaults(self):
        cfg = _config()
        assert cfg.resolved_construction == "recursive"
        assert cfg.degree_thresholds() == (0,)
        assert _config(kind="tau", tracked=2).resolved_construction == "coalescent"

    def test_threshold_ratio(self):
        cfg = _config(kind="multi_label", n=100, tracked=2, threshold_ratio=1.0)
        assert cfg.degree_thresholds() == (4, 4)
        cfg = _config(kind="depth_label", n=100, tracked=3, threshold_ratio=1.0)
        assert cfg.degree_thresholds() == (4,)
        assert _config(kind="depth_label", thresholds=(3,)).degree_thresholds() == (3,)

    @pytest.mark.parametrize("overrides,path", [
        ({"kind": "bogus"}, "$.kind"),
        ({"m": 0}, "$.m"),
        ({"trials": 0}, "$.trials"),
        ({"kind": "tau", "tracked": 2, "construction": "recursive"}, "$.construction"),
        ({"kind": "tau", "tracked": 1}, "$.tracked"),
        ({"tracked": 61}, "$.tracked"),
        ({"mode": "lazy"}, "$.mode"),
        ({"thresholds": (1, -1)}, "$.thresholds[1]"),
        ({"threshold_ratio": 3.0}, "$.threshold_ratio"),
        ({"window": (3, -3)}, "$.window"),
        ({"t_grid": (50, 3)}, "$.t_grid[1]"),
        ({"alpha": 0.0}, "$.alpha"),
        ({"schema_version": 2}, "$.schema_version"),
    ])
    def test_invalid(self, overrides, path):
        from rrdag.montecarlo import ConfigError
        with pytest.raises(ConfigError) as info:
            _config(**overrides)
        assert info.value.path == path
        assert str(info.value).startswith(f"{path}: ")

    def test_config_error_is_value_error(self):
        from rrdag.montecarlo import ConfigError
        assert issubclass(ConfigError, ValueError)

    def test_dict_round_trip(self):
        from rrdag.montecarlo import ExperimentConfig
        cfg = _config(kind="multi_label", tracked=2, thresholds=(2, 3), mode="harvest", window=(-4, 2))
        obj = json.loads(json.dumps(cfg.to_dict()))
        assert obj["thresholds"] == [2, 3]
        assert ExperimentConfig.from_dict(obj) == cfg

    def test_from_dict_errors(self):
        from rrdag.montecarlo import ConfigError, ExperimentConfig
        good = {"kind": "degree", "m": 1, "n": 10, "trials": 5}
        cases = [
            ({**good, "extra": 1}, "$.extra"),
            ({k: v for k, v in good.items() if k != "trials"}, "$.trials"),
            ({**good, "m": True}, "$.m"),
            ({**good, "n": "10"}, "$.n"),
            ({**good, "thresholds": [1, "x"]}, "$.thresholds[1]"),
            ({**good, "window": 3}, "$.window"),
            ({**good, "alpha": "small"}, "$.alpha"),
        ]
        for obj, path in cases:
            with pytest.raises(ConfigError) as info:
                ExperimentConfig.from_dict(obj)
            assert info.value.path == path
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_dict([1, 2])
        assert info.value.path == "$"

    def test_load_config(self):
        from rrdag.montecarlo import ConfigError, load_config
        cfg = load_config('{"kind": "tau", "m": 2, "n": 30, "trials": 10, "tracked": 3, "threshold_ratio": null}')
        assert cfg.kind == "tau"
        assert cfg.threshold_ratio is None
        with pytest.raises(ConfigError, match="invalid JSON") as info:
            load_config("{")
        assert info.value.path == "$"


class TestResolveWorkers:
    def test_explicit(self):
        from rrdag.montecarlo import resolve_workers
        assert resolve_workers(3) == 3
        with pytest.raises(ValueError, match=">= 1"):
            resolve_workers(0)

    def test_env(self, monkeypatch):
        from rrdag.montecarlo import resolve_workers
        monkeypatch.setenv("RRDAG_THREADS", "5")
        assert resolve_workers() == 5
        assert resolve_workers(2) == 2
        monkeypatch.setenv("RRDAG_THREADS", "many")
        with pytest.raises(ValueError, match="RRDAG_THREADS"):
            resolve_workers()

    def test_default(self, monkeypatch):
        from rrdag.montecarlo import resolve_workers
        monkeypatch.delenv("RRDAG_THREADS", raising=False)
        assert resolve_workers() >= 1


class TestDegreeExperiment:
    @pytest.fixture(scope="class")
    def agg(self):
        from rrdag.montecarlo import run_experiment
        return run_experiment(_config(tracked=2, window=(-6, 3)), workers=1)

    def test_single_vertex(self):
        from rrdag.montecarlo import run_experiment
        agg = run_experiment(_config(n=1, trials=5), workers=1)
        assert agg.degree_totals.tolist() == [5]
        assert agg.max_degree.tolist() == [0] * 5
        assert agg.base == 0

    def test_shapes(self, agg):
        assert agg.tracked_degrees.shape == (40, 2)
        assert agg.counts.shape == (40, 10)
        assert agg.tail_counts.shape == (40, 10)
        assert agg.max_degree.shape == (40,)
        assert agg.samples.shape == (0, 2)
        assert agg.tau.size == 0
        assert agg.offsets == list(range(-6, 4))

    def test_degree_totals(self, agg):
        n, m, trials = 60, 2, 40
        edges = sum(min(m, v - 1) for v in range(1, n + 1))
        assert agg.degree_totals.sum() == trials * n
        assert (np.arange(agg.degree_totals.size) * agg.degree_totals).sum() == trials * edges

    def test_counts_telescope(self, agg):
        assert np.array_equal(agg.tail_counts[:, :-1] - agg.tail_counts[:, 1:], agg.counts[:, :-1])

    def test_max_degree_consistent(self, agg):
        for i in agg.offsets:
            col = agg.offset_column(i)
            assert np.array_equal(agg.tail_counts[:, col] > 0, agg.max_degree >= agg.base + i)

    def test_offset_column(self, agg):
        assert agg.offset_column(-6) == 0
        with pytest.raises(ValueError, match="outside the recorded window"):
            agg.offset_column(4)

    def test_joint_tail(self, agg):
        from rrdag.montecarlo import joint_tail
        assert joint_tail(agg, (0, 0)) == (40, 40)
        hits, trials = joint_tail(agg, (1, 1))
        assert hits <= joint_tail(agg, (1, 0))[0]
        with pytest.raises(ValueError, match="expected 2 thresholds"):
            joint_tail(agg, (1,))

    def test_degree_tail_estimate(self, agg):
        from rrdag.montecarlo import degree_tail_estimate
        df = degree_tail_estimate(agg)
        assert list(df.columns) == ["d", "successes", "trials", "empirical", "reference", "ci_lo", "ci_hi"]
        assert len(df) == 16
        assert df["empirical"].iloc[0] == 1.0
        assert df["empirical"].is_monotonic_decreasing
        assert (df["ci_lo"] <= df["empirical"]).all() and (df["empirical"] <= df["ci_hi"]).all()
        assert df["reference"].iloc[1] == pytest.approx(4 / 9)

    def test_count_profile(self, agg):
        from rrdag.montecarlo import count_profile
        df = count_profile(agg)
        assert len(df) == 40
        assert "X_-6" in df.columns and "X_ge_3" in df.columns
        assert df["max_degree"].tolist() == agg.max_degree.tolist()

    def test_factorial_moments(self, agg):
        from rrdag.montecarlo import factorial_moment_estimate
        mean, stderr = factorial_moment_estimate(agg, {0: 1})
        assert mean == pytest.approx(agg.counts[:, agg.offset_column(0)].mean())
        assert stderr >= 0
        x = agg.counts[:, agg.offset_column(-1)].astype(float)
        mean, _ = factorial_moment_estimate(agg, {-1: 2})
        assert mean == pytest.approx((x * (x - 1)).mean())
        with pytest.raises(ValueError, match="at most 4"):
            factorial_moment_estimate(agg, {0: 3}, tail=(1, 2))

    def test_max_degree_table(self, agg):
        from rrdag.montecarlo import max_degree_table
        df = max_degree_table(agg)
        assert df["i"].tolist() == [-2, -1, 0, 1, 2, 3]
        assert (df["threshold"] == agg.base + df["i"]).all()
        assert df["empirical"].is_monotonic_decreasing
        assert df["reference"].is_monotonic_decreasing

    def test_count_clt_sample(self, agg):
        from rrdag.montecarlo import count_clt_sample
        assert count_clt_sample(agg, -6).shape == (40,)
        with pytest.raises(ValueError, match="outside the recorded window"):
            count_clt_sample(agg)

    def test_wrong_kind(self, agg):
        from rrdag.montecarlo import tau_tail_table
        with pytest.raises(ValueError, match="needs a 'tau' experiment"):
            tau_tail_table(agg)

    def test_evaluate(self, agg):
        from rrdag.montecarlo import evaluate
        from rrdag.stats import GofReport
        reports = evaluate(agg)
        assert all(isinstance(r, GofReport) for r in reports)
        names = [r.test for r in reports]
        assert names.count("max_degree_band") == 6
        assert "factorial_moment_X_0_2" in names
        assert "mean_X_ge_1" in names

    def test_metadata(self, agg):
        from rrdag import __version__
        assert agg.metadata["construction"] == "recursive"
        assert agg.metadata["version"] == __version__
        assert "engineering judgments" in agg.metadata["tolerances"]
        assert "ordering" not in agg.metadata
        assert "finite_n" not in agg.metadata


class TestDeterminism:
    def test_workers_do_not_change_result(self):
        from rrdag.montecarlo import run_experiment
        cfg = _config(trials=25, tracked=3)
        assert run_experiment(cfg, workers=1).to_json() == run_experiment(cfg, workers=2).to_json()

    def test_seed_changes_result(self):
        from rrdag.montecarlo import run_experiment
        a = run_experiment(_config(trials=25), workers=1)
        b = run_experiment(_config(trials=25, master_seed=12), workers=1)
        assert a.to_json() != b.to_json()

    def test_coalescent_workers(self):
        from rrdag.montecarlo import run_experiment
        cfg = _config(trials=20, construction="coalescent")
        one = run_experiment(cfg, workers=1)
        assert one.to_json() == run_experiment(cfg, workers=3).to_json()
        assert one.metadata["ordering"] == "pool"

    def test_to_json_sorted(self):
        from rrdag.montecarlo import run_experiment
        doc = json.loads(run_experiment(_config(trials=3), workers=1).to_json())
        assert list(doc) == sorted(doc)
        assert doc["config"]["master_seed"] == 11


class TestExactDegreeLaw:
    """Monte Carlo tails at (m, n) = (2, 5) against the exact oracle values."""

    @pytest.mark.parametrize("construction", ["recursive", "coalescent"])
    def test_matches_oracle(self, construction):
        from rrdag.montecarlo import joint_tail, run_experiment
        from rrdag.stats import proportion_test
        agg = run_experiment(_config(n=5, trials=4000, construction=construction), workers=1)
        for d, exact in ((1, Fraction(2, 3)), (2, Fraction(13, 30))):
            hits, trials = joint_tail(agg, (d,))
            assert proportion_test(hits, trials, float(exact), sigmas=4.5).passed

    def test_expected_histogram(self):
        from rrdag.montecarlo import run_experiment
        agg = run_experiment(_config(n=5, trials=4000), workers=1)
        mean_hist = agg.degree_totals / 4000
        exact = [5 / 3, 7 / 6, 1, 5 / 6, 1 / 3]
        assert mean_hist.size <= 5
        for got, want in zip(mean_hist, exact):
            assert got == pytest.approx(want, abs=0.08)


class TestConditional:
    def test_depth_label_faithful(self):
        from rrdag.montecarlo import conditional_depth_label_sample, run_experiment
        agg = run_experiment(_config(kind="depth_label", n=200, trials=300, thresholds=(2,)), workers=1)
        assert agg.attempts == 300
        assert 0 < agg.accepted <= agg.attempts
        assert agg.samples.shape == (agg.accepted, 2)
        assert (agg.samples[:, 0] >= 0).all()
        assert ((agg.samples[:, 1] >= 1) & (agg.samples[:, 1] <= 200)).all()
        df = conditional_depth_label_sample(agg)
        assert list(df.columns) == ["u_std", "log_label_std"]
        assert len(df) == agg.accepted

    def test_depth_label_harvest(self):
        from rrdag.montecarlo import run_experiment
        agg = run_experiment(_config(kind="depth_label", n=50, trials=10, thresholds=(1,), mode="harvest"),
                             workers=1)
        assert agg.attempts == 500
        assert agg.samples.shape == (agg.accepted, 2)
        assert "approximate" in agg.metadata["harvest"]
        assert "finite-n bias" in agg.metadata["finite_n"]

    def test_zero_threshold_cannot_standardize(self):
        from rrdag.montecarlo import ExperimentError, conditional_depth_label_sample, evaluate, run_experiment
        agg = run_experiment(_config(kind="depth_label", n=30, trials=20), workers=1)
        assert agg.accepted == agg.attempts == 20
        with pytest.raises(ExperimentError, match="d=0"):
            conditional_depth_label_sample(agg)
        assert evaluate(agg) == []

    def test_acceptance_floor(self):
        from rrdag.montecarlo import ExperimentError, run_experiment
        cfg = _config(kind="depth_label", n=100, trials=50, thresholds=(60,), min_acceptance=0.5)
        with pytest.raises(ExperimentError, match="acceptance rate"):
            run_experiment(cfg, workers=1)

    def test_correlation_needs_narrow_interval(self):
        from rrdag.montecarlo import _correlation_report
        rng = np.random.default_rng(21)
        x = rng.standard_normal(20_000)
        y = 0.6 * x + 0.8 * rng.standard_normal(20_000)
        wide = _correlation_report(x[:200], y[:200], float(np.corrcoef(x[:200], y[:200])[0, 1]))
        assert wide.params["half_width"] > 0.05
        assert not wide.passed
        narrow = _correlation_report(x, y, float(np.corrcoef(x, y)[0, 1]))
        assert narrow.params["half_width"] <= 0.05
        assert narrow.passed
        assert not _correlation_report(x, y, 0.9).passed

    def test_multi_label_faithful(self):
        from rrdag.montecarlo import multi_label_sample, run_experiment
        agg = run_experiment(_config(kind="multi_label", n=100, trials=200, tracked=2, thresholds=(1, 1)),
                             workers=1)
        assert agg.attempts == 200
        assert agg.samples.shape == (agg.accepted, 2)
        assert (agg.samples[:, 0] != agg.samples[:, 1]).all()
        df = multi_label_sample(agg)
        assert list(df.columns) == ["label_std_1", "label_std_2"]

    def test_multi_label_harvest(self):
        from rrdag.montecarlo import run_experiment
        agg = run_experiment(
            _config(kind="multi_label", n=100, trials=10, tracked=3, thresholds=(1, 2, 1), mode="harvest"),
            workers=1,
        )
        assert agg.attempts == 10 * (100 // 3)
        assert agg.samples.shape == (agg.accepted, 3)
        for row in agg.samples:
            assert len(set(row.tolist())) == 3


class TestTau:
    def test_two_vertices(self):
        from rrdag.montecarlo import run_experiment, tau_k_sample
        cfg = _config(kind="tau", m=1, n=2, trials=6, tracked=2)
        agg = run_experiment(cfg, workers=1)
        assert agg.tau.tolist() == [2] * 6
        assert tau_k_sample(agg).tolist() == [0, 0, 6]

    def test_tail_table(self):
        from rrdag.montecarlo import run_experiment, tau_tail_table
        agg = run_experiment(_config(kind="tau", m=1, n=30, trials=200, tracked=3, t_grid=(3, 5, 10, 20)),
                             workers=1)
        assert ((agg.tau >= 2) & (agg.tau <= 30)).all()
        df = tau_tail_table(agg)
        assert df["t"].tolist() == [3, 5, 10, 20]
        assert df["empirical"].is_monotonic_decreasing
        assert df["bound"].is_monotonic_decreasing

    def test_evaluate(self):
        from rrdag.montecarlo import evaluate, run_experiment
        agg = run_experiment(_config(kind="tau", m=2, n=60, trials=100, tracked=2, t_grid=(10, 30)), workers=1)
        reports = evaluate(agg)
        assert [r.params["t"] for r in reports] == [10, 30]
        assert all(r.test == "upper_bound" for r in reports)

    def test_sample_from_config(self):
        from rrdag.montecarlo import tau_k_sample
        hist = tau_k_sample(_config(kind="tau", m=1, n=10, trials=30, tracked=2), workers=1)
        assert hist.sum() == 30
        assert hist.size == 11


@pytest.mark.slow
class TestLimitScale:
    def test_degree_tails_near_geometric(self):
        from rrdag.montecarlo import degree_tail_estimate, run_experiment
        agg = run_experiment(_config(m=1, n=2000, trials=2000, window=(-3, 3)))
        df = degree_tail_estimate(agg).set_index("d")
        for d in (1, 2, 3):
            assert abs(df.loc[d, "empirical"] - df.loc[d, "reference"]) < 0.05

    def test_tau_bound_holds(self):
        from rrdag.montecarlo import evaluate, run_experiment
        agg = run_experiment(_config(kind="tau", m=2, n=1000, trials=2000, tracked=3))
        assert all(r.passed for r in evaluate(agg))


@pytest.mark.slow
class TestPoissonRegime:
    """m=1, n=2^17 (eps_n = 0): counts, factorial moments, maximum degree."""

    @pytest.fixture(scope="class")
    def agg(self):
        from rrdag.montecarlo import run_experiment
        return run_experiment(_config(m=1, n=2**17, trials=1000, master_seed=2024, window=(-10, 5)))

    @pytest.fixture(scope="class")
    def reports(self, agg):
        from rrdag.montecarlo import evaluate
        return evaluate(agg)

    def test_eps_zero(self, agg):
        assert agg.eps_n == 0
        assert agg.base == 17

    def test_poisson_marginals(self, reports):
        chisq = {r.params["offset"]: r for r in reports if r.test == "chisq_poisson"}
        assert set(chisq) == {0, 1}
        assert all(r.passed for r in chisq.values())

    def test_tail_count_mean(self, reports):
        (mean,) = [r for r in reports if r.test == "mean_X_ge_1"]
        assert mean.passed

    def test_second_factorial_moment(self, reports):
        (fm,) = [r for r in reports if r.test == "factorial_moment_X_0_2"]
        assert fm.passed

    def test_count_clt(self, reports):
        (ks,) = [r for r in reports if r.test == "ks_normal"]
        assert ks.params["offset"] == -8
        assert ks.passed

    def test_max_degree_band(self, agg):
        # the ±0.04 band is about 2.5 standard errors at 1000 trials
        from rrdag.montecarlo import max_degree_table
        df = max_degree_table(agg)
        assert df["i"].tolist() == [-2, -1, 0, 1, 2, 3]
        se = np.sqrt(df["reference"] * (1 - df["reference"]) / df["trials"])
        assert ((df["empirical"] - df["reference"]).abs() <= 0.04 + 3 * se).all()


@pytest.mark.slow
class TestConditionalFiniteN:
    """m=2, n=1e5, d=⌊1.5 ln n⌋ in harvest mode: the label bias at this n."""

    @pytest.fixture(scope="class")
    def depth_label(self):
        from rrdag.montecarlo import run_experiment
        return run_experiment(_config(kind="depth_label", m=2, n=100_000, trials=40, master_seed=3,
                                      threshold_ratio=1.5, mode="harvest"))

    @pytest.fixture(scope="class")
    def multi_label(self):
        from rrdag.montecarlo import run_experiment
        return run_experiment(_config(kind="multi_label", m=2, n=100_000, trials=40, master_seed=4,
                                      tracked=2, threshold_ratio=1.5, mode="harvest"))

    def test_sample_size(self, depth_label):
        assert depth_label.config.degree_thresholds() == (17,)
        assert depth_label.accepted >= 2000

    def test_label_margin_is_shifted(self, depth_label):
        from rrdag.montecarlo import conditional_depth_label_sample
        labels = conditional_depth_label_sample(depth_label)["log_label_std"]
        assert -0.9 < labels.mean() < -0.5
        assert 1.0 < labels.std() < 1.4

    def test_correlation_above_limit(self, depth_label):
        from rrdag.montecarlo import evaluate
        from rrdag.theory import correlation_limit
        (corr,) = [r for r in evaluate(depth_label) if r.test == "correlation_ci"]
        assert corr.params["reference"] == pytest.approx(correlation_limit(2, 17 / math.log(100_000)))
        assert corr.statistic > 0.7
        assert corr.params["half_width"] <= 0.05
        assert not corr.passed

    def test_quadrant_below_limit(self, multi_label):
        from rrdag.montecarlo import multi_label_sample
        labels = multi_label_sample(multi_label)
        assert len(labels) >= 1000
        assert (labels > 0).all(axis=1).mean() < 0.15

    def test_caveat_recorded(self, depth_label, multi_label):
        for agg in (depth_label, multi_label):
            assert "finite-n bias" in agg.metadata["finite_n"]
            assert "approximate" in agg.metadata["harvest"]
