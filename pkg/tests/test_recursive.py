"""Tests for rrdag.recursive — bottom-up RRDAG sampling."""

from collections import Counter

import pytest


class TestCompletePrefix:
    def test_rows(self):
        from rrdag.recursive import complete_prefix
        assert complete_prefix(3, 2).tolist() == [[0, 0], [1, 0], [2, 1]]
        assert complete_prefix(10, 1).tolist() == [[0], [1]]


class TestGenerateRecursive:
    @pytest.mark.parametrize("n,m", [(1, 1), (1, 3), (2, 1), (5, 2), (50, 1), (200, 3), (300, 4)])
    def test_validates(self, n, m):
        from rrdag.graph import validate
        from rrdag.recursive import generate_recursive
        g = generate_recursive(n, m, seed=3)
        report = validate(g)
        assert report.ok, report.violations
        assert g.edge_count == sum(min(m, v - 1) for v in range(1, n + 1))

    def test_small_n_is_complete(self):
        from rrdag.graph import LabeledDag
        from rrdag.recursive import generate_recursive
        expected = LabeledDag.from_edges(3, 2, [(2, 1), (3, 1), (3, 2)])
        for seed in range(5):
            assert generate_recursive(3, 2, seed=seed) == expected

    def test_deterministic(self):
        from rrdag.recursive import generate_recursive
        assert generate_recursive(500, 2, seed=17) == generate_recursive(500, 2, seed=17)
        assert generate_recursive(500, 2, seed=17) != generate_recursive(500, 2, seed=18)

    def test_bad_parameters(self):
        from rrdag.recursive import generate_recursive
        with pytest.raises(ValueError, match="m must be >= 1"):
            generate_recursive(5, 0)
        with pytest.raises(ValueError, match="n must be >= 1"):
            generate_recursive(0, 1)

    def test_last_vertex_uniform(self):
        from rrdag.recursive import generate_recursive
        from rrdag.sampling import make_rng
        rng = make_rng(123)
        trials = 30_000
        counts = Counter(generate_recursive(4, 2, rng).out_neighbors(4) for _ in range(trials))
        assert set(counts) == {(2, 1), (3, 1), (3, 2)}
        p = 1 / 3
        sd = (trials * p * (1 - p)) ** 0.5
        for c in counts.values():
            assert abs(c - trials * p) <= 4 * sd

    @pytest.mark.parametrize("m,n,samples", [(1, 4, 12_000), (2, 4, 6_000), (2, 5, 18_000)])
    def test_uniform_over_increasing_dags(self, m, n, samples):
        from scipy.stats import chisquare
        from rrdag.oracle import count_increasing_dags
        from rrdag.recursive import generate_recursive
        from rrdag.sampling import make_rng
        rng = make_rng(7, m * 10 + n)
        counts = Counter(generate_recursive(n, m, rng).encode() for _ in range(samples))
        assert len(counts) == count_increasing_dags(n, m)
        assert chisquare(list(counts.values())).pvalue >= 0.001
