"""Tests for rrdag.sampling — seeded streams and distinct-subset draws."""

from collections import Counter
from itertools import combinations

import numpy as np
import pytest


class TestSeeds:
    def test_same_seed_same_stream(self):
        from rrdag.sampling import make_rng
        a = make_rng(42, 3).integers(0, 2**32, size=8)
        b = make_rng(42, 3).integers(0, 2**32, size=8)
        assert a.tolist() == b.tolist()

    def test_streams_differ(self):
        from rrdag.sampling import make_rng
        a = make_rng(42, 0).integers(0, 2**32, size=8)
        b = make_rng(42, 1).integers(0, 2**32, size=8)
        assert a.tolist() != b.tolist()

    def test_seed_object(self):
        from rrdag.sampling import Seed, make_rng
        x = Seed(7, 2).generator().random(4)
        y = make_rng(7, 2).random(4)
        assert x.tolist() == y.tolist()

    def test_seed_range(self):
        from rrdag.sampling import Seed
        with pytest.raises(ValueError, match="64 unsigned bits"):
            Seed(-1)
        with pytest.raises(ValueError):
            Seed(2**64)

    def test_as_generator(self):
        from rrdag.sampling import Seed, as_generator, make_rng
        rng = make_rng(1)
        assert as_generator(rng) is rng
        assert as_generator(None).random() == make_rng(0).random()
        assert as_generator(5).random() == make_rng(5).random()
        assert as_generator(Seed(5)).random() == make_rng(5).random()
        with pytest.raises(TypeError):
            as_generator("5")


class TestSampleDistinct:
    def test_full_population(self):
        from rrdag.sampling import make_rng, sample_distinct
        assert sample_distinct(4, 4, make_rng(0)) == (1, 2, 3, 4)

    def test_empty(self):
        from rrdag.sampling import make_rng, sample_distinct
        assert sample_distinct(0, 5, make_rng(0)) == ()

    def test_too_many(self):
        from rrdag.sampling import make_rng, sample_distinct
        with pytest.raises(ValueError, match="cannot draw 5"):
            sample_distinct(5, 4, make_rng(0))

    @pytest.mark.parametrize("k,i", [(1, 5), (3, 10), (3, 100), (7, 9)])
    def test_shape(self, k, i):
        from rrdag.sampling import make_rng, sample_distinct
        rng = make_rng(11)
        for _ in range(200):
            sub = sample_distinct(k, i, rng)
            assert len(sub) == k
            assert list(sub) == sorted(set(sub))
            assert 1 <= sub[0] and sub[-1] <= i

    def test_singletons_uniform(self):
        from scipy.stats import chisquare
        from rrdag.sampling import make_rng, sample_distinct
        rng = make_rng(2024)
        counts = Counter(sample_distinct(1, 5, rng) for _ in range(100_000))
        assert set(counts) == {(v,) for v in range(1, 6)}
        assert chisquare(list(counts.values())).pvalue >= 0.01

    def test_pairs_uniform(self):
        from rrdag.sampling import make_rng, sample_distinct
        rng = make_rng(99)
        trials = 100_000
        counts = Counter(sample_distinct(2, 4, rng) for _ in range(trials))
        assert set(counts) == set(combinations(range(1, 5), 2))
        p = 1 / 6
        sd = (trials * p * (1 - p)) ** 0.5
        for c in counts.values():
            assert abs(c - trials * p) <= 4 * sd


class TestBatchDistinct:
    def test_rows(self):
        from rrdag.sampling import batch_distinct, make_rng
        highs = np.array([3, 4, 10, 50, 1000, 3])
        out = batch_distinct(make_rng(5), highs, 3)
        assert out.shape == (6, 3)
        assert (np.diff(out, axis=1) > 0).all()
        assert (out >= 1).all()
        assert (out <= highs[:, None]).all()
        assert out[0].tolist() == [1, 2, 3]

    def test_single_column(self):
        from rrdag.sampling import batch_distinct, make_rng
        out = batch_distinct(make_rng(5), np.arange(1, 200), 1)
        assert out.shape == (199, 1)
        assert (out[:, 0] <= np.arange(1, 200)).all()

    def test_population_too_small(self):
        from rrdag.sampling import batch_distinct, make_rng
        with pytest.raises(ValueError, match="smaller than k=3"):
            batch_distinct(make_rng(0), np.array([5, 2]), 3)

    def test_deterministic(self):
        from rrdag.sampling import batch_distinct, make_rng
        highs = np.arange(3, 500)
        a = batch_distinct(make_rng(8), highs, 2)
        b = batch_distinct(make_rng(8), highs, 2)
        assert np.array_equal(a, b)
