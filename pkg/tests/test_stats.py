import math

import numpy as np
import pytest

from sparsegnn.stats import betainc, pearson, student_t_sf, student_t_two_sided
from sparsegnn.tensor import make_rng

scipy_stats = pytest.importorskip("scipy.stats")
scipy_special = pytest.importorskip("scipy.special")


class TestBetainc:
    def test_against_scipy(self):
        rng = make_rng(1)
        for _ in range(200):
            a = float(rng.uniform(0.1, 20))
            b = float(rng.uniform(0.1, 20))
            x = float(rng.uniform(0, 1))
            assert betainc(a, b, x) == pytest.approx(
                float(scipy_special.betainc(a, b, x)), abs=1e-12, rel=1e-10)

    def test_edges(self):
        assert betainc(2.0, 3.0, 0.0) == 0.0
        assert betainc(2.0, 3.0, 1.0) == 1.0

    def test_domain(self):
        with pytest.raises(ValueError):
            betainc(-1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            betainc(1.0, 1.0, 1.5)


class TestStudentT:
    def test_sf_against_scipy(self):
        for df in (1, 2, 5, 10, 30, 100):
            for t in (-4.0, -1.0, 0.0, 0.5, 2.0, 8.0):
                assert student_t_sf(t, df) == pytest.approx(
                    float(scipy_stats.t.sf(t, df)), abs=1e-6)

    def test_tabulated_values(self):
        # classic two-sided critical values: t_{0.025, df}
        assert student_t_two_sided(12.706, 1) == pytest.approx(0.05, abs=5e-5)
        assert student_t_two_sided(2.228, 10) == pytest.approx(0.05, abs=5e-5)
        assert student_t_two_sided(1.96, 10**6) == pytest.approx(0.05, abs=1e-4)


class TestPearson:
    def test_four_point_fixture(self):
        r, p, n = pearson([1, 2, 3, 4], [1, 2, 2, 3])
        assert r == pytest.approx(0.9487, abs=1e-3)
        sr, sp = scipy_stats.pearsonr([1, 2, 3, 4], [1, 2, 2, 3])
        assert r == pytest.approx(float(sr), abs=1e-12)
        assert p == pytest.approx(float(sp), abs=1e-9)

    def test_perfectly_linear(self):
        r, p, _ = pearson([1, 2, 3], [2, 4, 6])
        assert r == 1.0
        assert p == 0.0

    def test_anticorrelated(self):
        r, p, _ = pearson([1, 2, 3, 4], [4, 3, 2, 1])
        assert r == -1.0
        assert p == 0.0

    def test_constant_raises(self):
        with pytest.raises(ValueError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])

    def test_null_distribution(self):
        rng = make_rng(2)
        xs = rng.normal(size=1000)
        ys = rng.normal(size=1000)
        r, p, _ = pearson(xs, ys)
        assert abs(r) < 0.1

    def test_matches_scipy_on_random_data(self):
        rng = make_rng(3)
        xs = rng.normal(size=30)
        ys = 0.4 * xs + rng.normal(size=30)
        r, p, _ = pearson(xs, ys)
        sr, sp = scipy_stats.pearsonr(xs, ys)
        assert r == pytest.approx(float(sr), abs=1e-12)
        assert p == pytest.approx(float(sp), rel=1e-8)
