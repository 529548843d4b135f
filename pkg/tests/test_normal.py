import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bbbal.errors import DomainError, MatrixError
from bbbal.normal import Bvn2, bvn_orthant, bvn_upper, orthant_prob, std_normal_cdf


def scipy_orthant(m, cov):
    """P(z >= 0) = P(-z <= 0) via scipy's Genz-based MVN CDF."""
    return stats.multivariate_normal.cdf(np.zeros(2), mean=-np.asarray(m), cov=cov,
                                         abseps=1e-12, releps=1e-12)


class TestStdNormalCdf:
    def test_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_upper_tail(self):
        assert abs(std_normal_cdf(8.0) - 1.0) < 1e-12

    def test_one_against_mpmath(self):
        mpmath.mp.dps = 40
        ref = float(mpmath.ncdf(1))
        assert abs(std_normal_cdf(1.0) - ref) < 1e-15
        assert abs(std_normal_cdf(1.0) - 0.841344746) < 1e-9

    @pytest.mark.parametrize("x", [math.inf, -math.inf, math.nan])
    def test_rejects_non_finite(self, x):
        with pytest.raises(DomainError):
            std_normal_cdf(x)

    @given(st.floats(-30, 30))
    def test_reflection(self, x):
        assert abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) <= 1e-15

    @given(st.floats(-30, 30), st.floats(0, 5))
    def test_monotone(self, x, dx):
        assert std_normal_cdf(x + dx) >= std_normal_cdf(x)

    def test_matches_mpmath_grid(self):
        mpmath.mp.dps = 40
        for x in np.linspace(-8, 8, 81):
            assert abs(std_normal_cdf(x) - float(mpmath.ncdf(x))) < 1e-15


class TestBvnOrthant:
    def test_independent(self):
        b = Bvn2.from_arrays([0, 0], np.eye(2))
        assert abs(bvn_orthant(b) - 0.25) < 1e-7

    def test_rho_half(self):
        b = Bvn2.from_arrays([0, 0], [[1, 0.5], [0.5, 1]])
        assert abs(bvn_orthant(b) - 1.0 / 3.0) < 1e-7

    def test_far_positive_mean(self):
        b = Bvn2.from_arrays([10, 10], np.eye(2))
        assert abs(bvn_orthant(b) - 1.0) < 1e-9

    def test_perfect_correlation(self):
        b = Bvn2.from_arrays([0, 0], [[1, 1], [1, 1]])
        assert abs(bvn_orthant(b) - 0.5) < 1e-7

    def test_arcsin_identity_dense(self):
        rho = np.linspace(-0.999, 0.999, 2001)
        got = orthant_prob(0.0, 0.0, 1.0, 1.0, rho)
        np.testing.assert_allclose(got, 0.25 + np.arcsin(rho) / (2 * np.pi), atol=1e-7, rtol=0)

    def test_against_scipy_random(self, rng):
        worst = 0.0
        for _ in range(300):
            m = rng.normal(0, 2, 2)
            v = rng.uniform(0.1, 4, 2)
            r = rng.uniform(-0.999, 0.999)
            c = r * math.sqrt(v[0] * v[1])
            cov = np.array([[v[0], c], [c, v[1]]])
            got = bvn_orthant(Bvn2.from_arrays(m, cov))
            worst = max(worst, abs(got - scipy_orthant(m, cov)))
        assert worst < 1e-7

    def test_diagonal_factorises(self, rng):
        for _ in range(50):
            m = rng.normal(0, 2, 2)
            v = rng.uniform(0.1, 4, 2)
            got = bvn_orthant(Bvn2.from_arrays(m, np.diag(v)))
            ref = std_normal_cdf(m[0] / math.sqrt(v[0])) * std_normal_cdf(m[1] / math.sqrt(v[1]))
            assert abs(got - ref) < 1e-9

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-0.99, 0.99),
           st.floats(0.2, 3), st.floats(0.2, 3))
    def test_swap_symmetry(self, m1, m2, r, v1, v2):
        c = r * math.sqrt(v1 * v2)
        a = orthant_prob(m1, m2, v1, v2, c)
        b = orthant_prob(m2, m1, v2, v1, c)
        assert abs(a - b) < 1e-12

    def test_monotone_in_mean_grid(self):
        grid = np.linspace(-4, 4, 41)
        for r in (-0.95, -0.3, 0.0, 0.6, 0.97, 1.0):
            vals = orthant_prob(grid[:, None], grid[None, :], 1.0, 1.0, r)
            assert np.all(np.diff(vals, axis=0) >= -1e-12)
            assert np.all(np.diff(vals, axis=1) >= -1e-12)

    def test_value_in_unit_interval(self, rng):
        h = rng.normal(0, 5, 1000)
        k = rng.normal(0, 5, 1000)
        r = rng.uniform(-1, 1, 1000)
        p = bvn_upper(h, k, r)
        assert np.all((p >= 0) & (p <= 1))

    def test_broadcast_shape(self):
        out = bvn_upper(np.zeros((3, 1)), np.zeros((1, 4)), 0.2)
        assert out.shape == (3, 4)

    @pytest.mark.parametrize("r", [1.0, -1.0])
    def test_degenerate_correlation_exact(self, r):
        h, k = 0.3, -0.7
        got = float(bvn_upper(h, k, r))
        if r > 0:
            ref = stats.norm.sf(max(h, k))
        else:
            ref = max(0.0, stats.norm.sf(h) - stats.norm.cdf(k))
        assert abs(got - ref) < 1e-15

    def test_near_edge_continuous(self):
        # the edge branch must agree with the interior just inside it
        a = float(bvn_upper(0.2, 0.1, 1 - 1e-9))
        b = float(bvn_upper(0.2, 0.1, 1.0))
        assert abs(a - b) < 1e-4

    def test_non_pd_rejected(self):
        with pytest.raises(MatrixError):
            bvn_orthant(Bvn2.from_arrays([0, 0], [[1, 2], [2, 1]]))

    def test_non_positive_variance_rejected(self):
        with pytest.raises(MatrixError):
            bvn_orthant(Bvn2.from_arrays([0, 0], [[0, 0], [0, 1]]))

    def test_asymmetric_rejected(self):
        with pytest.raises(MatrixError):
            bvn_orthant(Bvn2(((0.0, 0.0)), ((1.0, 0.2), (0.1, 1.0))))
