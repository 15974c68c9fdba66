import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkfit import (
    FitMethod,
    PriorSpec,
    ShrinkagePosterior,
    TwoLevelData,
    conditional_theta_law,
    fit,
    fit_adm_general,
    fit_exact_equal,
    fit_mle,
    random_effects,
)
from shrinkfit.density import projection_diag
from shrinkfit.inference import conditional_theta_moments


class TestRandomEffects:
    def test_mle_boundary_gives_zero_width_intervals(self, fig1_data):
        post = random_effects(fig1_data, fit_mle(fig1_data))
        assert np.all(post.s2 == 0.0)
        np.testing.assert_array_equal(post.lo, post.hi)
        np.testing.assert_array_equal(post.theta_hat, np.zeros(10))

    def test_interval_width_identity(self, two_group_data):
        shr = fit_adm_general(two_group_data, PriorSpec())
        post = random_effects(two_group_data, shr, z_star=1.64)
        np.testing.assert_allclose(
            post.hi - post.lo, 2 * 1.64 * np.sqrt(post.s2), atol=1e-12
        )

    def test_equal_variance_regression_formula(self):
        # s_i^2 = V(1-B) + V x_i'(X'X)^-1 x_i B + v (y_i - x_i' beta)^2
        rng = np.random.default_rng(41)
        k, V = 14, 1.8
        X = np.column_stack([np.ones(k), rng.normal(size=k)])
        y = X @ np.array([0.5, 1.0]) + rng.normal(0, np.sqrt(V + 2.0), k)
        data = TwoLevelData(y, np.full(k, V), X)
        shr = fit(data, PriorSpec(), FitMethod.ADM)
        post = random_effects(data, shr)
        B, v = shr.B_hat[0], shr.v[0]
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        hat = np.einsum("ij,jk,ik->i", X, np.linalg.inv(X.T @ X), X)
        expected = V * (1 - B) + V * hat * B + v * (y - X @ beta) ** 2
        np.testing.assert_allclose(post.s2, expected, rtol=1e-10)
        np.testing.assert_allclose(post.beta_hat, beta, atol=1e-10)

    def test_plugin_reduction_when_v_zero(self, two_group_data):
        # a hand-built posterior with v = 0 reduces to the conditional
        # variance plus the beta-uncertainty term only
        A = 1.3
        B = two_group_data.V / (two_group_data.V + A)
        shr = ShrinkagePosterior(A_hat=A, B_hat=B, v=np.zeros(10))
        post = random_effects(two_group_data, shr)
        p = projection_diag(A, two_group_data)
        expected = (1 - (1 - p) * B) * two_group_data.V
        np.testing.assert_allclose(post.s2, expected, atol=1e-12)

    def test_exact_equal_pipeline_matches_closed_formulas(self, equal_dataset_factory):
        # with r = 0 the theorem's moments are exact: compare to the direct
        # equal-variance formulas
        rng = np.random.default_rng(43)
        for _ in range(10):
            data = equal_dataset_factory(rng)
            shr = fit_exact_equal(data, PriorSpec(c=1.0))
            post = random_effects(data, shr)
            B, v = shr.B_hat[0], shr.v[0]
            np.testing.assert_allclose(post.theta_hat, (1 - B) * data.y, atol=1e-10)
            np.testing.assert_allclose(
                post.s2, data.V * (1 - B) + v * data.y**2, atol=1e-10
            )

    def test_known_mu_recenters(self):
        rng = np.random.default_rng(47)
        k = 8
        mu = rng.normal(0, 2, k)
        y = mu + rng.normal(0, 1.2, k)
        data = TwoLevelData(y, np.ones(k))
        prior = PriorSpec(known_mu=mu)
        shr = fit(data, prior, FitMethod.ADM)
        post = random_effects(data, shr, known_mu=mu)
        B = shr.B_hat
        np.testing.assert_allclose(post.theta_hat, (1 - B) * y + B * mu, atol=1e-12)

    def test_variance_dominates_plugin(self, two_group_data):
        shr = fit_adm_general(two_group_data, PriorSpec())
        post = random_effects(two_group_data, shr)
        p = projection_diag(shr.A_hat, two_group_data)
        floor = two_group_data.V * (1 - shr.B_hat) * (1 - p)
        assert np.all(post.s2 >= floor - 1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_theta_is_convex_combination(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(4, 12))
        V = rng.uniform(0.3, 3.0, k)
        data = TwoLevelData(rng.normal(0, 2, k), V, np.ones((k, 1)))
        shr = fit(data, PriorSpec(), FitMethod.ADM)
        post = random_effects(data, shr)
        fitted = data.X @ post.beta_hat
        lo = np.minimum(data.y, fitted) - 1e-12
        hi = np.maximum(data.y, fitted) + 1e-12
        assert np.all(post.theta_hat >= lo) and np.all(post.theta_hat <= hi)

    def test_z_star_must_be_positive(self, fig1_data):
        with pytest.raises(ValueError):
            random_effects(fig1_data, fit_mle(fig1_data), z_star=0.0)


class TestConditionalLaw:
    def test_full_shrinkage_at_A0(self, two_group_data):
        beta = np.array([0.7])
        mean, var = conditional_theta_law(two_group_data, 3, beta, 0.0)
        assert mean == pytest.approx(0.7)
        assert var == 0.0

    def test_no_shrinkage_at_large_A(self, two_group_data):
        mean, var = conditional_theta_law(two_group_data, 2, np.array([5.0]), 1e14)
        assert mean == pytest.approx(float(two_group_data.y[2]), rel=1e-10)
        assert var == pytest.approx(float(two_group_data.V[2]), rel=1e-10)

    def test_half_shrinkage_at_A_equal_V(self):
        data = TwoLevelData([3.0, 1.0], [2.0, 2.0])
        mean, var = conditional_theta_law(data, 0, None, 2.0)
        assert mean == pytest.approx(1.5)  # (1 - 1/2) * 3 + 0
        assert var == pytest.approx(1.0)  # V/2

    def test_vector_version_matches(self, two_group_data):
        beta = np.array([0.4])
        means, variances = conditional_theta_moments(two_group_data, beta, 0.8)
        for i in (0, 5, 9):
            m, v = conditional_theta_law(two_group_data, i, beta, 0.8)
            assert m == means[i] and v == variances[i]

    def test_negative_A_rejected(self, two_group_data):
        with pytest.raises(ValueError):
            conditional_theta_law(two_group_data, 0, np.array([0.0]), -0.5)
