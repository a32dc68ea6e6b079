"""Sensitivity, noise scales, Laplace sampling, and the Gamma decomposition."""

import numpy as np
import pytest
from scipy import stats

from dpmeter.domain import LoadSeries, MeterPanel
from dpmeter.privacy import (
    NoiseScale,
    PrivacyParams,
    gamma_noise_share,
    global_sensitivity,
    laplace_noise,
    noise_scale,
    privatize_aggregate,
)


def panel_from_rows(rows):
    return MeterPanel(
        tuple(LoadSeries(f"m{i}", 0, np.asarray(r, float)) for i, r in enumerate(rows))
    )


class TestParams:
    @pytest.mark.parametrize("eps,gamma", [(0.0, 0.0), (-1.0, 0.0), (1.0, 1.0), (1.0, -0.1)])
    def test_invalid_rejected(self, eps, gamma):
        with pytest.raises(ValueError):
            PrivacyParams(eps, gamma)

    def test_noise_scale_nonnegative(self):
        with pytest.raises(ValueError):
            NoiseScale(-0.1)


class TestSensitivity:
    def test_direct_substitution(self):
        panel = panel_from_rows([[0.1], [0.5], [0.2], [0.9]])
        assert global_sensitivity(panel).delta_f[0] == pytest.approx((0.9 - 0.1) / 4)

    def test_equal_meters_zero(self):
        panel = panel_from_rows([[1.0, 2.0]] * 5)
        np.testing.assert_array_equal(global_sensitivity(panel).delta_f, [0.0, 0.0])

    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(100, 30))
        got = global_sensitivity(panel_from_rows(rows)).delta_f
        for t in range(30):
            col = [rows[m][t] for m in range(100)]
            assert got[t] == pytest.approx((max(col) - min(col)) / 100, rel=1e-12)


class TestNoiseScale:
    def test_discounted_value(self):
        assert noise_scale(1.0, PrivacyParams(0.25, 0.75)).b == 16.0

    def test_reduces_to_plain_dp_bitwise(self):
        for delta, eps in [(2.0, 1.0), (0.37, 0.8), (1e-9, 3.3)]:
            assert noise_scale(delta, PrivacyParams(eps, 0.0)).b == delta / eps

    def test_zero_sensitivity(self):
        assert noise_scale(0.0, PrivacyParams(1.0, 0.5)).b == 0.0

    def test_monotone_in_gamma_and_epsilon(self):
        base = noise_scale(1.0, PrivacyParams(1.0, 0.5)).b
        assert noise_scale(1.0, PrivacyParams(1.0, 0.6)).b >= base
        assert noise_scale(1.0, PrivacyParams(0.5, 0.5)).b >= base


class TestPrivatize:
    def test_huge_epsilon_vanishing_noise(self):
        rng = np.random.default_rng(1)
        panel = panel_from_rows(rng.uniform(0, 2, (10, 96)))
        agg = panel.matrix().sum(axis=0)
        noisy = privatize_aggregate(panel, PrivacyParams(1e12, 0.0), rng_seed=3)
        np.testing.assert_allclose(noisy.values, agg, atol=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        panel = panel_from_rows(rng.uniform(0, 2, (5, 48)))
        params = PrivacyParams(0.5, 0.5)
        a = privatize_aggregate(panel, params, rng_seed=11)
        b = privatize_aggregate(panel, params, rng_seed=11)
        np.testing.assert_array_equal(a.values, b.values)

    def test_laplace_moments(self):
        b = 2.5
        n = 10**5
        draws = laplace_noise(b, n, np.random.default_rng(4))
        assert abs(draws.mean()) < 3 * b / np.sqrt(n) * np.sqrt(2)
        assert draws.var() == pytest.approx(2 * b * b, rel=0.05)

    def test_no_clipping(self):
        panel = panel_from_rows([np.zeros(48), np.full(48, 0.1)])
        noisy = privatize_aggregate(panel, PrivacyParams(0.1, 0.9), rng_seed=7)
        assert np.any(noisy.values < 0)  # strong noise around a ~0.1 aggregate


class TestGammaShares:
    def test_single_meter_is_laplace(self):
        b = NoiseScale(1.5)
        draws = np.array([gamma_noise_share(b, 1, seed)[0] for seed in range(4000)])
        direct = laplace_noise(1.5, 4000, np.random.default_rng(99))
        ks = stats.ks_2samp(draws, direct)
        assert ks.statistic < 0.05

    def test_share_count_and_zero_mean(self):
        shares = gamma_noise_share(NoiseScale(2.0), 50, 5)
        assert shares.shape == (50,)
        many = np.concatenate(
            [gamma_noise_share(NoiseScale(2.0), 50, s) for s in range(200)]
        )
        assert abs(many.mean()) < 0.1

    def test_summed_shares_match_direct_laplace(self):
        b = 1.8
        n_rep = 10**5
        rng = np.random.default_rng(6)
        g1 = rng.gamma(1.0 / 100, b, size=(n_rep, 100))
        g2 = rng.gamma(1.0 / 100, b, size=(n_rep, 100))
        sums = (g1 - g2).sum(axis=1)
        direct = laplace_noise(b, n_rep, np.random.default_rng(7))
        assert stats.ks_2samp(sums, direct).statistic < 0.01

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            gamma_noise_share(NoiseScale(1.0), 0, 0)
        with pytest.raises(ValueError):
            gamma_noise_share(NoiseScale(0.0), 5, 0)
