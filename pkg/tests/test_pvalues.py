import numpy as np
import pytest

from cpppkit.model import DiscrepancySeries
from cpppkit.pvalues import (
    IndicatorChain,
    count_moments,
    ess_batch_means,
    estimate_ppp,
    indicator_chain,
    ppp_hat,
)


def two_state_chain(m, stay, rng):
    flips = rng.random(m - 1) < (1.0 - stay)
    bits = np.zeros(m, dtype=np.uint8)
    bits[1:] = np.cumsum(flips) % 2
    return bits


class TestIndicatorChain:
    def test_thresholding_with_tie(self):
        series = DiscrepancySeries(np.array([-1.0, 0.0, 2.0, -3.0]))
        np.testing.assert_array_equal(indicator_chain(series).bits, [0, 1, 1, 0])

    def test_all_negative(self):
        series = DiscrepancySeries(-np.arange(1.0, 6.0))
        assert indicator_chain(series).bits.sum() == 0

    def test_sign_flip_complements(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=500)
        values = values[values != 0.0]
        up = indicator_chain(DiscrepancySeries(values)).bits
        down = indicator_chain(DiscrepancySeries(-values)).bits
        assert up.sum() + down.sum() == values.size


class TestPppHat:
    def test_plain(self):
        est = ppp_hat(IndicatorChain(np.array([1, 1, 0, 0])), "plain")
        assert est.value == 0.5
        assert est.k == 2 and est.m == 4

    def test_anti_zero_avoids_zero(self):
        est = ppp_hat(IndicatorChain(np.zeros(100, dtype=int)), "anti_zero")
        assert est.value == pytest.approx(0.5 / 101)
        assert 0.0 < est.value < 1.0

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            ppp_hat(IndicatorChain(np.array([1, 0])), "fancy")

    def test_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            bits = rng.integers(0, 2, size=rng.integers(1, 50))
            for variant in ("plain", "anti_zero"):
                est = ppp_hat(IndicatorChain(bits), variant)
                assert 0.0 <= est.value <= 1.0
                if variant == "anti_zero":
                    assert 0.0 < est.value < 1.0


class TestEssBatchMeans:
    def test_iid_chain_has_full_ess(self):
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, size=100_000)
        est = ess_batch_means(bits)
        assert 0.9 <= est.ess / bits.size <= 1.1

    def test_two_state_chain_matches_analytic_tau(self):
        # symmetric stay-probability s gives lag-1 correlation 2s - 1 and
        # autocorrelation time (1 + rho) / (1 - rho)
        rng = np.random.default_rng(3)
        bits = two_state_chain(100_000, 0.9, rng)
        est = ess_batch_means(bits)
        assert 0.8 * 9.0 <= est.tau <= 1.2 * 9.0

    def test_constant_chain_degenerate(self):
        est = ess_batch_means(np.ones(1000, dtype=int))
        assert est.degenerate
        assert est.ess == 1000.0
        assert est.tau == 1.0

    def test_short_chain_rejected(self):
        with pytest.raises(ValueError):
            ess_batch_means(np.array([0, 1, 0]))

    def test_complement_invariance(self):
        rng = np.random.default_rng(4)
        bits = two_state_chain(5000, 0.8, rng)
        a = ess_batch_means(bits)
        b = ess_batch_means(1 - bits)
        assert a.ess == b.ess and a.tau == b.tau

    def test_tau_clamped_for_antithetic_chain(self):
        bits = np.arange(1000) % 2  # alternating: super-efficient
        est = ess_batch_means(bits)
        assert est.tau == 1.0

    def test_tau_grows_with_block_length(self):
        rng = np.random.default_rng(5)
        taus = []
        for block in (1, 10, 100):
            bits = np.repeat(rng.integers(0, 2, size=100_000 // block), block)
            taus.append(ess_batch_means(bits).tau)
        assert taus[0] < taus[1] < taus[2]


class TestEstimatePpp:
    def test_fills_diagnostics(self):
        rng = np.random.default_rng(6)
        series = DiscrepancySeries(rng.normal(size=2000))
        est = estimate_ppp(series, "plain")
        assert est.ess is not None and est.tau is not None
        assert est.tau >= 1.0
        assert est.value == est.k / est.m


class TestCountMoments:
    def test_binomial_case(self):
        mom = count_moments(0.5, 100, 100.0)
        assert mom.mean == 50.0
        assert mom.variance == 25.0

    def test_inflation(self):
        mom = count_moments(0.5, 100, 25.0)
        assert mom.variance == pytest.approx(100.0)

    def test_degenerate_probability(self):
        assert count_moments(0.0, 50, 50.0).variance == 0.0
        assert count_moments(1.0, 50, 50.0).variance == 0.0

    def test_ess_cannot_exceed_m(self):
        with pytest.raises(ValueError):
            count_moments(0.5, 100, 101.0)
