import numpy as np
import pytest

from cpppkit.model import EvaluationError
from cpppkit.pvalues import ess_batch_means
from cpppkit.sampling import (
    ChainSpec,
    posterior_predictive_stream,
    run_conjugate_normal,
    run_rw_metropolis,
)


def batch_means_se(series):
    x = np.asarray(series, dtype=float)
    m = x.size
    bs = int(np.sqrt(m))
    nb = m // bs
    means = x[: nb * bs].reshape(nb, bs).mean(axis=1)
    return np.sqrt(bs * np.sum((means - x[: nb * bs].mean()) ** 2) / (nb - 1) / m)


class TestChainSpec:
    def test_zero_iterations_rejected(self):
        with pytest.raises(ValueError):
            ChainSpec(n_iterations=0, proposal_scales=(1.0,))

    def test_zero_scale_rejected(self):
        with pytest.raises(ValueError):
            ChainSpec(n_iterations=10, proposal_scales=(0.0,))

    def test_bad_target_rate_rejected(self):
        with pytest.raises(ValueError):
            ChainSpec(n_iterations=10, proposal_scales=(1.0,), adapt_target_rate=1.5)


class TestRwMetropolis:
    def test_acceptance_rate_at_known_optimum(self, standard_normal_target):
        # for a 1-d standard normal target, scale 2.4 accepts ~44% of moves
        spec = ChainSpec(n_iterations=100_000, proposal_scales=(2.4,), burn_in=500)
        chain = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec, 123)
        assert chain.acceptance_rate == pytest.approx(0.44, abs=0.05)

    def test_moments_within_batch_means_error(self, standard_normal_target):
        spec = ChainSpec(n_iterations=100_000, proposal_scales=(2.4,), burn_in=500)
        chain = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec, 99)
        x = chain.draws[:, 0]
        assert abs(x.mean()) <= 3 * batch_means_se(x)
        sq = (x - x.mean()) ** 2
        assert abs(sq.mean() - 1.0) <= 3 * batch_means_se(sq)

    def test_bit_identical_reproducibility(self, standard_normal_target):
        spec = ChainSpec(n_iterations=500, proposal_scales=(1.5,), burn_in=100, adapt=True)
        a = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec, 7)
        b = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec, 7)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert a.acceptance_rate == b.acceptance_rate
        assert a.final_scales == b.final_scales

    def test_adaptation_frozen_after_burn_in(self, standard_normal_target):
        # lengthening the retained phase must not change its prefix: the
        # kernel is fixed once burn-in ends and the noise stream is shared
        spec_short = ChainSpec(n_iterations=400, proposal_scales=(0.1,), burn_in=300, adapt=True)
        spec_long = ChainSpec(n_iterations=900, proposal_scales=(0.1,), burn_in=300, adapt=True)
        short = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec_short, 11)
        long = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec_long, 11)
        np.testing.assert_array_equal(short.draws, long.draws[:400])
        assert short.final_scales == long.final_scales

    def test_adaptation_moves_toward_target(self, standard_normal_target):
        spec = ChainSpec(
            n_iterations=4000, proposal_scales=(50.0,), burn_in=3000, adapt=True
        )
        chain = run_rw_metropolis(standard_normal_target, None, np.zeros(1), spec, 21)
        assert 0.25 <= chain.acceptance_rate <= 0.6
        assert chain.final_scales[0] < 50.0

    def test_newcomb_posterior_mean_matches_conjugate(self, newcomb_model, newcomb_data):
        spec = ChainSpec(n_iterations=4000, proposal_scales=(1.0, 1.0), burn_in=1000, adapt=True)
        chain = run_rw_metropolis(
            newcomb_model, newcomb_data, newcomb_model.initial_point(newcomb_data), spec, 31
        )
        mu = chain.draws[:, 0]
        # flat prior on (mu, log sigma) makes the posterior mean of mu the sample mean
        assert abs(mu.mean() - newcomb_data.values.mean()) <= 2 * batch_means_se(mu)

    def test_infinite_start_rejected(self, newcomb_model, newcomb_data):
        spec = ChainSpec(n_iterations=10, proposal_scales=(1.0, 1.0))
        with pytest.raises(ValueError):
            run_rw_metropolis(newcomb_model, newcomb_data, np.array([0.0, 400.0]), spec, 0)


class TestConjugateNormal:
    def test_independent_draws_have_full_ess(self, newcomb_data):
        chain = run_conjugate_normal(newcomb_data, 20_000, 17)
        bits = (chain.draws[:, 0] >= np.median(chain.draws[:, 0])).astype(int)
        est = ess_batch_means(bits)
        assert est.ess / len(chain) > 0.8

    def test_two_point_symmetry(self):
        chain = run_conjugate_normal(np.array([-1.0, 1.0]), 40_000, 19)
        mu = chain.draws[:, 0]
        assert abs(mu.mean()) <= 3 * mu.std() / np.sqrt(mu.size)

    def test_agrees_with_metropolis(self, newcomb_model, newcomb_data):
        exact = run_conjugate_normal(newcomb_data, 20_000, 23)
        spec = ChainSpec(n_iterations=20_000, proposal_scales=(1.0, 1.0), burn_in=1000, adapt=True)
        mcmc = run_rw_metropolis(
            newcomb_model, newcomb_data, newcomb_model.initial_point(newcomb_data), spec, 29
        )
        for col in range(2):
            a = exact.draws[:, col]
            b = mcmc.draws[:, col]
            joint_se = np.hypot(a.std() / np.sqrt(a.size), batch_means_se(b))
            assert abs(a.mean() - b.mean()) <= 3 * joint_se

    def test_too_short_data_rejected(self):
        with pytest.raises(ValueError):
            run_conjugate_normal(np.array([1.0]), 100, 0)


class TestPredictiveStream:
    def test_length_one(self, newcomb_model, newcomb_data):
        chain = run_conjugate_normal(newcomb_data, 1, 5)
        series = posterior_predictive_stream(newcomb_model, chain, newcomb_data, 6)
        assert len(series) == 1

    def test_constant_discrepancy_gives_zeros(self, constant_discrepancy_model):
        spec = ChainSpec(n_iterations=50, proposal_scales=(1.0,))
        chain = run_rw_metropolis(constant_discrepancy_model, None, np.zeros(1), spec, 41)
        series = posterior_predictive_stream(constant_discrepancy_model, chain, None, 42)
        assert np.all(series.values == 0.0)

    def test_order_and_length_preserved(self, newcomb_model, newcomb_data):
        chain = run_conjugate_normal(newcomb_data, 250, 43)
        series = posterior_predictive_stream(newcomb_model, chain, newcomb_data, 44)
        assert len(series) == 250

    def test_failure_carries_index(self, newcomb_data):
        from cpppkit.newcomb import NewcombModel

        class FlakyAtIndex(NewcombModel):
            def __init__(self):
                super().__init__()
                self.calls = 0

            def discrepancy(self, data, theta):
                self.calls += 1
                # two discrepancy calls per iteration; poison iteration 2
                if self.calls == 5:
                    return np.nan
                return super().discrepancy(data, theta)

        chain = run_conjugate_normal(newcomb_data, 5, 47)
        with pytest.raises(EvaluationError, match="iteration 2"):
            posterior_predictive_stream(FlakyAtIndex(), chain, newcomb_data, 48)
