import numpy as np
import pytest

from cpppkit.distributions import BetaParams
from cpppkit.scenarios import (
    ScenarioSpec,
    scenario_bias,
    scenario_grid,
    scenario_ppp_y,
    scenario_r_sweep,
    scenario_simulate,
    scenario_variance,
)


def spec_for(a, b, cppp, budget=20_000, lengths=None):
    kwargs = {} if lengths is None else {"chain_lengths": lengths}
    return ScenarioSpec(null_shape=BetaParams(a, b), cppp_true=cppp, budget=budget, **kwargs)


def variance_se(samples):
    """Delta-method standard error of a sample variance."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    centered = x - x.mean()
    mu2 = np.mean(centered**2)
    mu4 = np.mean(centered**4)
    return np.sqrt(max(mu4 - (n - 3) / (n - 1) * mu2**2, 0.0) / n)


class TestScenarioPppY:
    def test_symmetric_median(self):
        assert scenario_ppp_y(spec_for(2, 2, 0.5)) == pytest.approx(0.5, abs=1e-9)

    def test_closed_form_inverse(self):
        assert scenario_ppp_y(spec_for(2, 2, 0.104)) == pytest.approx(0.2, abs=1e-9)

    def test_uniform_identity(self):
        assert scenario_ppp_y(spec_for(1, 1, 0.37)) == pytest.approx(0.37, abs=1e-12)


class TestScenarioBias:
    def test_uniform_closed_form(self):
        # Beta-Binomial(10, 1, 1) is uniform on 0..10: CDF at 5 is 6/11
        spec = spec_for(1, 1, 0.5, lengths=(10,))
        assert scenario_bias(spec, 10) == pytest.approx(6 / 11 - 0.5, abs=1e-12)

    def test_bias_vanishes_for_long_chains(self):
        spec = spec_for(2, 2, 0.2, budget=200_000, lengths=(100_000,))
        assert abs(scenario_bias(spec, 100_000)) < 0.005

    def test_single_draw_uniform_case(self):
        spec = spec_for(1, 1, 0.5, lengths=(1,))
        assert scenario_bias(spec, 1) == pytest.approx(0.0, abs=1e-12)

    def test_independent_of_r(self):
        spec = spec_for(4, 2, 0.2)
        assert scenario_bias(spec, 50) == scenario_bias(spec, 50)


class TestScenarioVariance:
    def test_uniform_closed_form(self):
        spec = spec_for(1, 1, 0.5, lengths=(10,))
        expected = (6 / 11) * (5 / 11) / 100
        assert scenario_variance(spec, 10, 100) == pytest.approx(expected, abs=1e-12)
        assert np.sqrt(expected) == pytest.approx(0.0498, abs=5e-4)

    def test_exact_one_over_r_scaling(self):
        spec = spec_for(2, 4, 0.2)
        assert scenario_variance(spec, 50, 200) == pytest.approx(
            scenario_variance(spec, 50, 100) / 2, rel=1e-12
        )


class TestScenarioGrid:
    def test_row_structure(self):
        spec = spec_for(2, 2, 0.2)
        result = scenario_grid(spec)
        assert len(result.rows) == 7
        for row in result.rows:
            assert row.r == spec.budget // row.m_tilde
            assert row.rmse**2 == pytest.approx(row.abs_bias**2 + row.se**2, abs=1e-12)

    def test_interior_rmse_minimum(self):
        rows = {row.m_tilde: row for row in scenario_grid(spec_for(2, 2, 0.2)).rows}
        assert rows[100].rmse < rows[10].rmse
        assert rows[100].rmse < rows[1000].rmse

    def test_budget_doubling_scales_se_only(self):
        small = scenario_grid(spec_for(2, 2, 0.2, budget=20_000))
        large = scenario_grid(spec_for(2, 2, 0.2, budget=40_000))
        for a, b in zip(small.rows, large.rows):
            assert b.abs_bias == a.abs_bias
            assert b.se == pytest.approx(a.se / np.sqrt(2), rel=1e-9)

    def test_single_entry_grid(self):
        result = scenario_grid(spec_for(3, 3, 0.3, lengths=(50,)))
        assert len(result.rows) == 1

    def test_r_sweep_constant_bias(self):
        sweep = scenario_r_sweep(spec_for(4, 2, 0.2), 100, (100, 500, 1000, 2000))
        biases = {row.abs_bias for row in sweep.rows}
        assert len(biases) == 1
        ses = [row.se for row in sweep.rows]
        assert all(b < a for a, b in zip(ses, ses[1:]))

    def test_chain_length_cannot_exceed_budget(self):
        with pytest.raises(ValueError):
            spec_for(2, 2, 0.2, budget=500, lengths=(1000,))


class TestScenarioSimulate:
    def test_minimum_outer(self):
        with pytest.raises(ValueError):
            scenario_simulate(spec_for(2, 2, 0.2), 50, 100, 50, np.random.default_rng(0))

    def test_matches_analytic_bias_and_variance(self):
        spec = spec_for(2, 2, 0.2)
        sim = scenario_simulate(spec, 50, 100, 4000, np.random.default_rng(70))
        bias_se = sim.samples.std(ddof=1) / np.sqrt(sim.n_outer)
        assert abs(sim.bias - scenario_bias(spec, 50)) <= 3 * bias_se
        assert abs(sim.variance - scenario_variance(spec, 50, 100)) <= 3 * variance_se(sim.samples)

    def test_degenerate_single_draw(self):
        spec = spec_for(1, 1, 0.5, lengths=(1,))
        sim = scenario_simulate(spec, 1, 100, 2000, np.random.default_rng(71))
        assert abs(sim.bias) <= 3 * sim.samples.std(ddof=1) / np.sqrt(sim.n_outer)
