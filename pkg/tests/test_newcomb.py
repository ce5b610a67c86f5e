import numpy as np
import pytest

from cpppkit.newcomb import (
    NormalSample,
    load_real_vector,
    newcomb_discrepancy,
    newcomb_log_posterior,
)


class TestData:
    def test_canonical_file(self, newcomb_data):
        assert len(newcomb_data) == 66
        assert newcomb_data.values.min() == -44.0
        assert newcomb_data.values.mean() == pytest.approx(26.2121, abs=1e-3)

    def test_loader_rejects_garbage(self, tmp_path):
        path = tmp_path / "values.txt"
        path.write_text("1.5\nnot-a-number\n")
        with pytest.raises(ValueError, match="line 2"):
            load_real_vector(path)

    def test_loader_skips_comments(self, tmp_path):
        path = tmp_path / "values.txt"
        path.write_text("# header\n1.0\n\n2.0\n")
        np.testing.assert_array_equal(load_real_vector(path), [1.0, 2.0])


class TestDiscrepancy:
    def test_symmetric_configuration(self):
        # equidistant order statistics around mu cancel exactly
        y = np.concatenate([np.linspace(-10, -1, 33), np.linspace(1, 10, 33)])
        assert newcomb_discrepancy(y, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_direct_evaluation(self):
        y = np.arange(1.0, 67.0)
        assert newcomb_discrepancy(y, 0.0) == pytest.approx(61.0 - 6.0)

    def test_matches_two_line_recomputation(self, newcomb_data):
        mu = 26.0
        ordered = np.sort(newcomb_data.values)
        expected = abs(ordered[60] - mu) - abs(ordered[5] - mu)
        assert newcomb_discrepancy(newcomb_data, mu) == pytest.approx(expected, abs=1e-12)

    def test_short_vector_rejected(self):
        with pytest.raises(ValueError):
            newcomb_discrepancy(np.arange(10.0), 0.0)


class TestLogPosterior:
    def test_location_invariance(self, newcomb_data):
        y = newcomb_data.values
        base = newcomb_log_posterior(26.0, 2.3, y)
        shifted = newcomb_log_posterior(26.0 + 5.0, 2.3, y + 5.0)
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_closed_form_at_zero(self):
        n = 20
        value = newcomb_log_posterior(0.0, 0.0, np.zeros(n))
        assert value == pytest.approx(-0.5 * n * np.log(2 * np.pi), abs=1e-12)

    def test_gradient_matches_finite_differences(self, newcomb_data):
        y = newcomb_data.values
        mu, log_sigma = 20.0, 1.0
        sigma2 = np.exp(2 * log_sigma)
        grad_mu = np.sum(y - mu) / sigma2
        grad_ls = -y.size + np.sum((y - mu) ** 2) / sigma2
        h = 1e-5
        fd_mu = (
            newcomb_log_posterior(mu + h, log_sigma, y)
            - newcomb_log_posterior(mu - h, log_sigma, y)
        ) / (2 * h)
        fd_ls = (
            newcomb_log_posterior(mu, log_sigma + h, y)
            - newcomb_log_posterior(mu, log_sigma - h, y)
        ) / (2 * h)
        assert fd_mu == pytest.approx(grad_mu, rel=1e-5)
        assert fd_ls == pytest.approx(grad_ls, rel=1e-5)

    def test_model_agrees_with_reference_formula(self, newcomb_model, newcomb_data):
        theta = np.array([24.0, 2.5])
        assert newcomb_model.log_posterior(theta, newcomb_data) == pytest.approx(
            newcomb_log_posterior(24.0, 2.5, newcomb_data.values), abs=1e-8
        )


class TestNormalSample:
    def test_caches_order_statistics(self, newcomb_data):
        ordered = np.sort(newcomb_data.values)
        assert newcomb_data.low_stat == ordered[5]
        assert newcomb_data.high_stat == ordered[60]

    def test_short_sample_has_no_order_stats(self):
        sample = NormalSample(np.arange(10.0))
        assert sample.low_stat is None

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            NormalSample(np.array([1.0, np.nan] + [0.0] * 64))

    def test_simulate_matches_length(self, newcomb_model):
        rng = np.random.default_rng(0)
        sample = newcomb_model.simulate_predictive(np.array([0.0, 0.0]), rng)
        assert len(sample) == 66
