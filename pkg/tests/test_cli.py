import numpy as np
import pytest

from cpppkit.cli import main
from cpppkit.reporting import read_json, read_replicate_csv


def run_cli(*args):
    return main(list(args))


def read_no_timing(path):
    doc = read_json(path)
    doc.pop("timing", None)
    return doc


@pytest.fixture
def fast_cppp_args():
    return [
        "model=newcomb",
        "m=1200",
        "burn_in=300",
        "policy=fixed",
        "m_tilde=40",
        "r=25",
        "uncertainty=plugin,normal",
        "b=40",
    ]


class TestPpp:
    def test_writes_report(self, tmp_path):
        code = run_cli("ppp", "--seed", "3", "model=newcomb", "m=800", "burn_in=200", f"out={tmp_path}")
        assert code == 0
        doc = read_json(tmp_path / "ppp.json")
        assert set(doc) >= {"ppp_hat", "k", "m", "ess", "tau", "timing"}
        assert doc["m"] == 800
        assert doc["k"] == round(doc["ppp_hat"] * 800)
        assert "seconds" in doc["timing"]

    def test_deterministic_modulo_timing(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        for out in (a_dir, b_dir):
            assert run_cli("ppp", "--seed", "11", "m=600", "burn_in=100", f"out={out}") == 0
        assert read_no_timing(a_dir / "ppp.json") == read_no_timing(b_dir / "ppp.json")

    def test_missing_data_file_exits_2_without_outputs(self, tmp_path):
        out = tmp_path / "results"
        code = run_cli("ppp", "model=newcomb", "data=/no/such/file.txt", f"out={out}")
        assert code == 2
        assert not (out / "ppp.json").exists()

    def test_chain_dump(self, tmp_path):
        code = run_cli(
            "ppp", "--seed", "5", "m=50", "burn_in=10", "chain_dump=true", f"out={tmp_path}"
        )
        assert code == 0
        lines = (tmp_path / "chain.csv").read_text().strip().splitlines()
        assert lines[0] == "iter,mu,log_sigma,accepted"
        assert len(lines) == 51

    def test_unknown_key_exits_2(self, tmp_path):
        assert run_cli("ppp", "bogus_key=1", f"out={tmp_path}") == 2


class TestCppp:
    def test_report_structure(self, tmp_path, fast_cppp_args):
        code = run_cli("cppp", "--seed", "7", *fast_cppp_args, f"out={tmp_path}")
        assert code == 0
        doc = read_json(tmp_path / "cppp.json")
        assert doc["r"] == 25
        assert len(doc["replicates"]) == 25
        assert doc["policy"]["kind"] == "fixed"
        methods = {entry["method"] for entry in doc["uncertainty"]}
        assert methods == {"plugin", "bootstrap_normal"}
        rows = read_replicate_csv(tmp_path / "replicate.csv")
        assert len(rows) == 25

    def test_csv_json_round_trip(self, tmp_path, fast_cppp_args):
        from cpppkit.calibration import count_threshold

        assert run_cli("cppp", "--seed", "13", *fast_cppp_args, f"out={tmp_path}") == 0
        doc = read_json(tmp_path / "cppp.json")
        rows = read_replicate_csv(tmp_path / "replicate.csv")
        inside = sum(
            1 for row in rows if row["k_tilde"] <= count_threshold(doc["ppp_y"], row["m_tilde"])
        )
        assert doc["cppp"] == pytest.approx(inside / len(rows))

    def test_worker_count_invariance(self, tmp_path, fast_cppp_args):
        a_dir = tmp_path / "w1"
        b_dir = tmp_path / "w8"
        assert run_cli("cppp", "--seed", "17", "--workers", "1", *fast_cppp_args, f"out={a_dir}") == 0
        assert run_cli("cppp", "--seed", "17", "--workers", "8", *fast_cppp_args, f"out={b_dir}") == 0
        assert read_no_timing(a_dir / "cppp.json") == read_no_timing(b_dir / "cppp.json")
        assert (a_dir / "replicate.csv").read_bytes() == (b_dir / "replicate.csv").read_bytes()

    def test_budget_derives_replicates(self, tmp_path, capsys):
        code = run_cli(
            "cppp", "--seed", "19", "model=newcomb", "m=1000", "burn_in=100",
            "policy=fixed", "m_tilde=30", "c=95", f"out={tmp_path}",
        )
        assert code == 0
        doc = read_json(tmp_path / "cppp.json")
        assert doc["r"] == 3
        assert "not divisible" in capsys.readouterr().out

    def test_config_file_with_override(self, tmp_path, fast_cppp_args):
        config = tmp_path / "run.cfg"
        config.write_text(
            "# demo config\nmodel = newcomb\nm = 1200\nburn_in = 300\n"
            "policy = fixed\nm_tilde = 40\nr = 25\nuncertainty = plugin\n"
        )
        out = tmp_path / "results"
        code = run_cli("cppp", "--config", str(config), "--seed", "23", "r=10", f"out={out}")
        assert code == 0
        assert read_json(out / "cppp.json")["r"] == 10


class TestMixingPreset:
    def test_bad_preset_scales_are_detuned_pilot_scales(self, tmp_path):
        from cpppkit.cli import _real_stage
        from cpppkit.config import RunConfig
        from cpppkit.newcomb import NewcombModel, load_newcomb

        model, data = NewcombModel(), load_newcomb()
        stages = {}
        for factor in (1.0, 10.0):
            cfg = RunConfig(mixing="bad", burn_in=300, bad_scale_factor=factor)
            stages[factor] = _real_stage(
                model, data, cfg, 200, np.random.default_rng(5), np.random.default_rng(6)
            )
        ratio = np.array(stages[10.0].proposal_scales) / np.array(stages[1.0].proposal_scales)
        np.testing.assert_allclose(ratio, 10.0, rtol=1e-12)

    def test_bad_preset_degrades_parameter_mixing(self):
        from cpppkit.cli import _real_stage
        from cpppkit.config import RunConfig
        from cpppkit.newcomb import NewcombModel, load_newcomb

        model, data = NewcombModel(), load_newcomb()
        good = _real_stage(
            model, data, RunConfig(mixing="good", burn_in=500), 4000,
            np.random.default_rng(7), np.random.default_rng(8),
        )
        bad = _real_stage(
            model, data, RunConfig(mixing="bad", burn_in=500), 4000,
            np.random.default_rng(7), np.random.default_rng(8),
        )
        assert bad.chain.acceptance_rate < 0.5 * good.chain.acceptance_rate

        def tau_of(x):
            m = x.size
            bs = int(np.sqrt(m))
            nb = m // bs
            used = x[: nb * bs]
            bm = used.reshape(nb, bs).mean(axis=1)
            return bs * np.sum((bm - used.mean()) ** 2) / (nb - 1) / used.var(ddof=1)

        # loose bound: the detuned kernel at least doubles the mu chain's
        # autocorrelation time (calibrated default sits near 5x)
        assert tau_of(bad.chain.draws[:, 0]) > 2.0 * tau_of(good.chain.draws[:, 0])


class TestModelIds:
    def test_simulated_tt_packaged_data(self, tmp_path):
        code = run_cli(
            "ppp", "--seed", "2", "model=simulated_tt", "m=300", "burn_in=100", f"out={tmp_path}"
        )
        assert code == 0
        assert read_json(tmp_path / "ppp.json")["m"] == 300

    def test_dipper_requires_file(self, tmp_path):
        assert run_cli("ppp", "model=dipper_cc", f"out={tmp_path}") == 2

    def test_dipper_cc_runs_on_history_file(self, tmp_path):
        from importlib import resources

        source = resources.files("cpppkit") / "data" / "simulated_tt.txt"
        target = tmp_path / "histories.txt"
        target.write_text(source.read_text())
        out = tmp_path / "results"
        code = run_cli(
            "ppp", "--seed", "4", "model=dipper_cc", f"data={target}",
            "m=300", "burn_in=100", f"out={out}",
        )
        assert code == 0

    def test_ess_target_policy_end_to_end(self, tmp_path):
        code = run_cli(
            "cppp", "--seed", "6", "model=newcomb", "m=1500", "burn_in=300",
            "policy=ess_target", "ess_target=100", "r=10", f"out={tmp_path}",
        )
        assert code == 0
        doc = read_json(tmp_path / "cppp.json")
        assert doc["policy"]["kind"] == "ess_target"
        # every replicate ran some multiple of the extension increment
        assert all(rec["m_tilde"] % 100 == 0 for rec in doc["replicates"])


class TestScenario:
    def test_default_grid_rows(self, tmp_path):
        code = run_cli("scenario", "a=2", "b=2", "cppp=0.2", "c=20000", f"out={tmp_path}")
        assert code == 0
        lines = (tmp_path / "scenario.csv").read_text().strip().splitlines()
        assert lines[0] == "m_tilde,r,ppp_y,abs_bias,se,rmse"
        assert len(lines) == 8

    def test_simulate_columns_agree(self, tmp_path):
        code = run_cli(
            "scenario", "--seed", "29", "a=2", "b=2", "cppp=0.2", "c=5000",
            "m_grid=20,50,100", "simulate=true", "n_outer=2000", f"out={tmp_path}",
        )
        assert code == 0
        lines = (tmp_path / "scenario.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[-2:] == ["emp_abs_bias", "emp_se"]
        for line in lines[1:]:
            rec = dict(zip(header, line.split(",")))
            n_outer = 2000
            se_of_mean = float(rec["emp_se"]) / np.sqrt(n_outer)
            assert abs(float(rec["abs_bias"]) - float(rec["emp_abs_bias"])) <= max(
                3 * se_of_mean, 2e-3
            )

    def test_r_sweep_output(self, tmp_path):
        code = run_cli(
            "scenario", "a=4", "b=2", "cppp=0.2", "c=20000", "m_fixed=100",
            "r_grid=100,500,1000,2000", f"out={tmp_path}",
        )
        assert code == 0
        lines = (tmp_path / "scenario_fixed_m.csv").read_text().strip().splitlines()
        assert lines[0] == "m_tilde,r,abs_bias,se,rmse"
        assert len(lines) == 5

    def test_invalid_shape_exits_2(self, tmp_path):
        assert run_cli("scenario", "a=-1", "b=2", f"out={tmp_path}") == 2


class TestRepeat:
    def test_summary_structure(self, tmp_path, fast_cppp_args):
        code = run_cli("repeat", "--seed", "31", *fast_cppp_args, "n_repeats=3", f"out={tmp_path}")
        assert code == 0
        lines = (tmp_path / "repeat_summary.csv").read_text().strip().splitlines()
        assert lines[0] == "run,cppp_hat,se_plugin,se_mbb,se_normal,ci_lo,ci_hi,covers"
        assert len(lines) == 4
        for line in lines[1:]:
            covers = line.split(",")[-1]
            assert covers in ("0", "1")
        aggregate = read_json(tmp_path / "repeat_aggregate.json")
        assert aggregate["n_repeats"] == 3
        assert 0.0 <= aggregate["coverage"] <= 1.0

    def test_reference_from_config(self, tmp_path, fast_cppp_args):
        code = run_cli(
            "repeat", "--seed", "37", *fast_cppp_args, "n_repeats=2",
            "reference_cppp=0.5", f"out={tmp_path}",
        )
        assert code == 0
        aggregate = read_json(tmp_path / "repeat_aggregate.json")
        assert aggregate["reference_cppp"] == 0.5
        assert aggregate["reference_source"] == "config"

    def test_too_few_repeats(self, tmp_path):
        assert run_cli("repeat", "n_repeats=1", f"out={tmp_path}") == 2


class TestReport:
    def test_export_from_results(self, tmp_path, fast_cppp_args):
        results = tmp_path / "results"
        assert run_cli("cppp", "--seed", "41", *fast_cppp_args, f"out={results}") == 0
        out = tmp_path / "plots"
        code = run_cli("report", str(results), f"out={out}")
        assert code == 0
        hist_lines = (out / "ppp_hist.csv").read_text().strip().splitlines()
        assert hist_lines[0] == "bin_lo,bin_hi,count,ppp_y_marker"
        total = sum(int(line.split(",")[2]) for line in hist_lines[1:])
        assert total == 25
        bar_lines = (out / "errorbar.csv").read_text().strip().splitlines()
        assert bar_lines[0] == "label,method,cppp_hat,se"
        assert len(bar_lines) == 3  # two methods for one results directory

    def test_missing_results_exit_2(self, tmp_path):
        assert run_cli("report", str(tmp_path / "nowhere")) == 2

    def test_no_paths_exit_2(self):
        assert run_cli("report") == 2
