import csv
import io
import json

import numpy as np
import pytest
import yaml

from concert import cli


def write_config(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


SMALL_SIM = {"regime": "informative_set", "n0": 60, "nk": 40, "K": 2, "p": 25, "s": 4,
             "A_size": 2, "h": 2}


class TestConfig:
    def test_unknown_key_named(self):
        with pytest.raises(cli.ConfigParse, match="fit.max_sweep"):
            cli.resolve_config({"fit": {"max_sweep": 3}})

    def test_invalid_regime_named(self):
        with pytest.raises(cli.ConfigParse, match="simulation.regime"):
            cli.resolve_config({"simulation": {"regime": "bogus"}})

    def test_unknown_grid_key(self):
        with pytest.raises(cli.ConfigParse, match="benchmark.grid.zeta"):
            cli.resolve_config({"benchmark": {"grid": {"zeta": [1]}}})

    def test_defaults_and_digest(self):
        a = cli.resolve_config({})
        b = cli.resolve_config({"seed": 0})
        assert a["fit"]["max_sweeps"] == 500
        assert cli.config_digest(a) == cli.config_digest(b)
        assert cli.config_digest(a) != cli.config_digest(cli.resolve_config({"seed": 1}))

    def test_per_source_priors(self):
        cfg = cli.resolve_config({"priors": {"qk": [0.1, 0.2], "tauk": 3.0}})
        pr = cli.build_priors(cfg, 10, 2)
        assert pr.qk == (0.1, 0.2) and pr.tauk == (3.0, 3.0)
        with pytest.raises(cli.ConfigParse):
            cli.build_priors(cfg, 10, 3)

    def test_main_reports_input_error(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.yaml", {"simulation": {"regime": "bogus"}})
        assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 1
        assert "simulation.regime" in capsys.readouterr().err


class TestSimulate:
    def test_full_size_shapes(self, tmp_path):
        out = tmp_path / "sim"
        assert cli.main(["simulate", "--out", str(out)]) == 0
        files = sorted(p.name for p in out.glob("*.csv"))
        assert len(files) == 11
        target = read_csv(out / "target.csv")
        assert target[0] == ["y"] + [f"x{j}" for j in range(1, 201)]
        assert len(target) - 1 == 150 and len(target[1]) == 201
        source = read_csv(out / "source_10.csv")
        assert len(source) - 1 == 100 and len(source[1]) == 201
        truth = json.loads((out / "truth.json").read_text())
        assert set(truth) >= {"beta0", "betak", "S_true", "Tk_true"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate" and manifest["tool_version"]

    def test_rerun_byte_identical(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"seed": 11, "simulation": SMALL_SIM})
        for name in ("a", "b"):
            assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / name)]) == 0
        for f in ("target.csv", "source_1.csv", "source_2.csv", "truth.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
        mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert ma["config_digest"] == mb["config_digest"]

    def test_csv_round_trip(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"simulation": SMALL_SIM})
        cli.main(["simulate", "--config", path, "--out", str(tmp_path)])
        cfg = cli.resolve_config({"simulation": SMALL_SIM})
        from concert.simgen import generate

        problem, _ = generate(cli.sim_config(cfg))
        d = cli.read_dataset(tmp_path / "source_1.csv", "gaussian")
        assert np.array_equal(d.X, problem.sources[0].X)
        assert np.array_equal(d.y, problem.sources[0].y)


class TestFit:
    @pytest.fixture
    def simulated(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"seed": 3, "simulation": dict(SMALL_SIM, signal=2.0)})
        cli.main(["simulate", "--config", path, "--out", str(tmp_path / "sim")])
        return tmp_path, path

    def test_multi_source_fit_and_elbo_round_trip(self, simulated):
        tmp, cfg = simulated
        sim = tmp / "sim"
        args = [str(sim / "target.csv"), str(sim / "source_1.csv"), str(sim / "source_2.csv")]
        assert cli.main(["fit", "--config", cfg, "--out", str(tmp / "fit"), *args]) == 0
        rec = json.loads((tmp / "fit" / "fit.json").read_text())
        assert rec["K"] == 2 and len(rec["beta_hat"]) == 25
        assert np.array(rec["state"]["gamma"]).shape == (3, 25)
        assert rec["converged"] is True
        again = cli.recompute_elbo(tmp / "fit" / "fit.json", args[0], args[1:])
        assert abs(again - rec["elbo"]) <= 1e-9 * (1 + abs(rec["elbo"]))

    def test_standardized_round_trip(self, simulated, tmp_path):
        tmp, _ = simulated
        cfg = write_config(tmp_path / "s.yaml", {"fit": {"standardize": True}})
        sim = tmp / "sim"
        args = [str(sim / "target.csv"), str(sim / "source_1.csv")]
        assert cli.main(["fit", "--config", cfg, "--out", str(tmp / "fit_s"), *args]) == 0
        rec = json.loads((tmp / "fit_s" / "fit.json").read_text())
        assert rec["standardized"] is True
        again = cli.recompute_elbo(tmp / "fit_s" / "fit.json", args[0], args[1:])
        assert abs(again - rec["elbo"]) <= 1e-9 * (1 + abs(rec["elbo"]))

    def test_target_only(self, simulated):
        tmp, cfg = simulated
        assert cli.main(["fit", "--config", cfg, "--out", str(tmp / "f0"), str(tmp / "sim" / "target.csv")]) == 0
        rec = json.loads((tmp / "f0" / "fit.json").read_text())
        assert rec["K"] == 0 and rec["transferable"] == []
        assert rec["selected_signals"] == [0, 1, 2, 3]

    def test_not_converged_exit_code(self, simulated):
        tmp, _ = simulated
        cfg = write_config(tmp / "n.yaml", {"fit": {"max_sweeps": 1}})
        code = cli.main(["fit", "--config", cfg, "--out", str(tmp / "nc"), str(tmp / "sim" / "target.csv")])
        assert code == 2
        assert json.loads((tmp / "nc" / "fit.json").read_text())["converged"] is False

    def test_threshold_flag(self, simulated):
        tmp, cfg = simulated
        cli.main(["fit", "--config", cfg, "--threshold", "0.999999", "--out", str(tmp / "t"),
                  str(tmp / "sim" / "target.csv")])
        assert json.loads((tmp / "t" / "fit.json").read_text())["threshold"] == 0.999999

    def test_logistic_half_label_names_row(self, tmp_path, capsys):
        data = tmp_path / "t.csv"
        data.write_text("y,x1\n1,0.3\n0,-1.2\n0.5,2.0\n")
        cfg = write_config(tmp_path / "c.yaml", {"family": "logistic"})
        assert cli.main(["fit", "--config", cfg, "--out", str(tmp_path / "o"), str(data)]) == 1
        assert "row 4" in capsys.readouterr().err
        with pytest.raises(cli.SchemaError, match="row 4"):
            cli.read_dataset(data, "logistic")

    @pytest.mark.parametrize("text", ["y,x1\n1,abc\n", "x1,y\n1,2\n", "y,x1\n1,2,3\n", ""])
    def test_schema_errors(self, tmp_path, text):
        data = tmp_path / "bad.csv"
        data.write_text(text)
        with pytest.raises(cli.SchemaError):
            cli.read_dataset(data, "gaussian")

    def test_mismatched_sources(self, tmp_path):
        (tmp_path / "t.csv").write_text("y,x1,x2\n1,0,1\n2,1,0\n")
        (tmp_path / "s.csv").write_text("y,x1\n1,0\n2,1\n")
        code = cli.main(["fit", "--out", str(tmp_path / "o"), str(tmp_path / "t.csv"), str(tmp_path / "s.csv")])
        assert code == 1

    def test_missing_file(self, tmp_path):
        assert cli.main(["fit", "--out", str(tmp_path / "o"), str(tmp_path / "none.csv")]) == 1


BENCH = {
    "seed": 2024,
    "simulation": {"regime": "informative_set", "n0": 50, "nk": 40, "K": 3, "p": 24, "s": 3, "h": 4},
    "benchmark": {"grid": {"A_size": [0, 2, 3]}, "reps": 2, "test_size": 50,
                  "methods": ["concert", "naive_vb", "lasso"], "lasso_folds": 3},
}


class TestBenchmark:
    def test_shapes(self, tmp_path):
        cfg = write_config(tmp_path / "b.yaml", BENCH)
        assert cli.main(["benchmark", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        results = read_csv(tmp_path / "o" / "results.csv")
        assert results[0][:5] == ["grid_index", "rep", "seed", "A_size", "method"]
        assert len(results) - 1 == 3 * 2 * 3
        summary = read_csv(tmp_path / "o" / "summary.csv")
        assert len(summary) - 1 == 3 * 3
        assert "est_error_mean" in summary[0] and "est_error_se" in summary[0]
        assert {row[1] for row in summary[1:]} == {"0", "2", "3"}
        assert (tmp_path / "o" / "timings.csv").exists()

    def test_parallel_rerun_identical(self, tmp_path):
        doc = dict(BENCH, benchmark=dict(BENCH["benchmark"], methods=["concert", "naive_vb"]))
        cfg = write_config(tmp_path / "b.yaml", doc)
        cli.main(["benchmark", "--config", cfg, "--out", str(tmp_path / "a")])
        cli.main(["benchmark", "--config", cfg, "--jobs", "3", "--out", str(tmp_path / "b")])
        for f in ("results.csv", "summary.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_derivation(self):
        s = cli.replication_seed(7, 1, 2)
        assert s == cli.replication_seed(7, 1, 2)
        assert len({s, cli.replication_seed(7, 2, 1), cli.replication_seed(8, 1, 2)}) == 3

    def test_plots(self, tmp_path):
        pytest.importorskip("matplotlib")
        doc = dict(BENCH, benchmark=dict(BENCH["benchmark"], methods=["naive_vb"], plots=True, reps=1))
        cfg = write_config(tmp_path / "b.yaml", doc)
        assert cli.main(["benchmark", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "est_error.png").stat().st_size > 0

    def test_bad_jobs(self, tmp_path):
        assert cli.main(["benchmark", "--jobs", "0", "--out", str(tmp_path)]) == 1


class TestOracleCheck:
    def run(self, doc):
        out = io.StringIO()
        code = cli.cmd_oracle_check(cli.resolve_config(doc), out)
        return code, out.getvalue()

    @staticmethod
    def worst(text):
        line = next(ln for ln in text.splitlines() if ln.startswith("max |gamma"))
        return float(line.split("=")[1].split()[0])

    def test_two_by_two_within_bound(self):
        code, text = self.run({"oracle": {"p": 2, "K": 1}})
        assert code == 0
        assert self.worst(text) <= 0.15

    def test_single_coordinate_exact(self):
        code, text = self.run({"oracle": {"p": 1, "K": 0, "instances": 5}})
        assert code == 0
        assert self.worst(text) < 1e-6

    def test_bound_exceeded(self):
        code, _ = self.run({"oracle": {"p": 3, "K": 1, "gamma_bound": 0.0}})
        assert code == 3

    def test_too_large(self, tmp_path):
        with pytest.raises(cli.TooLarge):
            self.run({"oracle": {"p": 4, "K": 3}})
        cfg = write_config(tmp_path / "o.yaml", {"oracle": {"p": 4, "K": 3}})
        assert cli.main(["oracle-check", "--config", cfg]) == 1

    def test_logistic_rejected(self):
        with pytest.raises(cli.ConfigParse):
            self.run({"family": "logistic"})
