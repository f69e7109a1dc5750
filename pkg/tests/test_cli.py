import json

import pytest

from colliderreg.cli import main, read_results_csv, RESULTS_HEADER

SMOKE_CONFIG = """
[experiment]
name = smoke
seeds = 0
jobs = 1

[generator]
train = 30
semi = 30
validation = 30
test = 30
oracle_test = 40

[models]
theta_multipliers = 1.0
lambda_grid = 0.1
gamma_grid = 0.1
rf_n_estimators = 10
rf_max_depth = 3
rf_min_samples_split = 2
rf_min_samples_leaf = 1

[oracle]
m = 16
n_test = 20
"""


@pytest.fixture()
def smoke_config_path(tmp_path):
    path = tmp_path / "smoke.ini"
    path.write_text(SMOKE_CONFIG)
    return path


class TestSimulateCommand:
    def test_writes_dataset_files(self, smoke_config_path, tmp_path, capsys):
        out = tmp_path / "data"
        assert main(["simulate", str(smoke_config_path), "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {
            "train.csv", "semi.csv", "validation.csv", "test.csv", "oracle_test.csv",
            "latents.csv", "metadata.json",
        }

    def test_byte_identical_across_runs(self, smoke_config_path, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", str(smoke_config_path), "--out", str(a), "--seed-offset", "7"]) == 0
        assert main(["simulate", str(smoke_config_path), "--out", str(b), "--seed-offset", "7"]) == 0
        for name in ("train.csv", "latents.csv", "metadata.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_default_protocol_shapes(self, tmp_path):
        # The headline protocol: d1 = d2 = 3, 50 labeled and 100 unlabeled rows.
        cfg = tmp_path / "default.ini"
        cfg.write_text("[experiment]\nseeds = 0\n")
        out = tmp_path / "data"
        assert main(["simulate", str(cfg), "--out", str(out)]) == 0
        train = (out / "train.csv").read_text().splitlines()
        assert len(train) == 51
        assert len(train[0].split(",")) == 7
        semi = (out / "semi.csv").read_text().splitlines()
        assert len(semi) == 101

    def test_refuses_overwrite_without_flag(self, smoke_config_path, tmp_path):
        out = tmp_path / "data"
        assert main(["simulate", str(smoke_config_path), "--out", str(out)]) == 0
        assert main(["simulate", str(smoke_config_path), "--out", str(out)]) == 3
        assert main(["simulate", str(smoke_config_path), "--out", str(out), "--overwrite"]) == 0


class TestRunCommand:
    def test_smoke_run(self, smoke_config_path, tmp_path, capsys):
        out = tmp_path / "results"
        assert main(["run", str(smoke_config_path), "--out", str(out)]) == 0
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == RESULTS_HEADER
        assert len(lines) == 8  # header + 5 models + 2 gap rows
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["models"]) == {"rf", "p-rf", "krr", "p-krr", "hp-krr"}
        assert summary["wilcoxon_mse"]["order"]
        table = capsys.readouterr().out
        assert "krr" in table

    def test_csv_round_trips_through_reader(self, smoke_config_path, tmp_path):
        out = tmp_path / "results"
        main(["run", str(smoke_config_path), "--out", str(out)])
        rows = read_results_csv(out / "results.csv")
        assert len(rows) == 7
        models = {r.model for r in rows}
        assert "delta-krr" in models

    def test_invalid_model_name_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[models]\nenabled = krr, svm\n")
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "svm" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 2

    def test_overwrite_protection(self, smoke_config_path, tmp_path):
        out = tmp_path / "results"
        assert main(["run", str(smoke_config_path), "--out", str(out)]) == 0
        assert main(["run", str(smoke_config_path), "--out", str(out)]) == 3
        assert main(["run", str(smoke_config_path), "--out", str(out), "--overwrite"]) == 0

    def test_all_seed_failures_exit_4(self, tmp_path, capsys):
        # General-boundary models cannot run on the simple generator, so every
        # (seed, model) row errors out.
        cfg = tmp_path / "broken.ini"
        cfg.write_text(
            "[experiment]\nseeds = 0, 1\n"
            "[generator]\ntrain = 20\nsemi = 0\nvalidation = 20\ntest = 20\noracle_test = 20\n"
            "[models]\nenabled = general-pkrr\n"
            "theta_multipliers = 1.0\nlambda_grid = 0.1\ngamma_grid = 0.1\n"
        )
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 4
        assert "numerical failure" in capsys.readouterr().err


class TestAblateCommand:
    def test_single_value_matches_run(self, smoke_config_path, tmp_path):
        run_out = tmp_path / "run"
        abl_out = tmp_path / "ablate"
        assert main(["run", str(smoke_config_path), "--out", str(run_out)]) == 0
        assert main([
            "ablate", str(smoke_config_path), "--axis", "n_train", "--values", "30",
            "--out", str(abl_out),
        ]) == 0
        run_summary = json.loads((run_out / "summary.json").read_text())
        abl_summary = json.loads((abl_out / "summary_n_train_30.json").read_text())
        for model, stats in run_summary["models"].items():
            assert abl_summary["models"][model]["mse"]["mean"] == stats["mse"]["mean"]
        long_lines = (abl_out / "ablation_n_train.csv").read_text().splitlines()
        assert long_lines[0] == "axis,value,model,metric,mean,std"
        assert any(line.startswith("n_train,30,krr,mse,") for line in long_lines)

    def test_multiple_values(self, smoke_config_path, tmp_path):
        out = tmp_path / "ablate"
        assert main([
            "ablate", str(smoke_config_path), "--axis", "n_semi", "--values", "0,30",
            "--out", str(out),
        ]) == 0
        assert (out / "summary_n_semi_0.json").exists()
        assert (out / "summary_n_semi_30.json").exists()

    def test_dimension_axis(self, smoke_config_path, tmp_path):
        out = tmp_path / "ablate_d2"
        assert main([
            "ablate", str(smoke_config_path), "--axis", "d2", "--values", "1,3",
            "--out", str(out),
        ]) == 0
        lines = (out / "ablation_d2.csv").read_text().splitlines()
        assert any(line.startswith("d2,1,") for line in lines)
        assert any(line.startswith("d2,3,") for line in lines)

    def test_bad_axis_exits_2(self, smoke_config_path, tmp_path):
        # argparse rejects the choice itself; the process exit code is 2
        with pytest.raises(SystemExit) as exc:
            main([
                "ablate", str(smoke_config_path), "--axis", "d1", "--values", "1",
                "--out", str(tmp_path / "o"),
            ])
        assert exc.value.code == 2

    def test_bad_values_exit_2(self, smoke_config_path, tmp_path):
        assert main([
            "ablate", str(smoke_config_path), "--axis", "d2", "--values", "a,b",
            "--out", str(tmp_path / "o"),
        ]) == 2


class TestReportCommand:
    def test_recomputes_summary(self, smoke_config_path, tmp_path):
        out = tmp_path / "results"
        main(["run", str(smoke_config_path), "--out", str(out)])
        assert main(["report", "--results", str(out / "results.csv"), "--overwrite"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["models"]) == {"rf", "p-rf", "krr", "p-krr", "hp-krr"}

    def test_missing_results_exit_2(self, tmp_path):
        assert main(["report", "--results", str(tmp_path / "none.csv")]) == 2


class TestEnvironmentOutputRoot:
    def test_env_var_sets_default_root(self, smoke_config_path, tmp_path, monkeypatch):
        monkeypatch.setenv("COLLIDERREG_OUT", str(tmp_path / "envroot"))
        assert main(["simulate", str(smoke_config_path)]) == 0
        assert (tmp_path / "envroot" / "smoke" / "train.csv").exists()
