import json

import pytest

from tabcl.cli import main

from conftest import shifted_cluster_data, write_classification_csv


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli-data")
    ds, _ = shifted_cluster_data(n_id=450, n_ood=50, d=4, seed=300)
    path = tmp / "data.csv"
    write_classification_csv(path, ds.features, ds.labels)
    return path


def run(argv):
    return main([str(a) for a in argv])


class TestStagedPipeline:
    def test_full_stage_chain(self, tmp_path, data_csv, capsys):
        ds_dir = tmp_path / "ds"
        assert run(["ingest", data_csv, "--target", "label", "--out", ds_dir]) == 0
        assert (ds_dir / "data.csv").exists() and (ds_dir / "meta.json").exists()

        det_dir = tmp_path / "det"
        assert run(["detect", ds_dir, "--detector", "openmax", "--norm", "l2",
                    "--tail", 25, "--out", det_dir, "--seed", 1]) == 0
        assert (det_dir / "scores.json").exists()
        assert (det_dir / "histogram.csv").exists()
        hist_lines = (det_dir / "histogram.csv").read_text().strip().splitlines()
        assert hist_lines[0] == "bin_lo,bin_hi,count"
        assert sum(int(ln.split(",")[2]) for ln in hist_lines[1:]) == 500

        split_dir = tmp_path / "split"
        assert run(["split", ds_dir, det_dir / "scores.json",
                    "--quantile", 0.9, "--out", split_dir]) == 0
        meta = json.loads((split_dir / "meta.json").read_text())
        assert meta["m"] + meta["n"] == 500
        assert meta["detector"] == "openmax"

        train_dir = tmp_path / "model"
        assert run(["train", split_dir, "--max-epochs", 5, "--batch-size", 64,
                    "--seed", 2, "--out", train_dir]) == 0
        assert (train_dir / "model.json").exists()
        trace = json.loads((train_dir / "trace.json").read_text())
        assert trace["epochs"] == 5

        embed_dir = tmp_path / "emb"
        assert run(["embed", train_dir / "model.json", ds_dir, "--out", embed_dir]) == 0
        emb_meta = json.loads((embed_dir / "meta.json").read_text())
        assert emb_meta["schema"]["features"][0]["name"] == "e0"

        head_dir = tmp_path / "head"
        assert run(["fit-head", embed_dir, "--kind", "logistic", "--out", head_dir]) == 0
        assert (head_dir / "head.json").exists()

        eval_dir = tmp_path / "eval"
        assert run(["evaluate", head_dir / "head.json", embed_dir, "--out", eval_dir]) == 0
        metrics = json.loads((eval_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert "f1_macro" in metrics

    def test_tradeoff_command(self, capsys):
        assert run(["tradeoff", "--p", 0.831, "--t", 15, "--task", "classification"]) == 0
        out = capsys.readouterr().out
        assert "0.055" in out

    def test_report_and_compare(self, tmp_path, data_csv, capsys):
        plan = {
            "dataset": str(data_csv),
            "target": "label",
            "model_name": "tcl",
            "detector": {"detector": "openmax", "norm": "l2", "tail": 25, "quantile": 0.9},
            "tcl": {"max_epochs": 5, "batch_size": 128},
            "seed": 3,
            "out_dir": str(tmp_path / "exp1"),
        }
        cfg1 = tmp_path / "plan1.json"
        cfg1.write_text(json.dumps(plan))
        assert run(["report", "--config", cfg1]) == 0
        assert (tmp_path / "exp1" / "report.json").exists()
        assert (tmp_path / "exp1" / "report.md").exists()
        assert (tmp_path / "exp1" / "report.csv").exists()

        plan2 = dict(plan, model_name="tcl-mask", out_dir=str(tmp_path / "exp2"),
                     tcl={"max_epochs": 5, "batch_size": 128, "noise": "mask"})
        cfg2 = tmp_path / "plan2.json"
        cfg2.write_text(json.dumps(plan2))
        assert run(["report", "--config", cfg2]) == 0

        assert run(["compare", tmp_path / "exp1" / "report.json",
                    tmp_path / "exp2" / "report.json", "--out", tmp_path / "cmp"]) == 0
        out = capsys.readouterr().out
        assert "| rank | model |" in out
        assert (tmp_path / "cmp" / "comparison.md").exists()


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, data_csv):
        ds_dir = tmp_path / "ds"
        run(["ingest", data_csv, "--target", "label", "--out", ds_dir])
        assert run(["ingest", data_csv, "--target", "nope", "--out", tmp_path / "x"]) == 2
        assert run(["report", "--out", tmp_path / "y"]) == 2  # no --config

    def test_format_error_is_3(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,y\n1,2,0\n3,4\n")
        assert run(["ingest", bad, "--target", "y", "--out", tmp_path / "out"]) == 3

    def test_missing_artifact_is_3(self, tmp_path):
        assert run(["evaluate", tmp_path / "head.json", tmp_path / "nope"]) == 3

    def test_numeric_error_is_4(self, tmp_path, data_csv):
        ds_dir = tmp_path / "ds"
        run(["ingest", data_csv, "--target", "label", "--out", ds_dir])
        assert run(["train", ds_dir, "--max-epochs", 10, "--learning-rate", 50,
                    "--batch-size", 32, "--out", tmp_path / "m"]) == 4

    def test_argparse_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            run(["ingest"])  # missing required csv/--target
        assert exc.value.code == 2

    def test_bad_value_is_2(self, tmp_path, data_csv):
        ds_dir = tmp_path / "ds"
        run(["ingest", data_csv, "--target", "label", "--out", ds_dir])
        assert run(["train", ds_dir, "--batch-size", 1, "--out", tmp_path / "m"]) == 2
