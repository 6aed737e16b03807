import gzip
import json
import os
import sys
import tempfile
from unittest.mock import patch

import pytest

from src.my_basisnet.datasets import save_npz, synthetic_shapes
from src.my_basisnet.ledger import RunLedger
from src.my_basisnet.manager import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, cli, main
from src.my_basisnet.serialization import read_header

TRAIN_ARGS = ["--samples", "128", "--epochs", "2", "--lr", "0.02", "--batch-size", "16"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("pipeline")


@pytest.fixture(scope="module")
def base_model(workdir):
    path = workdir / "base.bin"
    assert cli(["train", "--out", str(path), *TRAIN_ARGS]) == EXIT_OK
    return path


@pytest.fixture(scope="module")
def small_model(workdir, base_model):
    path = workdir / "small.bin"
    code = cli(
        [
            "compress", "--model", str(base_model), "--out", str(path),
            "--t-min", "0.5", "--plan-out", str(workdir / "plan.json"),
        ]
    )
    assert code == EXIT_OK
    return path


@pytest.fixture
def temp_db():
    """Create a temporary SQLite database for testing."""
    with tempfile.NamedTemporaryFile(suffix=".db", delete=False) as f:
        db_path = f.name
    yield f"sqlite:///{db_path}"
    if os.path.exists(db_path):
        os.remove(db_path)


class TestUsage:
    def test_no_command(self, capsys):
        assert cli([]) == EXIT_USAGE
        assert "Available commands" in capsys.readouterr().out

    def test_unknown_flag(self, capsys):
        assert cli(["train", "--out", "x.bin", "--bogus"]) == EXIT_USAGE
        assert "usage:" in capsys.readouterr().err

    def test_missing_required_flag(self):
        assert cli(["compress", "--out", "x.bin"]) == EXIT_USAGE

    def test_bad_choice(self):
        assert cli(["compress", "--model", "a", "--out", "b", "--mode", "random"]) == EXIT_USAGE

    def test_threshold_out_of_range(self, capsys, tmp_path):
        code = cli(["compress", "--model", "a", "--out", str(tmp_path / "b"), "--t-min", "1.5"])
        assert code == EXIT_USAGE
        assert "--t-min" in capsys.readouterr().err

    def test_invalid_optimizer_flag(self, tmp_path):
        assert cli(["train", "--out", str(tmp_path / "m.bin"), "--momentum", "1.0"]) == EXIT_USAGE

    def test_dataset_flags_incomplete(self, base_model):
        code = cli(["eval", "--model", str(base_model), "--data", "idx", "--images", "a"])
        assert code == EXIT_USAGE

    def test_bench_repetitions(self, base_model):
        assert cli(["bench", "--model", str(base_model), "--repetitions", "2"]) == EXIT_USAGE

    def test_runs_needs_database(self, capsys):
        assert cli(["runs"]) == EXIT_USAGE
        assert "--db-url" in capsys.readouterr().err

    def test_seed_accepted(self):
        parser = build_parser()
        argvs = [
            ["train", "--out", "o"],
            ["compress", "--model", "m", "--out", "o"],
            ["finetune", "--model", "m", "--out", "o"],
            ["bench", "--model", "m"],
        ]
        for argv in argvs:
            assert parser.parse_args([*argv, "--seed", "7"]).seed == 7

    @pytest.mark.parametrize("flags", [["--samples", "0"], ["--limit", "-1"], ["--limit", "0"]])
    def test_dataset_counts_must_be_positive(self, base_model, flags, capsys):
        assert cli(["eval", "--model", str(base_model), *flags]) == EXIT_USAGE
        assert "❌" in capsys.readouterr().err

    def test_bad_database_url(self, capsys):
        assert cli(["--db-url", "not-a-url", "runs"]) == EXIT_USAGE
        assert "--db-url" in capsys.readouterr().err

    def test_bad_database_url_stops_before_the_run(self, tmp_path):
        out = tmp_path / "m.bin"
        assert cli(["--db-url", "not-a-url", "train", "--out", str(out), "--samples", "8"]) == EXIT_USAGE
        assert not out.exists()

    def test_spatial_excludes_frozen_basis(self, base_model, tmp_path):
        code = cli(
            ["finetune", "--model", str(base_model), "--out", str(tmp_path / "t.bin"),
             "--spatial", "--freeze-basis"]
        )
        assert code == EXIT_USAGE

    def test_main_exits_with_code(self):
        with patch.object(sys, "argv", ["my_basisnet"]):
            with pytest.raises(SystemExit) as err:
                main()
        assert err.value.code == EXIT_USAGE


class TestDataErrors:
    def test_missing_model(self, capsys, tmp_path):
        code = cli(["eval", "--model", str(tmp_path / "absent.bin")])
        assert code == EXIT_DATA
        assert "❌ eval failed" in capsys.readouterr().err

    def test_corrupt_model(self, base_model, tmp_path):
        broken = tmp_path / "broken.bin"
        broken.write_bytes(base_model.read_bytes()[:-3])
        assert cli(["eval", "--model", str(broken)]) == EXIT_DATA

    def test_unreachable_speedup(self, base_model, tmp_path):
        code = cli(
            ["compress", "--model", str(base_model), "--out", str(tmp_path / "c.bin"),
             "--mode", "speedup", "--speedup", "1000"]
        )
        assert code == EXIT_DATA

    def test_finetune_uncompressed(self, base_model, tmp_path):
        code = cli(["finetune", "--model", str(base_model), "--out", str(tmp_path / "t.bin")])
        assert code == EXIT_DATA

    def test_truncated_gzip_images(self, tmp_path, capsys):
        images = tmp_path / "images.gz"
        labels = tmp_path / "labels"
        body = (0x00000803).to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in (4, 28, 28))
        images.write_bytes(gzip.compress(body + bytes(4 * 28 * 28))[:-6])
        labels.write_bytes((0x00000801).to_bytes(4, "big") + (4).to_bytes(4, "big") + bytes(4))
        code = cli(
            ["train", "--network", "mnist", "--out", str(tmp_path / "m.bin"),
             "--data", "idx", "--images", str(images), "--labels", str(labels)]
        )
        assert code == EXIT_DATA
        assert "images.gz" in capsys.readouterr().err

    def test_truncated_npz(self, base_model, tmp_path, capsys):
        path = tmp_path / "data.npz"
        save_npz(synthetic_shapes(16, seed=0), path)
        path.write_bytes(path.read_bytes()[:-40])
        code = cli(["eval", "--model", str(base_model), "--data", "npz", "--images", str(path)])
        assert code == EXIT_DATA
        assert "data.npz" in capsys.readouterr().err

    def test_unreachable_database(self, base_model, tmp_path):
        url = f"sqlite:///{tmp_path / 'missing-dir' / 'runs.db'}"
        assert cli(["--db-url", url, "eval", "--model", str(base_model), "--samples", "8"]) == EXIT_DATA

    def test_class_count_mismatch(self, tmp_path):
        code = cli(["train", "--network", "mnist", "--out", str(tmp_path / "m.bin"), "--samples", "8"])
        assert code == EXIT_DATA


class TestPipeline:
    def test_training_is_reproducible(self, base_model, workdir):
        again = workdir / "again.bin"
        assert cli(["train", "--out", str(again), *TRAIN_ARGS]) == EXIT_OK
        assert again.read_bytes() == base_model.read_bytes()

    def test_compress_and_report_are_reproducible(self, base_model, small_model, workdir, capsys):
        again = workdir / "small-again.bin"
        args = ["compress", "--model", str(base_model), "--out", str(again), "--t-min", "0.5"]
        assert cli(args) == EXIT_OK
        assert again.read_bytes() == small_model.read_bytes()
        reports = []
        for compressed in (small_model, again):
            capsys.readouterr()
            code = cli(
                ["report", "--original", str(base_model), "--compressed", str(compressed),
                 "--json", "--samples", "32"]
            )
            assert code == EXIT_OK
            reports.append(capsys.readouterr().out)
        assert reports[0] == reports[1]

    def test_compress_writes_plan_and_model(self, small_model, workdir, capsys):
        plan = json.loads((workdir / "plan.json").read_text())
        assert plan["policy"] == {"kind": "energy", "value": 0.5}
        assert all(not entry["skip"] for entry in plan["entries"])
        kinds = [layer["kind"] for layer in read_header(small_model)["layers"]]
        assert kinds.count("BasisConv") == 2
        assert "Conv" not in kinds

    def test_finetune_then_report(self, base_model, small_model, workdir, capsys):
        tuned = workdir / "tuned.bin"
        code = cli(
            ["finetune", "--model", str(small_model), "--out", str(tuned),
             "--samples", "128", "--lr", "0.01", "--batch-size", "16"]
        )
        assert code == EXIT_OK
        capsys.readouterr()
        code = cli(
            ["report", "--original", str(base_model), "--compressed", str(tuned),
             "--json", "--samples", "64", "--data-seed", "1"]
        )
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        totals = report["totals"]
        assert totals["flops_reduction_pct"] > 0
        assert totals["speedup_ratio"] == pytest.approx(totals["macs_before"] / totals["macs_after"])
        assert 0.0 <= report["accuracy_before"] <= 1.0
        assert report["flops_convention"] == "mac"

    def test_report_table_to_file(self, base_model, small_model, workdir, capsys):
        out = workdir / "report.txt"
        code = cli(
            ["report", "--original", str(base_model), "--compressed", str(small_model),
             "--no-accuracy", "--flops-convention", "2xmac", "--out", str(out)]
        )
        assert code == EXIT_OK
        text = out.read_text()
        assert text.startswith("FLOPs convention: 2xmac")
        assert "Speedup ratio:" in capsys.readouterr().out
        assert "Accuracy" not in text

    def test_accuracy_mode(self, base_model, workdir):
        code = cli(
            ["compress", "--model", str(base_model), "--out", str(workdir / "acc.bin"),
             "--mode", "accuracy", "--max-drop", "0.05", "--samples", "64"]
        )
        assert code == EXIT_OK

    def test_speedup_mode(self, base_model, workdir, capsys):
        code = cli(
            ["compress", "--model", str(base_model), "--out", str(workdir / "fast.bin"),
             "--mode", "speedup", "--speedup", "1.5"]
        )
        assert code == EXIT_OK
        assert "energy threshold" in capsys.readouterr().out

    def test_full_energy_plan_changes_nothing(self, base_model, workdir, capsys):
        full = workdir / "full.bin"
        plan_path = workdir / "full-plan.json"
        code = cli(
            ["compress", "--model", str(base_model), "--out", str(full),
             "--t-min", "1.0", "--plan-out", str(plan_path)]
        )
        assert code == EXIT_OK
        for entry in json.loads(plan_path.read_text())["entries"]:
            assert entry["chosen_q"] == min(entry["planes"], entry["channels"] * entry["kernel"] ** 2)
            assert entry["energy_t"] == 1.0
        capsys.readouterr()
        code = cli(
            ["report", "--original", str(base_model), "--compressed", str(full),
             "--json", "--samples", "64"]
        )
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["accuracy_drop"] == 0.0
        assert report["totals"]["speedup_ratio"] == 1.0

    def test_spatial_and_spectral_loss_curves(self, base_model, small_model, workdir):
        curves = {}
        for mode, model, extra in (
            ("spatial", base_model, ["--spatial"]),
            ("spectral", small_model, []),
        ):
            path = workdir / f"{mode}-losses.json"
            code = cli(
                ["finetune", "--model", str(model), "--out", str(workdir / f"{mode}.bin"),
                 "--samples", "64", "--epochs", "2", "--batch-size", "16",
                 "--losses-out", str(path), *extra]
            )
            assert code == EXIT_OK
            curves[mode] = json.loads(path.read_text())
        assert curves["spatial"]["mode"] == "spatial"
        assert curves["spectral"]["mode"] == "spectral"
        for curve in curves.values():
            assert len(curve["losses"]) == 2
            assert len(curve["accuracies"]) == 2
        assert curves["spatial"]["ortho_residuals"] == []
        assert len(curves["spectral"]["ortho_residuals"]) == 2
        assert read_header(workdir / "spatial.bin")["layers"] == read_header(base_model)["layers"]

    def test_eval_and_bench(self, small_model, capsys):
        assert cli(["eval", "--model", str(small_model), "--samples", "32"]) == EXIT_OK
        assert "Accuracy on 32 samples" in capsys.readouterr().out
        assert cli(["bench", "--model", str(small_model), "--repetitions", "3"]) == EXIT_OK
        assert "3 runs" in capsys.readouterr().out


class TestLedger:
    def test_runs_are_recorded(self, base_model, temp_db, capsys):
        code = cli(["--db-url", temp_db, "eval", "--model", str(base_model), "--samples", "32"])
        assert code == EXIT_OK
        ledger = RunLedger(temp_db)
        (run,) = ledger.runs()
        ledger.dispose()
        assert run["command"] == "eval"
        assert run["model_path"] == str(base_model)
        assert run["summary"]["samples"] == 32
        capsys.readouterr()
        assert cli(["--db-url", temp_db, "runs", "--filter-command", "eval"]) == EXIT_OK
        assert "eval" in capsys.readouterr().out

    def test_failed_runs_are_not_recorded(self, temp_db, tmp_path):
        assert cli(["--db-url", temp_db, "eval", "--model", str(tmp_path / "absent")]) == EXIT_DATA
        ledger = RunLedger(temp_db)
        assert ledger.count() == 0
        ledger.dispose()

    def test_ledger_failure_does_not_fail_the_run(self, base_model, temp_db, capsys):
        with patch.object(RunLedger, "record", return_value={"success": False, "error": "locked"}):
            code = cli(["--db-url", temp_db, "eval", "--model", str(base_model), "--samples", "8"])
        assert code == EXIT_OK
        assert "Could not record the run: locked" in capsys.readouterr().err
