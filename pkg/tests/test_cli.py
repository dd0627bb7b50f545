"""End-to-end CLI coverage: the full pipeline, determinism, and exit codes.

Runs ``main(argv)`` in-process so coverage and tracebacks stay usable;
one test shells out to confirm the console entry point is wired up.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from convlabel.cli import main


def manifest_core(path):
    """Manifest minus wall time, with the run directory normalized away."""
    text = path.read_text().replace(str(path.parent), "OUT")
    data = json.loads(text)
    data.pop("wall_time_s")
    return data


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One datagen -> train -> predict -> eval chain shared by the read-only tests."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    model = root / "model"
    preds = root / "preds"
    scores = root / "scores"
    assert main(["datagen", "binary", "--n", "12", "--seed", "0", "--out", str(data)]) == 0
    assert (
        main(
            [
                "train",
                "--data", str(data / "dataset.jsonl"),
                "--out", str(model),
                "--tw", "5",
                "--nbar", "3",
                "--iters", "3",
                "--gamma", "0.05",
                "--seed", "0",
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "predict",
                "--data", str(data / "dataset.jsonl"),
                "--model", str(model / "model.json"),
                "--nbar", "3",
                "--out", str(preds),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "eval",
                "--data", str(data / "dataset.jsonl"),
                "--model", str(model / "model.json"),
                "--truth", str(data / "truth.jsonl"),
                "--out", str(scores),
            ]
        )
        == 0
    )
    return {"data": data, "model": model, "preds": preds, "scores": scores}


class TestPipelineOutputs:
    def test_datagen_files(self, pipeline):
        data = pipeline["data"]
        for name in ("dataset.jsonl", "truth.jsonl", "templates.json", "manifest.json"):
            assert (data / name).exists()

    def test_train_files(self, pipeline):
        model = pipeline["model"]
        for name in ("model.json", "trace.json", "manifest.json"):
            assert (model / name).exists()
        assert (model / "figures" / "trace.png").exists()

    def test_trace_length_matches_iters(self, pipeline):
        trace = json.loads((pipeline["model"] / "trace.json").read_text())
        assert trace["iteration"] == 3
        assert len(trace["loglik_trace"]) == 4  # initial value plus one per iteration

    def test_predictions_cover_dataset(self, pipeline):
        lines = (pipeline["preds"] / "predictions.jsonl").read_text().splitlines()
        assert len(lines) == 12
        record = json.loads(lines[0])
        assert set(record) == {"id", "instance_labels", "union", "map", "scores"}
        assert record["map"] is not None  # --nbar was given

    def test_eval_outputs(self, pipeline):
        scores = pipeline["scores"]
        metrics = json.loads((scores / "metrics.json").read_text())
        assert set(metrics) == {"num_signals", "num_classes", "per_class", "aggregate"}
        csv_text = (scores / "metrics.csv").read_text()
        assert csv_text.splitlines()[0] == "class,instance_auc,signal_auc"
        assert (scores / "figures" / "eval_auc.png").exists()

    def test_manifest_fields(self, pipeline):
        manifest = json.loads((pipeline["model"] / "manifest.json").read_text())
        assert manifest["subcommand"] == "train"
        assert manifest["seed"] == 0
        assert manifest["config"]["max_iters"] == 3
        assert str(pipeline["data"] / "dataset.jsonl") in manifest["inputs"]
        assert "version" in manifest
        assert manifest["wall_time_s"] >= 0.0


class TestDeterminism:
    def test_datagen_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["datagen", "binary", "--n", "8", "--seed", "7", "--out", str(out)]) == 0
        for name in ("dataset.jsonl", "truth.jsonl", "templates.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert manifest_core(a / "manifest.json") == manifest_core(b / "manifest.json")

    def test_train_single_thread_byte_identical(self, pipeline, tmp_path):
        data = str(pipeline["data"] / "dataset.jsonl")
        a, b = tmp_path / "a", tmp_path / "b"
        argv = [
            "train", "--data", data, "--tw", "5", "--nbar", "3",
            "--iters", "2", "--seed", "3", "--threads", "1",
        ]
        for out in (a, b):
            assert main(argv + ["--out", str(out)]) == 0
        for name in ("model.json", "trace.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        fig = "figures/trace.png"
        assert (a / fig).read_bytes() == (b / fig).read_bytes()

    def test_threaded_trace_matches_serial(self, pipeline, tmp_path):
        data = str(pipeline["data"] / "dataset.jsonl")
        traces = []
        for threads in ("1", "4"):
            out = tmp_path / f"t{threads}"
            argv = [
                "train", "--data", data, "--tw", "5", "--nbar", "3",
                "--iters", "3", "--seed", "0", "--threads", threads,
                "--out", str(out),
            ]
            assert main(argv) == 0
            traces.append(json.loads((out / "trace.json").read_text())["loglik_trace"])
        serial, threaded = (np.asarray(t) for t in traces)
        assert np.max(np.abs(serial - threaded) / np.abs(serial)) <= 1e-12


class TestBenchCommand:
    def test_quick_grid_outputs(self, tmp_path, monkeypatch):
        # shrink the grid so the smoke test stays fast
        import convlabel.benchmark as benchmark
        import convlabel.cli as cli_mod

        small = benchmark.BenchGrid(instants=(50, 100), set_sizes=(2,), ratios=(0.2,))
        monkeypatch.setattr(cli_mod, "QUICK_GRID", small)
        out = tmp_path / "bench"
        assert main(["bench", "--grid", "quick", "--backends", "chain", "--out", str(out)]) == 0
        rows = (out / "bench.csv").read_text().splitlines()
        assert rows[0] == "backend,instants,set_size,ratio,median_seconds"
        assert len(rows) == 3
        assert (out / "bench.json").exists()
        assert (out / "figures" / "bench_scaling.png").exists()


class TestExitCodes:
    def test_missing_dataset_is_error_not_crash(self, tmp_path, capsys):
        code = main(
            ["train", "--data", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_usage_error_exits_two(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["no-such-command"])
        assert excinfo.value.code == 2

    def test_missing_required_flag_exits_two(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["train", "--data", "x.jsonl"])  # --out omitted
        assert excinfo.value.code == 2


class TestConsoleScript:
    def test_module_invocation(self, tmp_path):
        result = subprocess.run(
            [
                sys.executable, "-m", "convlabel",
                "datagen", "binary", "--n", "2", "--out", str(tmp_path / "d"),
            ],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "wrote" in result.stdout
        assert (tmp_path / "d" / "dataset.jsonl").exists()
