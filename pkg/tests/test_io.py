"""File formats: round trips, byte stability, malformed-input errors."""

import json

import numpy as np
import pytest

from convlabel import (
    DatasetError,
    ModelParams,
    Signal,
    WeakExample,
    load_dataset,
    load_manifest,
    load_model,
    load_predictions,
    load_templates,
    load_trace,
    load_truth,
    save_dataset,
    save_model,
    save_predictions,
    save_templates,
    save_trace,
    save_truth,
    write_manifest,
)


def sample_examples():
    rng = np.random.default_rng(50)
    return [
        WeakExample(
            Signal(rng.normal(size=(2, 7)), ident="a"), frozenset({1, 3}), cap=4
        ),
        WeakExample(Signal(rng.normal(size=(2, 7)), ident="b"), frozenset()),
    ]


class TestDatasetRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        path = tmp_path / "data.jsonl"
        examples = sample_examples()
        save_dataset(path, examples)
        loaded = load_dataset(path)
        assert len(loaded) == 2
        for orig, back in zip(examples, loaded):
            assert back.signal.ident == orig.signal.ident
            assert np.array_equal(back.signal.samples, orig.signal.samples)
            assert back.label_set == orig.label_set
            assert back.cap == orig.cap

    def test_default_cap_fills_only_missing(self, tmp_path):
        path = tmp_path / "data.jsonl"
        save_dataset(path, sample_examples())
        loaded = load_dataset(path, default_cap=9)
        assert loaded[0].cap == 4  # record's own cap wins
        assert loaded[1].cap == 9

    def test_save_is_byte_stable(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(a, sample_examples())
        save_dataset(b, sample_examples())
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = {"id": "x", "F": 1, "T": 2, "signal": [[0.0, 1.0]], "labels": [1]}
        path.write_text(json.dumps(good) + "\nnot json\n")
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path)

    def test_missing_field_raises(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "x", "F": 1, "T": 3, "labels": []}\n')
        with pytest.raises(DatasetError, match="malformed"):
            load_dataset(path)

    def test_shape_mismatch_raises(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        row = {"id": "x", "F": 2, "T": 3, "signal": [[1.0, 2.0, 3.0]], "labels": []}
        path.write_text(json.dumps(row) + "\n")
        with pytest.raises(DatasetError, match="does not match"):
            load_dataset(path)


class TestModelRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(51)
        params = ModelParams(rng.normal(size=(3, 2, 5)), rng.normal(size=3))
        path = tmp_path / "model.json"
        save_model(path, params)
        back = load_model(path)
        assert np.array_equal(back.words, params.words)
        assert np.array_equal(back.biases, params.biases)

    def test_wrong_word_length_raises(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(
            json.dumps({"C": 1, "F": 1, "Tw": 3, "w": [[1.0, 2.0]], "b": [0.0, 0.0]})
        )
        with pytest.raises(DatasetError, match="expected 2 words"):
            load_model(path)

    def test_invalid_json_raises(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{")
        with pytest.raises(DatasetError, match="invalid JSON"):
            load_model(path)


class TestSidecars:
    def test_truth_round_trip(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        items = [("a", np.array([0, 1, 0, 2])), ("b", np.zeros(3, dtype=np.int64))]
        save_truth(path, items)
        back = load_truth(path)
        assert set(back) == {"a", "b"}
        assert np.array_equal(back["a"], items[0][1])
        assert back["a"].dtype == np.int64

    def test_templates_round_trip(self, tmp_path):
        path = tmp_path / "templates.json"
        templates = [np.arange(6).reshape(2, 3), np.ones((2, 3), dtype=np.int64)]
        save_templates(path, templates)
        back = load_templates(path)
        assert len(back) == 2
        assert np.array_equal(back[0], templates[0])

    def test_predictions_round_trip(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        records = [
            {"id": "a", "instance_labels": [0, 1], "union": [1], "map": [1], "scores": [0.5]},
            {"id": "b", "instance_labels": [0, 0], "union": [], "map": None, "scores": [0.1]},
        ]
        save_predictions(path, records)
        assert load_predictions(path) == records

    def test_trace_round_trip(self, tmp_path):
        path = tmp_path / "trace.json"
        save_trace(path, 7, [-10.5, -9.25, -9.0])
        iteration, trace = load_trace(path)
        assert iteration == 7
        assert trace == [-10.5, -9.25, -9.0]


class TestManifest:
    def test_round_trip_fields(self, tmp_path):
        path = tmp_path / "manifest.json"
        write_manifest(
            path,
            subcommand="train",
            config={"iters": 5, "out": "d"},
            seed=3,
            inputs=["in.jsonl"],
            outputs=["model.json"],
            wall_time_s=1.25,
        )
        back = load_manifest(path)
        assert back["subcommand"] == "train"
        assert back["config"] == {"iters": 5, "out": "d"}
        assert back["seed"] == 3
        assert back["version"]
        assert isinstance(back["wall_time_s"], float)
